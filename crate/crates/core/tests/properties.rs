mod common;

use std::collections::{BTreeMap, BTreeSet};

use okbcanon::baselines::{attribute_overlap, jaro_winkler, np_attributes, Attribute};
use okbcanon::canonicalize::{cosine_distance, hac_complete_linkage, read_clusters, write_clusters, Clustering};
use okbcanon::embedding::{load_checkpoint, save_checkpoint, EmbeddingSet, VectorTable};
use okbcanon::kb::{PhraseId, PhraseKind};
use okbcanon::metrics::{evaluate, macro_scores, pairwise_scores};
use okbcanon::side_info::{build_df, idf_overlap_score};
use okbcanon::Parallelism;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random partition of `0..n` into at most `k` non-empty blocks.
fn partition(rng: &mut ChaCha8Rng, n: u32, k: usize) -> Vec<Vec<u32>> {
    let mut blocks: BTreeMap<usize, Vec<u32>> = BTreeMap::new();
    for x in 0..n {
        blocks.entry(rng.random_range(0..k)).or_default().push(x);
    }
    blocks.into_values().collect()
}

fn brute_pairwise(c: &[Vec<u32>], e: &[Vec<u32>]) -> (usize, usize, usize) {
    let label = |p: &[Vec<u32>]| -> BTreeMap<u32, usize> {
        p.iter().enumerate().flat_map(|(i, b)| b.iter().map(move |x| (*x, i))).collect()
    };
    let (lc, le) = (label(c), label(e));
    let xs: Vec<u32> = lc.keys().copied().collect();
    let (mut both, mut in_c, mut in_e) = (0, 0, 0);
    for (i, a) in xs.iter().enumerate() {
        for b in &xs[i + 1..] {
            let sc = lc[a] == lc[b];
            let se = le[a] == le[b];
            in_c += usize::from(sc);
            in_e += usize::from(se);
            both += usize::from(sc && se);
        }
    }
    (both, in_c, in_e)
}

#[test]
fn metric_scores_are_bounded_and_swap_roles() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..300 {
        let n = rng.random_range(1..=60);
        let k = rng.random_range(1..=12);
        let c = partition(&mut rng, n, k);
        let k = rng.random_range(1..=12);
        let e = partition(&mut rng, n, k);
        let ce = evaluate(&c, &e).unwrap();
        let ec = evaluate(&e, &c).unwrap();
        for v in [ce.macro_p, ce.macro_r, ce.micro_p, ce.micro_r, ce.macro_f1, ce.micro_f1] {
            assert!((0.0..=1.0).contains(&v));
        }
        assert_eq!(ce.macro_p, ec.macro_r);
        assert_eq!(ce.macro_r, ec.macro_p);
        assert_eq!(ce.micro_p, ec.micro_r);
        assert_eq!(ce.micro_r, ec.micro_p);
        assert_eq!(ce.pair_p, ec.pair_r);
        assert_eq!(ce.pair_r, ec.pair_p);
    }
}

#[test]
fn pairwise_matches_pair_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let n = rng.random_range(2..=200);
        let k = rng.random_range(1..=30);
        let c = partition(&mut rng, n, k);
        let k = rng.random_range(1..=30);
        let e = partition(&mut rng, n, k);
        let (both, in_c, in_e) = brute_pairwise(&c, &e);
        let (p, r) = pairwise_scores(&c, &e).unwrap();
        assert_eq!(p, (in_c > 0).then(|| both as f64 / in_c as f64));
        assert_eq!(r, (in_e > 0).then(|| both as f64 / in_e as f64));
    }
}

#[test]
fn metrics_ignore_labels_and_ordering() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..100 {
        let n = rng.random_range(1..=40);
        let c = partition(&mut rng, n, 6);
        let e = partition(&mut rng, n, 6);
        let before = evaluate(&c, &e).unwrap();

        let mut relabel: Vec<u32> = (0..n).collect();
        relabel.shuffle(&mut rng);
        let apply = |p: &[Vec<u32>]| -> Vec<Vec<u32>> {
            let mut out: Vec<Vec<u32>> = p.iter().map(|b| b.iter().map(|x| relabel[*x as usize]).collect()).collect();
            out.shuffle(&mut ChaCha8Rng::seed_from_u64(n as u64));
            for b in &mut out {
                b.reverse();
            }
            out
        };
        let after = evaluate(&apply(&c), &apply(&e)).unwrap();
        assert!((before.macro_f1 - after.macro_f1).abs() < 1e-12);
        assert!((before.micro_f1 - after.micro_f1).abs() < 1e-12);
        assert_eq!(before.pair_f1.map(|x| (x * 1e12).round()), after.pair_f1.map(|x| (x * 1e12).round()));
    }
}

#[test]
fn refining_a_clustering_keeps_pure_clusters_and_micro_precision() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let pure = |p: &[Vec<u32>], e: &[Vec<u32>]| {
        p.iter()
            .filter(|b| e.iter().any(|g| b.iter().all(|x| g.contains(x))))
            .count()
    };
    for _ in 0..200 {
        let n = rng.random_range(1..=40);
        let c = partition(&mut rng, n, 5);
        let e = partition(&mut rng, n, 5);
        let finer: Vec<Vec<u32>> = c
            .iter()
            .flat_map(|b| {
                let (l, r): (Vec<u32>, Vec<u32>) = b.iter().partition(|_| rng.random_bool(0.5));
                [l, r]
            })
            .filter(|b| !b.is_empty())
            .collect();
        assert!(pure(&finer, &e) >= pure(&c, &e));
        let coarse = evaluate(&c, &e).unwrap();
        let fine = evaluate(&finer, &e).unwrap();
        assert!(fine.micro_p >= coarse.micro_p);
    }
}

#[test]
fn splitting_an_impure_cluster_can_lower_macro_precision() {
    let e = vec![vec![0, 1, 3], vec![2, 4]];
    let c = vec![vec![0], vec![1, 2, 3, 4]];
    let finer = vec![vec![0], vec![1, 2], vec![3, 4]];
    assert_eq!(macro_scores(&c, &e).unwrap().0, 0.5);
    assert_eq!(macro_scores(&finer, &e).unwrap().0, 1.0 / 3.0);
}

fn random_vectors(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<(PhraseId, Vec<f64>)> {
    (0..n)
        .map(|i| {
            let mut v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            v[0] += 2.5;
            (PhraseId(i as u32), v)
        })
        .collect()
}

fn is_refinement(fine: &[Vec<PhraseId>], coarse: &[Vec<PhraseId>]) -> bool {
    fine.iter().all(|f| coarse.iter().any(|c| f.iter().all(|x| c.contains(x))))
}

#[test]
fn hac_partitions_coarsen_with_threshold() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..50 {
        let n = rng.random_range(1..=40);
        let items = random_vectors(&mut rng, n, 3);
        let view = || items.iter().map(|(i, v)| (*i, v.as_slice()));
        let mut prev: Option<Vec<Vec<PhraseId>>> = None;
        for t in [0.0, 0.001, 0.01, 0.05, 0.1, 0.5, 2.0] {
            let cur = hac_complete_linkage(view(), t, Parallelism::Parallel).unwrap();
            if let Some(p) = &prev {
                assert!(is_refinement(p, &cur));
                assert!(cur.len() <= p.len());
            }
            prev = Some(cur);
        }
        assert_eq!(prev.unwrap().len(), 1);
    }
}

#[test]
fn hac_clusters_respect_the_diameter_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..50 {
        let n = rng.random_range(2..=40);
        let items = random_vectors(&mut rng, n, 4);
        let t = rng.random_range(0.0..0.3);
        let vec_of: BTreeMap<PhraseId, &[f64]> = items.iter().map(|(i, v)| (*i, v.as_slice())).collect();
        let parts = hac_complete_linkage(items.iter().map(|(i, v)| (*i, v.as_slice())), t, Parallelism::Sequential).unwrap();
        for cluster in &parts {
            for a in cluster {
                for b in cluster {
                    assert!(cosine_distance(vec_of[a], vec_of[b]) <= t);
                }
            }
        }
    }
}

#[test]
fn hac_ignores_input_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for _ in 0..50 {
        let n = rng.random_range(1..=40);
        let mut items = random_vectors(&mut rng, n, 2);
        let t = rng.random_range(0.0..0.2);
        let a = hac_complete_linkage(items.iter().map(|(i, v)| (*i, v.as_slice())), t, Parallelism::Sequential).unwrap();
        items.shuffle(&mut rng);
        let b = hac_complete_linkage(items.iter().map(|(i, v)| (*i, v.as_slice())), t, Parallelism::Parallel).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn similarities_are_symmetric_and_bounded() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let words = ["barack obama", "obama", "president obama", "the president", "nyc", "new york", "york", ""];
    for a in words {
        for b in words {
            let s = jaro_winkler(a, b);
            assert!((0.0..=1.0).contains(&s));
            assert_eq!(s, jaro_winkler(b, a));
            assert!((s - strsim::jaro_winkler(a, b)).abs() < 1e-12, "{a:?} {b:?}");
        }
        assert_eq!(jaro_winkler(a, a), 1.0);
    }
    for _ in 0..30 {
        let kb = common::random_kb(&mut rng, 8, 3, 30);
        let df = build_df(&kb);
        let n = kb.num_phrases(PhraseKind::Np) as u32;
        for a in 0..n {
            for b in 0..n {
                let (a, b) = (PhraseId(a), PhraseId(b));
                let s = idf_overlap_score(&kb, a, b, &df);
                assert!((0.0..=1.0).contains(&s));
                assert_eq!(s, idf_overlap_score(&kb, b, a, &df));
                let o = attribute_overlap(a, b, &kb);
                assert!((0.0..=1.0).contains(&o));
                assert_eq!(o, attribute_overlap(b, a, &kb));
            }
        }
    }
}

#[test]
fn attribute_overlap_matches_set_arithmetic() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    for _ in 0..30 {
        let kb = common::random_kb(&mut rng, 6, 3, 25);
        let attrs = np_attributes(&kb);
        let brute = |x: PhraseId| -> BTreeSet<Attribute> {
            let mut out = BTreeSet::new();
            for t in kb.triples() {
                if t.subject == x {
                    out.insert(Attribute::Subject { relation: t.relation, object: t.object });
                }
                if t.object == x {
                    out.insert(Attribute::Object { subject: t.subject, relation: t.relation });
                }
            }
            out
        };
        let n = kb.num_phrases(PhraseKind::Np) as u32;
        for a in 0..n {
            let sa = brute(PhraseId(a));
            assert_eq!(attrs[a as usize], sa);
            for b in 0..n {
                let sb = brute(PhraseId(b));
                let union = sa.union(&sb).count();
                let want = if union == 0 { 0.0 } else { sa.intersection(&sb).count() as f64 / union as f64 };
                assert_eq!(attribute_overlap(PhraseId(a), PhraseId(b), &kb), want);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn checkpoint_round_trips_exactly(seed in any::<u64>(), dim in 1usize..8, values in prop::collection::vec(-1e3f64..1e3, 64)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kb = common::random_kb(&mut rng, 5, 3, 12);
        let table = |n: usize| {
            let rows: Vec<Vec<f64>> = (0..n).map(|i| (0..dim).map(|j| values[(i * dim + j) % values.len()]).collect()).collect();
            VectorTable::from_rows(dim, &rows).unwrap()
        };
        let emb = EmbeddingSet { np: table(kb.num_phrases(PhraseKind::Np)), rel: table(kb.num_phrases(PhraseKind::Rel)) };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.json");
        save_checkpoint(&path, &kb, &emb, seed).unwrap();
        let (back, meta) = load_checkpoint(&path, &kb).unwrap();
        prop_assert_eq!(meta.seed, seed);
        prop_assert_eq!(back, emb);
    }

    #[test]
    fn cluster_files_round_trip(seed in any::<u64>(), k in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kb = common::random_kb(&mut rng, 10, 4, 30);
        for kind in [PhraseKind::Np, PhraseKind::Rel] {
            let n = kb.num_phrases(kind) as u32;
            let groups: Vec<Vec<PhraseId>> = partition(&mut rng, n, k)
                .into_iter()
                .map(|b| b.into_iter().map(PhraseId).collect())
                .collect();
            let clustering = Clustering::from_groups(kind, groups, 0.35, |m| *m.last().unwrap());
            let mut buf = Vec::new();
            write_clusters(&mut buf, &kb, &clustering).unwrap();
            let back = read_clusters(buf.as_slice(), &kb, kind).unwrap();
            prop_assert_eq!(back, clustering);
        }
    }
}
