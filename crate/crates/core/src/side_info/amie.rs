//! Mutual implication rules between relation phrases.
//!
//! Arguments are first collapsed by morphological normal form. For an ordered pair
//! `(r, r')`, support counts the distinct canonical `(x, y)` argument pairs seen with
//! both relations and confidence divides that by the number of pairs seen with `r`.
//! Two relations are equivalent when `r => r'` and `r' => r` both clear the thresholds.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::kb::{OpenKb, PhraseId, PhraseKind};

use super::morph::normal_forms;
use super::EquivalencePairSet;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RuleStats {
    pub support: usize,
    pub confidence: f64,
}

/// Distinct canonical argument pairs per relation.
pub fn argument_pairs(kb: &OpenKb) -> Vec<BTreeSet<(u32, u32)>> {
    let forms = normal_forms(kb, PhraseKind::Np);
    let mut canon: HashMap<&str, u32> = HashMap::new();
    let canon_id: Vec<u32> = forms
        .iter()
        .map(|f| {
            let n = canon.len() as u32;
            *canon.entry(f.as_str()).or_insert(n)
        })
        .collect();
    let mut pairs = vec![BTreeSet::new(); kb.num_phrases(PhraseKind::Rel)];
    for t in kb.distinct_triples() {
        pairs[t.relation.index()].insert((canon_id[t.subject.index()], canon_id[t.object.index()]));
    }
    pairs
}

/// Statistics of every rule `r => r'` with non-zero support.
pub fn rule_stats(kb: &OpenKb) -> BTreeMap<(PhraseId, PhraseId), RuleStats> {
    let pairs = argument_pairs(kb);
    let mut rels_by_pair: HashMap<(u32, u32), Vec<u32>> = HashMap::new();
    for (r, ps) in pairs.iter().enumerate() {
        for &p in ps {
            rels_by_pair.entry(p).or_default().push(r as u32);
        }
    }
    let mut support: BTreeMap<(u32, u32), usize> = BTreeMap::new();
    for rels in rels_by_pair.values() {
        for &a in rels {
            for &b in rels {
                if a != b {
                    *support.entry((a, b)).or_insert(0) += 1;
                }
            }
        }
    }
    support
        .into_iter()
        .map(|((a, b), s)| {
            let conf = s as f64 / pairs[a as usize].len() as f64;
            (
                (PhraseId(a), PhraseId(b)),
                RuleStats {
                    support: s,
                    confidence: conf,
                },
            )
        })
        .collect()
}

pub fn amie_mine(kb: &OpenKb, support_min: usize, confidence_min: f64) -> EquivalencePairSet {
    let stats = rule_stats(kb);
    let passes = |k: &(PhraseId, PhraseId)| {
        stats
            .get(k)
            .is_some_and(|s| s.support >= support_min && s.confidence >= confidence_min)
    };
    let mut set = EquivalencePairSet::new("amie", PhraseKind::Rel);
    for &(a, b) in stats.keys() {
        if a < b && passes(&(a, b)) && passes(&(b, a)) {
            set.insert(a, b);
        }
    }
    set
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::TripleRecord;

    fn kb(triples: &[(&str, &str, &str)]) -> OpenKb {
        OpenKb::from_records(triples.iter().map(|(s, p, o)| TripleRecord::new(s, p, o))).unwrap()
    }

    #[test]
    fn mutual_rule_found() {
        let kb = kb(&[("a", "r1", "b"), ("a", "r2", "b"), ("c", "r1", "d"), ("c", "r2", "d")]);
        let r1 = kb.lookup(PhraseKind::Rel, "r1").unwrap();
        let r2 = kb.lookup(PhraseKind::Rel, "r2").unwrap();
        let stats = rule_stats(&kb);
        assert_eq!(stats[&(r1, r2)], RuleStats { support: 2, confidence: 1.0 });
        assert_eq!(stats[&(r2, r1)], RuleStats { support: 2, confidence: 1.0 });
        let set = amie_mine(&kb, 2, 0.2);
        assert_eq!(set.len(), 1);
        assert!(set.contains(r1, r2));
    }

    #[test]
    fn support_below_threshold() {
        let kb1 = kb(&[("a", "r1", "b"), ("a", "r2", "b")]);
        assert!(amie_mine(&kb1, 2, 0.2).is_empty());

        let mut ts: Vec<(String, String)> = (0..10).map(|i| (format!("x{i}"), format!("y{i}"))).collect();
        ts.push(("x0".into(), "y0".into()));
        let mut recs: Vec<TripleRecord> = ts[..10].iter().map(|(x, y)| TripleRecord::new(x, "r1", y)).collect();
        recs.push(TripleRecord::new("x0", "r2", "y0"));
        let kb2 = OpenKb::from_records(recs).unwrap();
        assert!(amie_mine(&kb2, 2, 0.2).is_empty());
    }

    #[test]
    fn arguments_are_morph_canonicalized() {
        let kb = kb(&[("The Cities", "r1", "b"), ("city", "r2", "b"), ("Cats", "r1", "dog"), ("cat", "r2", "dogs")]);
        let r1 = kb.lookup(PhraseKind::Rel, "r1").unwrap();
        let r2 = kb.lookup(PhraseKind::Rel, "r2").unwrap();
        assert!(amie_mine(&kb, 2, 0.2).contains(r1, r2));
    }
}
