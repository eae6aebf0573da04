//! Comparison systems. All of them produce the same [`Clustering`] type as the main
//! pipeline, so they can be scored and written with the same code.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use petgraph::unionfind::UnionFind;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonicalize::{
    cluster_embeddings, cut_with_policy, most_frequent_member, CanonError, Clustering, CondensedDistances, Dendrogram,
    ThresholdChoice, ThresholdPolicy,
};
use crate::embedding::{
    init_embeddings, phrase_vector, random_embeddings, train, EmbeddingError, EmbeddingSet, HyperParams, WordVectors,
};
use crate::kb::{GoldClustering, OpenKb, PhraseId, PhraseKind};
use crate::par::Parallelism;
use crate::side_info::{
    content_tokens, entity_link_equivalences, normal_forms, DocumentFrequency, EquivalencePairSet, SideInfoCollection,
};

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("baseline {baseline} needs {resource}")]
    MissingResource { baseline: Baseline, resource: &'static str },
    #[error("unknown baseline {0:?}")]
    Unknown(String),
    #[error(transparent)]
    Canon(#[from] CanonError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

/// Jaro similarity over Unicode scalar values.
pub fn jaro(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let window = (a.len().max(b.len()) / 2).saturating_sub(1);
    let mut b_used = vec![false; b.len()];
    let mut a_matched = Vec::new();
    for (i, &ca) in a.iter().enumerate() {
        let lo = i.saturating_sub(window);
        let hi = (i + window + 1).min(b.len());
        if let Some(j) = (lo..hi).find(|&j| !b_used[j] && b[j] == ca) {
            b_used[j] = true;
            a_matched.push(ca);
        }
    }
    let m = a_matched.len();
    if m == 0 {
        return 0.0;
    }
    let b_matched = b.iter().zip(&b_used).filter(|(_, &u)| u).map(|(c, _)| *c);
    let half_transpositions = a_matched.iter().zip(b_matched).filter(|(x, y)| *x != y).count();
    let m = m as f64;
    let t = (half_transpositions / 2) as f64;
    (m / a.len() as f64 + m / b.len() as f64 + (m - t) / m) / 3.0
}

/// Jaro similarity with the Winkler boost for a common prefix of up to 4 characters,
/// scaling 0.1, applied when the Jaro score exceeds 0.7.
pub fn jaro_winkler(a: &str, b: &str) -> f64 {
    let j = jaro(a, b);
    if j <= 0.7 {
        return j;
    }
    let prefix = a.chars().zip(b.chars()).take(4).take_while(|(x, y)| x == y).count();
    (j + 0.1 * prefix as f64 * (1.0 - j)).min(1.0)
}

/// A relation-argument pair seen with an NP, tagged by the NP's position.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Attribute {
    /// `(np, relation, object)`
    Subject { relation: PhraseId, object: PhraseId },
    /// `(subject, relation, np)`
    Object { subject: PhraseId, relation: PhraseId },
}

pub fn np_attributes(kb: &OpenKb) -> Vec<BTreeSet<Attribute>> {
    let mut out = vec![BTreeSet::new(); kb.num_phrases(PhraseKind::Np)];
    for t in kb.distinct_triples() {
        out[t.subject.index()].insert(Attribute::Subject {
            relation: t.relation,
            object: t.object,
        });
        out[t.object.index()].insert(Attribute::Object {
            subject: t.subject,
            relation: t.relation,
        });
    }
    out
}

/// Argument pairs of each relation phrase, the relation-side analogue of NP attributes.
pub fn rel_attributes(kb: &OpenKb) -> Vec<BTreeSet<(PhraseId, PhraseId)>> {
    let mut out = vec![BTreeSet::new(); kb.num_phrases(PhraseKind::Rel)];
    for t in kb.distinct_triples() {
        out[t.relation.index()].insert((t.subject, t.object));
    }
    out
}

/// `|A ∩ B| / |A ∪ B|`, 0 when both are empty.
pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let inter = a.intersection(b).count();
    if inter == 0 {
        return 0.0;
    }
    inter as f64 / (a.len() + b.len() - inter) as f64
}

/// Jaccard overlap of the attribute sets of two NPs.
pub fn attribute_overlap(a: PhraseId, b: PhraseId, kb: &OpenKb) -> f64 {
    let attrs = |n: PhraseId| -> BTreeSet<Attribute> {
        let mut set = BTreeSet::new();
        for t in kb.distinct_triples() {
            if t.subject == n {
                set.insert(Attribute::Subject {
                    relation: t.relation,
                    object: t.object,
                });
            }
            if t.object == n {
                set.insert(Attribute::Object {
                    subject: t.subject,
                    relation: t.relation,
                });
            }
        }
        set
    };
    jaccard(&attrs(a), &attrs(b))
}

/// Average of the phrase's known word vectors, or a seeded random vector when none of
/// its tokens is known.
pub fn wordvec_phrase_embedding(text: &str, vectors: &WordVectors, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    phrase_vector(text, Some(vectors), vectors.dim(), &mut rng)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    Morph,
    Ppdb,
    Entlink,
    IdfHac,
    StrsimHac,
    AttrHac,
    WordvecAvg,
    HoleRandom,
    HolePretrained,
}

impl Baseline {
    pub const ALL: [Baseline; 9] = [
        Baseline::Morph,
        Baseline::Ppdb,
        Baseline::Entlink,
        Baseline::IdfHac,
        Baseline::StrsimHac,
        Baseline::AttrHac,
        Baseline::WordvecAvg,
        Baseline::HoleRandom,
        Baseline::HolePretrained,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Baseline::Morph => "morph",
            Baseline::Ppdb => "ppdb",
            Baseline::Entlink => "entlink",
            Baseline::IdfHac => "idf_hac",
            Baseline::StrsimHac => "strsim_hac",
            Baseline::AttrHac => "attr_hac",
            Baseline::WordvecAvg => "wordvec_avg",
            Baseline::HoleRandom => "hole_random",
            Baseline::HolePretrained => "hole_pretrained",
        }
    }

    /// Whether the method cuts a dendrogram and so takes a threshold.
    pub fn uses_threshold(self) -> bool {
        !matches!(self, Baseline::Morph | Baseline::Ppdb | Baseline::Entlink)
    }
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Baseline {
    type Err = BaselineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Baseline::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| BaselineError::Unknown(s.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    pub name: Baseline,
    /// Fixed NP cut; tuned on validation when absent.
    #[serde(default)]
    pub np_threshold: Option<f64>,
    /// Fixed relation cut; tuned on validation when absent.
    #[serde(default)]
    pub rel_threshold: Option<f64>,
}

impl BaselineConfig {
    pub fn new(name: Baseline) -> Self {
        BaselineConfig {
            name,
            np_threshold: None,
            rel_threshold: None,
        }
    }
}

/// Everything a baseline may draw on besides the KB itself.
#[derive(Clone, Copy, Debug)]
pub struct BaselineInputs<'a> {
    pub side: Option<&'a SideInfoCollection>,
    pub word_vectors: Option<&'a WordVectors>,
    pub hyper: &'a HyperParams,
    pub np_validation: Option<&'a GoldClustering>,
    pub rel_validation: Option<&'a GoldClustering>,
    pub grid: &'a [f64],
    /// Cut used when no threshold is configured and there is no validation gold.
    pub fallback_threshold: f64,
    pub mode: Parallelism,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineOutput {
    pub np: Clustering,
    pub rel: Clustering,
    pub np_choice: Option<ThresholdChoice>,
    pub rel_choice: Option<ThresholdChoice>,
    /// Trained or averaged vectors for the embedding-based methods.
    pub embeddings: Option<EmbeddingSet>,
}

fn policy<'a>(fixed: Option<f64>, gold: Option<&'a GoldClustering>, inputs: &BaselineInputs<'a>) -> ThresholdPolicy<'a> {
    match (fixed, gold) {
        (Some(t), _) => ThresholdPolicy::Fixed(t),
        (None, Some(g)) if !g.is_empty() => ThresholdPolicy::Tuned { gold: g, grid: inputs.grid },
        _ => ThresholdPolicy::Fixed(inputs.fallback_threshold),
    }
}

/// Connected components of `pairs` over the whole vocabulary of `kind`.
pub fn components(kb: &OpenKb, kind: PhraseKind, pairs: Option<&EquivalencePairSet>) -> Clustering {
    let n = kb.num_phrases(kind);
    let mut uf = UnionFind::<usize>::new(n);
    if let Some(set) = pairs {
        for (a, b) in set.pairs() {
            uf.union(a.index(), b.index());
        }
    }
    let mut groups: BTreeMap<usize, Vec<PhraseId>> = BTreeMap::new();
    for p in kb.vocab(kind) {
        groups.entry(uf.find(p.id.index())).or_default().push(p.id);
    }
    Clustering::from_groups(kind, groups.into_values().collect(), 0.0, |m| most_frequent_member(kb, kind, m))
}

fn morph_clustering(kb: &OpenKb, kind: PhraseKind) -> Clustering {
    let mut groups: BTreeMap<String, Vec<PhraseId>> = BTreeMap::new();
    for (p, form) in kb.vocab(kind).iter().zip(normal_forms(kb, kind)) {
        groups.entry(form).or_default().push(p.id);
    }
    Clustering::from_groups(kind, groups.into_values().collect(), 0.0, |m| most_frequent_member(kb, kind, m))
}

fn similarity_hac<F>(
    kb: &OpenKb,
    kind: PhraseKind,
    similarity: F,
    policy: ThresholdPolicy<'_>,
    mode: Parallelism,
) -> Result<(Clustering, Option<ThresholdChoice>), CanonError>
where
    F: Fn(usize, usize) -> f64 + Sync + Send,
{
    let ids: Vec<PhraseId> = kb.vocab(kind).iter().map(|p| p.id).collect();
    let dist = CondensedDistances::from_fn(ids.len(), mode, |i, j| 1.0 - similarity(i, j));
    let dendrogram = Dendrogram::build(ids, dist, None)?;
    cut_with_policy(kind, &dendrogram, policy, |m| most_frequent_member(kb, kind, m))
}

fn text_df(kb: &OpenKb, kind: PhraseKind) -> (Vec<BTreeSet<String>>, DocumentFrequency) {
    let tokens: Vec<BTreeSet<String>> = kb.vocab(kind).iter().map(|p| content_tokens(&p.text)).collect();
    let mut df: BTreeMap<String, u32> = BTreeMap::new();
    for t in tokens.iter().flatten() {
        *df.entry(t.clone()).or_insert(0) += 1;
    }
    (tokens, DocumentFrequency::from_counts(df))
}

/// HolE training with every side-information weight at zero, as used by the
/// `hole_*` baselines.
pub fn structure_only_embeddings(
    kb: &OpenKb,
    hyper: &HyperParams,
    word_vectors: Option<&WordVectors>,
) -> Result<EmbeddingSet, EmbeddingError> {
    let h = hyper.clone().without_side_info();
    let init = match word_vectors {
        Some(wv) => init_embeddings(kb, Some(wv), h.dim, h.seed)?,
        None => random_embeddings(kb, h.dim, h.seed),
    };
    Ok(train(kb, &SideInfoCollection::default(), &h, init)?.embeddings)
}

pub fn run_baseline(cfg: &BaselineConfig, kb: &OpenKb, inputs: &BaselineInputs<'_>) -> Result<BaselineOutput, BaselineError> {
    let missing = |resource| BaselineError::MissingResource {
        baseline: cfg.name,
        resource,
    };
    let np_policy = policy(cfg.np_threshold, inputs.np_validation, inputs);
    let rel_policy = policy(cfg.rel_threshold, inputs.rel_validation, inputs);
    let plain = |np, rel| BaselineOutput {
        np,
        rel,
        np_choice: None,
        rel_choice: None,
        embeddings: None,
    };
    let out = match cfg.name {
        Baseline::Morph => plain(morph_clustering(kb, PhraseKind::Np), morph_clustering(kb, PhraseKind::Rel)),
        Baseline::Ppdb => {
            let side = inputs.side.ok_or_else(|| missing("side information with a ppdb source"))?;
            let find = |kind| side.sources(kind).iter().find(|s| s.source_name == "ppdb");
            if find(PhraseKind::Np).is_none() && find(PhraseKind::Rel).is_none() {
                return Err(missing("side information with a ppdb source"));
            }
            plain(
                components(kb, PhraseKind::Np, find(PhraseKind::Np)),
                components(kb, PhraseKind::Rel, find(PhraseKind::Rel)),
            )
        }
        Baseline::Entlink => {
            let links = entity_link_equivalences(kb);
            plain(components(kb, PhraseKind::Np, Some(&links)), components(kb, PhraseKind::Rel, None))
        }
        Baseline::IdfHac => {
            let (np_tok, np_df) = text_df(kb, PhraseKind::Np);
            let (rel_tok, rel_df) = text_df(kb, PhraseKind::Rel);
            let np = similarity_hac(kb, PhraseKind::Np, |i, j| np_df.overlap(&np_tok[i], &np_tok[j]), np_policy, inputs.mode)?;
            let rel = similarity_hac(kb, PhraseKind::Rel, |i, j| rel_df.overlap(&rel_tok[i], &rel_tok[j]), rel_policy, inputs.mode)?;
            BaselineOutput {
                np: np.0,
                rel: rel.0,
                np_choice: np.1,
                rel_choice: rel.1,
                embeddings: None,
            }
        }
        Baseline::StrsimHac => {
            let lower = |kind: PhraseKind| -> Vec<String> { kb.vocab(kind).iter().map(|p| p.text.to_lowercase()).collect() };
            let (np_text, rel_text) = (lower(PhraseKind::Np), lower(PhraseKind::Rel));
            let np = similarity_hac(kb, PhraseKind::Np, |i, j| jaro_winkler(&np_text[i], &np_text[j]), np_policy, inputs.mode)?;
            let rel = similarity_hac(kb, PhraseKind::Rel, |i, j| jaro_winkler(&rel_text[i], &rel_text[j]), rel_policy, inputs.mode)?;
            BaselineOutput {
                np: np.0,
                rel: rel.0,
                np_choice: np.1,
                rel_choice: rel.1,
                embeddings: None,
            }
        }
        Baseline::AttrHac => {
            let (na, ra) = (np_attributes(kb), rel_attributes(kb));
            let np = similarity_hac(kb, PhraseKind::Np, |i, j| jaccard(&na[i], &na[j]), np_policy, inputs.mode)?;
            let rel = similarity_hac(kb, PhraseKind::Rel, |i, j| jaccard(&ra[i], &ra[j]), rel_policy, inputs.mode)?;
            BaselineOutput {
                np: np.0,
                rel: rel.0,
                np_choice: np.1,
                rel_choice: rel.1,
                embeddings: None,
            }
        }
        Baseline::WordvecAvg | Baseline::HoleRandom | Baseline::HolePretrained => {
            let emb = match cfg.name {
                Baseline::WordvecAvg => {
                    let wv = inputs.word_vectors.ok_or_else(|| missing("word vectors"))?;
                    init_embeddings(kb, Some(wv), wv.dim(), inputs.hyper.seed)?
                }
                Baseline::HoleRandom => structure_only_embeddings(kb, inputs.hyper, None)?,
                _ => {
                    let wv = inputs.word_vectors.ok_or_else(|| missing("word vectors"))?;
                    structure_only_embeddings(kb, inputs.hyper, Some(wv))?
                }
            };
            let (np, np_choice) = cluster_embeddings(kb, PhraseKind::Np, &emb.np, np_policy, inputs.mode)?;
            let (rel, rel_choice) = cluster_embeddings(kb, PhraseKind::Rel, &emb.rel, rel_policy, inputs.mode)?;
            BaselineOutput {
                np,
                rel,
                np_choice,
                rel_choice,
                embeddings: Some(emb),
            }
        }
    };
    Ok(out)
}
