//! Turning phrase vectors into canonical clusters and rewriting the KB with them.

pub mod hac;

use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use hac::{cosine_distance, hac_complete_linkage, CondensedDistances, Dendrogram, HacError, Merge};

use crate::embedding::VectorTable;
use crate::kb::{GoldClustering, OpenKb, PhraseId, PhraseKind, TripleRecord};
use crate::par::Parallelism;
use crate::metrics::{self, MetricsError, MetricsReport};

#[derive(Debug, Error)]
pub enum CanonError {
    #[error(transparent)]
    Hac(#[from] HacError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("threshold grid is empty")]
    EmptyGrid,
    #[error("threshold {0} is outside [0, 2]")]
    InvalidThreshold(f64),
    #[error("validation gold has no labelled phrases among the clustered items")]
    EmptyValidationGold,
    #[error("{kind} phrase {id} is not covered by the clustering")]
    Uncovered { kind: PhraseKind, id: PhraseId },
    #[error("invalid {kind} clustering: {message}")]
    InvalidPartition { kind: PhraseKind, message: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cluster {
    /// Ascending.
    pub members: Vec<PhraseId>,
    pub representative: PhraseId,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    pub kind: PhraseKind,
    pub clusters: Vec<Cluster>,
    pub threshold_used: f64,
}

impl Clustering {
    /// Build from member groups, choosing each representative with `pick`. Members are
    /// sorted and clusters ordered by their smallest member.
    pub fn from_groups<F>(kind: PhraseKind, groups: Vec<Vec<PhraseId>>, threshold_used: f64, mut pick: F) -> Self
    where
        F: FnMut(&[PhraseId]) -> PhraseId,
    {
        let mut clusters: Vec<Cluster> = groups
            .into_iter()
            .filter(|g| !g.is_empty())
            .map(|mut members| {
                members.sort_unstable();
                members.dedup();
                let representative = pick(&members);
                Cluster { members, representative }
            })
            .collect();
        clusters.sort_by_key(|c| c.members[0]);
        Clustering {
            kind,
            clusters,
            threshold_used,
        }
    }

    /// Every phrase of `kind` in its own cluster.
    pub fn singletons(kb: &OpenKb, kind: PhraseKind) -> Self {
        let groups = kb.vocab(kind).iter().map(|p| vec![p.id]).collect();
        Clustering::from_groups(kind, groups, 0.0, |m| m[0])
    }

    pub fn groups(&self) -> Vec<Vec<PhraseId>> {
        self.clusters.iter().map(|c| c.members.clone()).collect()
    }

    pub fn num_members(&self) -> usize {
        self.clusters.iter().map(|c| c.members.len()).sum()
    }

    /// Representative for each phrase id, indexed by id; `None` where uncovered.
    pub fn representative_index(&self, len: usize) -> Vec<Option<PhraseId>> {
        let mut out = vec![None; len];
        for c in &self.clusters {
            for m in &c.members {
                if let Some(slot) = out.get_mut(m.index()) {
                    *slot = Some(c.representative);
                }
            }
        }
        out
    }

    /// Check the clusters partition `ids` and each representative is a member.
    pub fn validate_over(&self, ids: &BTreeSet<PhraseId>) -> Result<(), CanonError> {
        let bad = |message: String| CanonError::InvalidPartition {
            kind: self.kind,
            message,
        };
        let mut seen = BTreeSet::new();
        for c in &self.clusters {
            if c.members.is_empty() {
                return Err(bad("empty cluster".into()));
            }
            if !c.members.contains(&c.representative) {
                return Err(bad(format!("representative {} is not a member", c.representative)));
            }
            for &m in &c.members {
                if !seen.insert(m) {
                    return Err(bad(format!("phrase {m} appears in two clusters")));
                }
            }
        }
        if let Some(missing) = ids.difference(&seen).next() {
            return Err(CanonError::Uncovered {
                kind: self.kind,
                id: *missing,
            });
        }
        if let Some(extra) = seen.difference(ids).next() {
            return Err(bad(format!("phrase {extra} is not in the phrase set")));
        }
        Ok(())
    }

    /// Check the clusters partition the whole vocabulary of their kind.
    pub fn validate(&self, kb: &OpenKb) -> Result<(), CanonError> {
        let ids = kb.vocab(self.kind).iter().map(|p| p.id).collect();
        self.validate_over(&ids)
    }
}

/// `{0.05, 0.10, ..., 0.95}`.
pub fn default_threshold_grid() -> Vec<f64> {
    (1..20).map(|k| k as f64 / 20.0).collect()
}

fn check_threshold(t: f64) -> Result<(), CanonError> {
    if (0.0..=2.0).contains(&t) {
        Ok(())
    } else {
        Err(CanonError::InvalidThreshold(t))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdChoice {
    pub threshold: f64,
    pub mean_f1: f64,
    /// Validation report per grid value, in ascending threshold order.
    pub scores: Vec<(f64, MetricsReport)>,
}

/// Pick the grid value whose cut scores best on the validation gold by the mean of
/// the three F1 scores; ties go to the smallest threshold.
pub fn choose_threshold(dendrogram: &Dendrogram, gold: &GoldClustering, grid: &[f64]) -> Result<ThresholdChoice, CanonError> {
    if grid.is_empty() {
        return Err(CanonError::EmptyGrid);
    }
    for &t in grid {
        check_threshold(t)?;
    }
    let ids: BTreeSet<PhraseId> = dendrogram.ids.iter().copied().collect();
    let gold = gold.restrict_to_ids(&ids);
    if gold.is_empty() {
        return Err(CanonError::EmptyValidationGold);
    }
    let gold_parts = gold.clusters();
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let mut scores = Vec::with_capacity(sorted.len());
    let mut best: Option<(f64, f64)> = None;
    for t in sorted {
        let predicted: Vec<Vec<PhraseId>> = dendrogram
            .cut(t)
            .into_iter()
            .map(|c| c.into_iter().filter(|&m| gold.label(m).is_some()).collect::<Vec<_>>())
            .filter(|c| !c.is_empty())
            .collect();
        let report = metrics::evaluate(&predicted, &gold_parts)?;
        let mean = report.mean_f1();
        if best.is_none_or(|(_, m)| mean > m) {
            best = Some((t, mean));
        }
        scores.push((t, report));
    }
    let (threshold, mean_f1) = best.expect("grid is non-empty");
    Ok(ThresholdChoice {
        threshold,
        mean_f1,
        scores,
    })
}

/// Member whose vector is most cosine-similar to the frequency-weighted mean of the
/// cluster; ties go to the lexicographically smallest text, then the smallest id.
pub fn select_representative<'a, V, F, T>(members: &[PhraseId], frequency: F, vector: V, text: T) -> PhraseId
where
    V: Fn(PhraseId) -> &'a [f64],
    F: Fn(PhraseId) -> u32,
    T: Fn(PhraseId) -> &'a str,
{
    assert!(!members.is_empty(), "cluster has no members");
    if members.len() == 1 {
        return members[0];
    }
    let dim = vector(members[0]).len();
    let mut mean = vec![0.0; dim];
    let mut total = 0.0;
    for &m in members {
        let f = frequency(m) as f64;
        total += f;
        for (acc, x) in mean.iter_mut().zip(vector(m)) {
            *acc += f * x;
        }
    }
    if total > 0.0 {
        mean.iter_mut().for_each(|x| *x /= total);
    }
    let mean_norm = hac::norm(&mean);
    let similarity = |m: PhraseId| {
        let v = vector(m);
        let n = hac::norm(v) * mean_norm;
        if n > 0.0 {
            v.iter().zip(&mean).map(|(a, b)| a * b).sum::<f64>() / n
        } else {
            0.0
        }
    };
    let scored: Vec<(f64, PhraseId)> = members.iter().map(|&m| (similarity(m), m)).collect();
    let top = scored.iter().map(|(s, _)| *s).fold(f64::NEG_INFINITY, f64::max);
    scored
        .into_iter()
        .filter(|(s, _)| *s == top)
        .map(|(_, m)| m)
        .min_by(|&a, &b| text(a).cmp(text(b)).then(a.cmp(&b)))
        .expect("members is non-empty")
}

/// Most frequent member; ties go to the lexicographically smallest text.
pub fn most_frequent_member(kb: &OpenKb, kind: PhraseKind, members: &[PhraseId]) -> PhraseId {
    *members
        .iter()
        .min_by(|&&a, &&b| {
            let (pa, pb) = (kb.phrase(kind, a), kb.phrase(kind, b));
            pb.frequency.cmp(&pa.frequency).then(pa.text.cmp(&pb.text)).then(a.cmp(&b))
        })
        .expect("cluster has no members")
}

/// How a dendrogram is cut into a flat clustering.
#[derive(Clone, Copy, Debug)]
pub enum ThresholdPolicy<'a> {
    Fixed(f64),
    /// Choose from `grid` on the validation gold with [`choose_threshold`].
    Tuned { gold: &'a GoldClustering, grid: &'a [f64] },
}

/// Cut `dendrogram` according to `policy` and pick representatives with `pick`.
pub fn cut_with_policy<F>(
    kind: PhraseKind,
    dendrogram: &Dendrogram,
    policy: ThresholdPolicy<'_>,
    pick: F,
) -> Result<(Clustering, Option<ThresholdChoice>), CanonError>
where
    F: FnMut(&[PhraseId]) -> PhraseId,
{
    let (threshold, choice) = match policy {
        ThresholdPolicy::Fixed(t) => {
            check_threshold(t)?;
            (t, None)
        }
        ThresholdPolicy::Tuned { gold, grid } => {
            let choice = choose_threshold(dendrogram, gold, grid)?;
            (choice.threshold, Some(choice))
        }
    };
    let clustering = Clustering::from_groups(kind, dendrogram.cut(threshold), threshold, pick);
    Ok((clustering, choice))
}

/// Cosine HAC over one vector per phrase of `kind`, with representatives chosen by
/// closeness to the frequency-weighted cluster mean.
pub fn cluster_embeddings(
    kb: &OpenKb,
    kind: PhraseKind,
    table: &VectorTable,
    policy: ThresholdPolicy<'_>,
    mode: Parallelism,
) -> Result<(Clustering, Option<ThresholdChoice>), CanonError> {
    let dendrogram = Dendrogram::from_vectors(kb.vocab(kind).iter().map(|p| (p.id, table.row(p.id))), mode)?;
    cut_with_policy(kind, &dendrogram, policy, |members| {
        select_representative(
            members,
            |m| kb.phrase(kind, m).frequency,
            |m| table.row(m),
            |m| kb.text(kind, m),
        )
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CanonicalTriple {
    pub triple_id: u64,
    pub subject: PhraseId,
    pub relation: PhraseId,
    pub object: PhraseId,
    /// Another distinct input triple maps to the same canonical triple.
    pub duplicate: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DuplicateGroup {
    pub canonical: (String, String, String),
    pub triple_ids: Vec<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DedupReport {
    pub input_triples: usize,
    pub distinct_input: usize,
    pub distinct_canonical: usize,
    /// Canonical triples reached from two or more distinct input triples.
    pub groups: Vec<DuplicateGroup>,
}

/// Rewrite every triple with its clusters' representatives. Triple ids are kept; all
/// triples are emitted, with collisions flagged and summarised in the report.
pub fn canonicalize_kb(
    kb: &OpenKb,
    np: &Clustering,
    rel: &Clustering,
) -> Result<(Vec<CanonicalTriple>, DedupReport), CanonError> {
    np.validate(kb)?;
    rel.validate(kb)?;
    let np_rep = np.representative_index(kb.num_phrases(PhraseKind::Np));
    let rel_rep = rel.representative_index(kb.num_phrases(PhraseKind::Rel));
    let rep = |table: &[Option<PhraseId>], kind, id: PhraseId| {
        table[id.index()].ok_or(CanonError::Uncovered { kind, id })
    };
    let mut out = Vec::with_capacity(kb.triples().len());
    type Spo = (PhraseId, PhraseId, PhraseId);
    let mut sources: BTreeMap<Spo, BTreeSet<Spo>> = BTreeMap::new();
    for t in kb.triples() {
        let c = CanonicalTriple {
            triple_id: t.triple_id,
            subject: rep(&np_rep, PhraseKind::Np, t.subject)?,
            relation: rep(&rel_rep, PhraseKind::Rel, t.relation)?,
            object: rep(&np_rep, PhraseKind::Np, t.object)?,
            duplicate: false,
        };
        sources
            .entry((c.subject, c.relation, c.object))
            .or_default()
            .insert((t.subject, t.relation, t.object));
        out.push(c);
    }
    let mut groups = Vec::new();
    for c in &mut out {
        c.duplicate = sources[&(c.subject, c.relation, c.object)].len() > 1;
    }
    for (key, origins) in &sources {
        if origins.len() > 1 {
            let triple_ids = out
                .iter()
                .filter(|c| (c.subject, c.relation, c.object) == *key)
                .map(|c| c.triple_id)
                .collect();
            groups.push(DuplicateGroup {
                canonical: (
                    kb.text(PhraseKind::Np, key.0).to_string(),
                    kb.text(PhraseKind::Rel, key.1).to_string(),
                    kb.text(PhraseKind::Np, key.2).to_string(),
                ),
                triple_ids,
            });
        }
    }
    let report = DedupReport {
        input_triples: kb.triples().len(),
        distinct_input: kb.distinct_triples().len(),
        distinct_canonical: sources.len(),
        groups,
    };
    Ok((out, report))
}

/// One line of a cluster file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterRecord {
    pub kind: PhraseKind,
    pub representative: String,
    pub members: Vec<String>,
    pub frequencies: Vec<u32>,
    pub threshold: f64,
}

pub fn write_clusters<W: Write>(mut w: W, kb: &OpenKb, clustering: &Clustering) -> Result<(), CanonError> {
    let kind = clustering.kind;
    for c in &clustering.clusters {
        let record = ClusterRecord {
            kind,
            representative: kb.text(kind, c.representative).to_string(),
            members: c.members.iter().map(|&m| kb.text(kind, m).to_string()).collect(),
            frequencies: c.members.iter().map(|&m| kb.phrase(kind, m).frequency).collect(),
            threshold: clustering.threshold_used,
        };
        serde_json::to_writer(&mut w, &record).map_err(io::Error::from)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Read a cluster file back against the KB it was written for.
pub fn read_clusters<R: BufRead>(reader: R, kb: &OpenKb, kind: PhraseKind) -> Result<Clustering, CanonError> {
    let mut clusters = Vec::new();
    let mut threshold = 0.0;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parse = |message: String| CanonError::Parse { line: lineno, message };
        let rec: ClusterRecord = serde_json::from_str(&line).map_err(|e| parse(e.to_string()))?;
        if rec.kind != kind {
            return Err(parse(format!("expected a {kind} cluster, found {}", rec.kind)));
        }
        let find = |text: &str| kb.lookup(kind, text).ok_or_else(|| parse(format!("unknown {kind} phrase {text:?}")));
        let mut members = rec.members.iter().map(|m| find(m)).collect::<Result<Vec<_>, _>>()?;
        members.sort_unstable();
        let representative = find(&rec.representative)?;
        threshold = rec.threshold;
        clusters.push(Cluster { members, representative });
    }
    let clustering = Clustering {
        kind,
        clusters,
        threshold_used: threshold,
    };
    clustering.validate(kb)?;
    Ok(clustering)
}

/// A triples-file line plus its canonical form.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CanonicalRecord {
    #[serde(flatten)]
    pub record: TripleRecord,
    pub canonical_subject: String,
    pub canonical_relation: String,
    pub canonical_object: String,
    pub canonical_duplicate: bool,
}

pub fn canonical_records(kb: &OpenKb, triples: &[CanonicalTriple]) -> Vec<CanonicalRecord> {
    let by_id: BTreeMap<u64, &CanonicalTriple> = triples.iter().map(|c| (c.triple_id, c)).collect();
    kb.to_records()
        .into_iter()
        .filter_map(|record| {
            let c = by_id.get(&record.triple_id?)?;
            Some(CanonicalRecord {
                record,
                canonical_subject: kb.text(PhraseKind::Np, c.subject).to_string(),
                canonical_relation: kb.text(PhraseKind::Rel, c.relation).to_string(),
                canonical_object: kb.text(PhraseKind::Np, c.object).to_string(),
                canonical_duplicate: c.duplicate,
            })
        })
        .collect()
}

pub fn write_canonical<W: Write>(mut w: W, kb: &OpenKb, triples: &[CanonicalTriple]) -> Result<(), CanonError> {
    for rec in canonical_records(kb, triples) {
        serde_json::to_writer(&mut w, &rec).map_err(io::Error::from)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
