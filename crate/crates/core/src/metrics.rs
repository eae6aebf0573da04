//! Cluster-quality scores against gold clusters.
//!
//! `C` is the predicted partition, `E` the gold partition; both must cover the same
//! elements. Precision is computed on `(C, E)` and recall by swapping the roles.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::hash::Hash;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonicalize::{Cluster, Clustering};
use crate::kb::{GoldClustering, PhraseId};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("no predicted clusters to score")]
    EmptyPrediction,
    #[error("no gold clusters to score against")]
    EmptyGold,
    #[error("{which} contains an empty cluster")]
    EmptyCluster { which: &'static str },
    #[error("{which} lists an element in more than one cluster")]
    DuplicateElement { which: &'static str },
    #[error("predicted and gold clusters cover different elements ({only_predicted} only predicted, {only_gold} only gold)")]
    ElementMismatch { only_predicted: usize, only_gold: usize },
}

/// Harmonic mean; 0 when both inputs are 0.
pub fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) }
}

fn f1_opt(p: Option<f64>, r: Option<f64>) -> Option<f64> {
    Some(f1(p?, r?))
}

fn validate<T: Ord + Clone>(c: &[Vec<T>], e: &[Vec<T>]) -> Result<usize, MetricsError> {
    if c.is_empty() {
        return Err(MetricsError::EmptyPrediction);
    }
    if e.is_empty() {
        return Err(MetricsError::EmptyGold);
    }
    let collect = |parts: &[Vec<T>], which: &'static str| -> Result<BTreeSet<T>, MetricsError> {
        let mut seen = BTreeSet::new();
        for part in parts {
            if part.is_empty() {
                return Err(MetricsError::EmptyCluster { which });
            }
            for x in part {
                if !seen.insert(x.clone()) {
                    return Err(MetricsError::DuplicateElement { which });
                }
            }
        }
        Ok(seen)
    };
    let cs = collect(c, "prediction")?;
    let es = collect(e, "gold")?;
    if cs != es {
        return Err(MetricsError::ElementMismatch {
            only_predicted: cs.difference(&es).count(),
            only_gold: es.difference(&cs).count(),
        });
    }
    Ok(cs.len())
}

/// Index of the `b` part holding each element.
fn membership<T: Hash + Eq>(parts: &[Vec<T>]) -> HashMap<&T, usize> {
    parts
        .iter()
        .enumerate()
        .flat_map(|(k, p)| p.iter().map(move |x| (x, k)))
        .collect()
}

/// Per `a` part, the sizes of its overlaps with `b` parts.
fn overlaps<T: Hash + Eq>(a: &[Vec<T>], b: &[Vec<T>]) -> Vec<BTreeMap<usize, usize>> {
    let of = membership(b);
    a.iter()
        .map(|part| {
            let mut counts = BTreeMap::new();
            for x in part {
                *counts.entry(of[x]).or_insert(0) += 1;
            }
            counts
        })
        .collect()
}

fn macro_precision<T: Hash + Eq>(a: &[Vec<T>], b: &[Vec<T>]) -> f64 {
    let pure = overlaps(a, b).iter().filter(|o| o.len() == 1).count();
    pure as f64 / a.len() as f64
}

fn micro_precision<T: Hash + Eq>(a: &[Vec<T>], b: &[Vec<T>]) -> f64 {
    let n: usize = a.iter().map(Vec::len).sum();
    let hit: usize = overlaps(a, b).iter().map(|o| o.values().max().copied().unwrap_or(0)).sum();
    hit as f64 / n as f64
}

fn pairs(n: usize) -> u64 {
    let n = n as u64;
    n * n.saturating_sub(1) / 2
}

/// Fraction of clusters wholly inside one gold cluster, and its role-swapped recall.
pub fn macro_scores<T: Ord + Hash + Clone>(c: &[Vec<T>], e: &[Vec<T>]) -> Result<(f64, f64), MetricsError> {
    validate(c, e)?;
    Ok((macro_precision(c, e), macro_precision(e, c)))
}

/// Purity of `C` and of `E`.
pub fn micro_scores<T: Ord + Hash + Clone>(c: &[Vec<T>], e: &[Vec<T>]) -> Result<(f64, f64), MetricsError> {
    validate(c, e)?;
    Ok((micro_precision(c, e), micro_precision(e, c)))
}

/// Pair-counting precision and recall. `None` when there are no pairs to divide by.
pub fn pairwise_scores<T: Ord + Hash + Clone>(
    c: &[Vec<T>],
    e: &[Vec<T>],
) -> Result<(Option<f64>, Option<f64>), MetricsError> {
    validate(c, e)?;
    let hits: u64 = overlaps(c, e).iter().flat_map(|o| o.values()).map(|&k| pairs(k)).sum();
    let ratio = |total: u64| (total > 0).then(|| hits as f64 / total as f64);
    let c_pairs = c.iter().map(|p| pairs(p.len())).sum();
    let e_pairs = e.iter().map(|p| pairs(p.len())).sum();
    Ok((ratio(c_pairs), ratio(e_pairs)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub macro_p: f64,
    pub macro_r: f64,
    pub macro_f1: f64,
    pub micro_p: f64,
    pub micro_r: f64,
    pub micro_f1: f64,
    /// `None` when the prediction has no co-clustered pairs.
    pub pair_p: Option<f64>,
    /// `None` when the gold clustering has no co-clustered pairs.
    pub pair_r: Option<f64>,
    pub pair_f1: Option<f64>,
    pub num_clusters: usize,
    pub num_gold_clusters: usize,
    pub num_elements: usize,
}

impl MetricsReport {
    /// Unweighted mean of the three F1 scores; an undefined pairwise F1 counts as 0.
    pub fn mean_f1(&self) -> f64 {
        (self.macro_f1 + self.micro_f1 + self.pair_f1.unwrap_or(0.0)) / 3.0
    }
}

fn pct(x: Option<f64>) -> String {
    match x {
        Some(v) => format!("{:.1}", 100.0 * v),
        None => "n/a".to_string(),
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<10}{:>8}{:>8}{:>8}", "", "P", "R", "F1")?;
        let rows = [
            ("macro", Some(self.macro_p), Some(self.macro_r), Some(self.macro_f1)),
            ("micro", Some(self.micro_p), Some(self.micro_r), Some(self.micro_f1)),
            ("pairwise", self.pair_p, self.pair_r, self.pair_f1),
        ];
        for (name, p, r, f1) in rows {
            writeln!(f, "{:<10}{:>8}{:>8}{:>8}", name, pct(p), pct(r), pct(f1))?;
        }
        write!(
            f,
            "clusters {} / gold {} / elements {}",
            self.num_clusters, self.num_gold_clusters, self.num_elements
        )
    }
}

/// All nine scores plus sizes.
pub fn evaluate<T: Ord + Hash + Clone>(c: &[Vec<T>], e: &[Vec<T>]) -> Result<MetricsReport, MetricsError> {
    let n = validate(c, e)?;
    let (macro_p, macro_r) = (macro_precision(c, e), macro_precision(e, c));
    let (micro_p, micro_r) = (micro_precision(c, e), micro_precision(e, c));
    let (pair_p, pair_r) = pairwise_scores(c, e)?;
    Ok(MetricsReport {
        macro_p,
        macro_r,
        macro_f1: f1(macro_p, macro_r),
        micro_p,
        micro_r,
        micro_f1: f1(micro_p, micro_r),
        pair_p,
        pair_r,
        pair_f1: f1_opt(pair_p, pair_r),
        num_clusters: c.len(),
        num_gold_clusters: e.len(),
        num_elements: n,
    })
}

/// Drop members without a gold label and any clusters left empty. A representative
/// that loses its label is replaced by the smallest surviving member id.
pub fn restrict_to_gold(clustering: &Clustering, gold: &GoldClustering) -> Clustering {
    let clusters = clustering
        .clusters
        .iter()
        .filter_map(|c| {
            let members: Vec<PhraseId> = c.members.iter().copied().filter(|&m| gold.label(m).is_some()).collect();
            let representative = if members.contains(&c.representative) {
                c.representative
            } else {
                *members.first()?
            };
            Some(Cluster { members, representative })
        })
        .collect();
    Clustering {
        kind: clustering.kind,
        clusters,
        threshold_used: clustering.threshold_used,
    }
}

/// Score a clustering against gold on the elements both know about.
pub fn evaluate_clustering(clustering: &Clustering, gold: &GoldClustering) -> Result<MetricsReport, MetricsError> {
    let restricted = restrict_to_gold(clustering, gold);
    let predicted: Vec<Vec<PhraseId>> = restricted.clusters.iter().map(|c| c.members.clone()).collect();
    let ids: BTreeSet<PhraseId> = predicted.iter().flatten().copied().collect();
    let gold_parts = gold.restrict_to_ids(&ids).clusters();
    evaluate(&predicted, &gold_parts)
}
