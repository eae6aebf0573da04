//! Complete-linkage agglomerative clustering over a condensed distance matrix.
//!
//! Items are sorted by id and addressed by rank ("slot"). A merged cluster keeps the
//! smaller slot, so a cluster's slot is always the rank of its smallest member. Each
//! step merges the pair with the smallest key `(distance, lower slot, upper slot)`.
//!
//! Every active slot caches its nearest neighbour under that key. Complete linkage only
//! ever grows distances, so after a merge only rows that pointed at one of the merged
//! slots need a rescan, plus a cheap check of whether the merged slot now wins a tie.
//! Typical cost is O(n²) time and n²/2 doubles of memory.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kb::PhraseId;
use crate::par::{self, Parallelism};

#[derive(Debug, Error, PartialEq)]
pub enum HacError {
    #[error("phrase {0} has a zero or non-finite vector; cosine distance is undefined")]
    ZeroVector(PhraseId),
    #[error("vectors have inconsistent dimensions")]
    DimensionMismatch,
    #[error("duplicate phrase id {0}")]
    DuplicateId(PhraseId),
    #[error("distance between slots {0} and {1} is not finite")]
    NonFiniteDistance(usize, usize),
}

/// Upper triangle (i < j) of a symmetric distance matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CondensedDistances {
    n: usize,
    data: Vec<f64>,
}

fn tri_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

impl CondensedDistances {
    /// Fill from `f(i, j)` for every `i < j`. Rows are filled in parallel when asked.
    pub fn from_fn<F>(n: usize, mode: Parallelism, f: F) -> Self
    where
        F: Fn(usize, usize) -> f64 + Sync + Send,
    {
        let rows: Vec<Vec<f64>> = par::map_range(n, mode, |i| ((i + 1)..n).map(|j| f(i, j)).collect());
        let mut data = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for r in rows {
            data.extend(r);
        }
        CondensedDistances { n, data }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match i.cmp(&j) {
            Ordering::Equal => 0.0,
            Ordering::Less => self.data[tri_index(self.n, i, j)],
            Ordering::Greater => self.data[tri_index(self.n, j, i)],
        }
    }

    fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = if i < j { tri_index(self.n, i, j) } else { tri_index(self.n, j, i) };
        self.data[k] = v;
    }
}

pub fn norm(v: &[f64]) -> f64 {
    squared_norm(v).sqrt()
}

fn squared_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

// Taking one square root of the product keeps identical vectors at distance exactly 0.
fn cosine_distance_with_norms(a: &[f64], b: &[f64], sqa: f64, sqb: f64) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    1.0 - (dot / (sqa * sqb).sqrt()).clamp(-1.0, 1.0)
}

/// `1 − cos(a, b)`, in `[0, 2]`.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    cosine_distance_with_norms(a, b, squared_norm(a), squared_norm(b))
}

/// Sort `(id, vector)` items by id and check they are usable for cosine clustering.
pub fn prepare<'a, I>(items: I) -> Result<(Vec<PhraseId>, Vec<&'a [f64]>), HacError>
where
    I: IntoIterator<Item = (PhraseId, &'a [f64])>,
{
    let mut items: Vec<(PhraseId, &[f64])> = items.into_iter().collect();
    items.sort_by_key(|(id, _)| *id);
    if let Some(w) = items.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(HacError::DuplicateId(w[0].0));
    }
    let dim = items.first().map(|(_, v)| v.len()).unwrap_or(0);
    for (id, v) in &items {
        if v.len() != dim {
            return Err(HacError::DimensionMismatch);
        }
        let n = norm(v);
        if n == 0.0 || !n.is_finite() {
            return Err(HacError::ZeroVector(*id));
        }
    }
    Ok(items.into_iter().unzip())
}

/// Cosine distances between sorted, validated vectors.
pub fn cosine_matrix(vectors: &[&[f64]], mode: Parallelism) -> CondensedDistances {
    let norms: Vec<f64> = vectors.iter().map(|v| squared_norm(v)).collect();
    CondensedDistances::from_fn(vectors.len(), mode, |i, j| {
        cosine_distance_with_norms(vectors[i], vectors[j], norms[i], norms[j])
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    /// Surviving slot (the smaller one).
    pub into: usize,
    /// Slot absorbed into `into`.
    pub from: usize,
    pub distance: f64,
}

/// Merge history over items sorted by id. Merge distances are non-decreasing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub ids: Vec<PhraseId>,
    pub merges: Vec<Merge>,
}

#[derive(Clone, Copy, Debug)]
struct Key {
    d: f64,
    lo: usize,
    hi: usize,
}

impl Key {
    fn new(d: f64, a: usize, b: usize) -> Self {
        Key {
            d,
            lo: a.min(b),
            hi: a.max(b),
        }
    }

    fn cmp(&self, other: &Key) -> Ordering {
        self.d
            .total_cmp(&other.d)
            .then(self.lo.cmp(&other.lo))
            .then(self.hi.cmp(&other.hi))
    }
}

impl Dendrogram {
    /// Agglomerate until the next merge would exceed `ceiling` (or to a single
    /// cluster when `ceiling` is `None`). `ids` must be sorted and match `dist`.
    pub fn build(ids: Vec<PhraseId>, mut dist: CondensedDistances, ceiling: Option<f64>) -> Result<Self, HacError> {
        let n = ids.len();
        assert_eq!(n, dist.len(), "ids and distance matrix disagree");
        debug_assert!(ids.windows(2).all(|w| w[0] < w[1]));
        for i in 0..n {
            for j in i + 1..n {
                if !dist.get(i, j).is_finite() {
                    return Err(HacError::NonFiniteDistance(i, j));
                }
            }
        }
        let mut active = vec![true; n];
        let mut nn: Vec<Option<Key>> = vec![None; n];
        let scan = |i: usize, active: &[bool], dist: &CondensedDistances| -> Option<Key> {
            let mut best: Option<Key> = None;
            for j in (0..n).filter(|&j| j != i && active[j]) {
                let k = Key::new(dist.get(i, j), i, j);
                if best.is_none_or(|b| k.cmp(&b) == Ordering::Less) {
                    best = Some(k);
                }
            }
            best
        };
        for (i, slot) in nn.iter_mut().enumerate() {
            *slot = scan(i, &active, &dist);
        }
        let mut merges = Vec::with_capacity(n.saturating_sub(1));
        loop {
            let best = (0..n)
                .filter(|&i| active[i])
                .filter_map(|i| nn[i])
                .min_by(|a, b| a.cmp(b));
            let Some(best) = best else { break };
            if ceiling.is_some_and(|c| best.d > c) {
                break;
            }
            let (lo, hi) = (best.lo, best.hi);
            merges.push(Merge {
                into: lo,
                from: hi,
                distance: best.d,
            });
            active[hi] = false;
            nn[hi] = None;
            for k in (0..n).filter(|&k| active[k] && k != lo) {
                let merged = dist.get(lo, k).max(dist.get(hi, k));
                dist.set(lo, k, merged);
            }
            nn[lo] = scan(lo, &active, &dist);
            for k in (0..n).filter(|&k| active[k] && k != lo) {
                match nn[k] {
                    Some(key) if key.lo == lo || key.hi == lo || key.lo == hi || key.hi == hi => {
                        nn[k] = scan(k, &active, &dist);
                    }
                    Some(key) => {
                        // the merged slot may now tie with a larger-indexed neighbour
                        let cand = Key::new(dist.get(lo, k), lo, k);
                        if cand.cmp(&key) == Ordering::Less {
                            nn[k] = Some(cand);
                        }
                    }
                    None => nn[k] = scan(k, &active, &dist),
                }
            }
        }
        Ok(Dendrogram { ids, merges })
    }

    /// Full dendrogram of cosine distances between `(id, vector)` items.
    pub fn from_vectors<'a, I>(items: I, mode: Parallelism) -> Result<Self, HacError>
    where
        I: IntoIterator<Item = (PhraseId, &'a [f64])>,
    {
        let (ids, vectors) = prepare(items)?;
        let dist = cosine_matrix(&vectors, mode);
        Dendrogram::build(ids, dist, None)
    }

    /// Apply every merge with distance `<= threshold`. Clusters are returned with
    /// members ascending, ordered by smallest member.
    pub fn cut(&self, threshold: f64) -> Vec<Vec<PhraseId>> {
        let n = self.ids.len();
        let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for m in self.merges.iter().take_while(|m| m.distance <= threshold) {
            let moved = std::mem::take(&mut members[m.from]);
            members[m.into].extend(moved);
        }
        members
            .into_iter()
            .filter(|c| !c.is_empty())
            .map(|mut c| {
                c.sort_unstable();
                c.into_iter().map(|s| self.ids[s]).collect()
            })
            .collect()
    }
}

/// Complete-linkage HAC over cosine distance, merging while the closest pair of
/// clusters is within `threshold`.
pub fn hac_complete_linkage<'a, I>(items: I, threshold: f64, mode: Parallelism) -> Result<Vec<Vec<PhraseId>>, HacError>
where
    I: IntoIterator<Item = (PhraseId, &'a [f64])>,
{
    let (ids, vectors) = prepare(items)?;
    let dist = cosine_matrix(&vectors, mode);
    Ok(Dendrogram::build(ids, dist, Some(threshold))?.cut(f64::INFINITY))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: &[[f64; 2]]) -> Vec<(PhraseId, Vec<f64>)> {
        v.iter().enumerate().map(|(i, p)| (PhraseId(i as u32), p.to_vec())).collect()
    }

    fn run(items: &[(PhraseId, Vec<f64>)], t: f64) -> Vec<Vec<PhraseId>> {
        hac_complete_linkage(items.iter().map(|(i, v)| (*i, v.as_slice())), t, Parallelism::Sequential).unwrap()
    }

    fn ids(v: &[u32]) -> Vec<PhraseId> {
        v.iter().map(|&i| PhraseId(i)).collect()
    }

    #[test]
    fn condensed_indexing() {
        let d = CondensedDistances::from_fn(5, Parallelism::Parallel, |i, j| (10 * i + j) as f64);
        for i in 0..5 {
            for j in 0..5 {
                let want = if i == j { 0.0 } else { (10 * i.min(j) + i.max(j)) as f64 };
                assert_eq!(d.get(i, j), want);
            }
        }
    }

    #[test]
    fn boundaries() {
        let items = pts(&[[1.0, 0.0], [0.0, 1.0], [-1.0, 0.2], [0.5, 0.5]]);
        assert_eq!(run(&items, 0.0).len(), 4);
        assert_eq!(run(&items, 2.0), vec![ids(&[0, 1, 2, 3])]);
    }

    #[test]
    fn two_tight_pairs() {
        // within-pair cosine distance 0.01, across pairs about 0.8
        let rot = |deg: f64| [deg.to_radians().cos(), deg.to_radians().sin()];
        let within = (1.0f64 - 0.01).acos().to_degrees();
        let across = (1.0f64 - 0.8).acos().to_degrees();
        let items = pts(&[rot(0.0), rot(within), rot(within + across), rot(2.0 * within + across)]);
        assert!((cosine_distance(&items[0].1, &items[1].1) - 0.01).abs() < 1e-9);
        assert_eq!(run(&items, 0.1), vec![ids(&[0, 1]), ids(&[2, 3])]);
    }

    #[test]
    fn zero_vector_named() {
        let items = [(PhraseId(3), vec![0.0, 0.0]), (PhraseId(1), vec![1.0, 0.0])];
        let err = hac_complete_linkage(items.iter().map(|(i, v)| (*i, v.as_slice())), 0.5, Parallelism::Sequential);
        assert_eq!(err, Err(HacError::ZeroVector(PhraseId(3))));
    }

    #[test]
    fn duplicate_vectors_merge_at_zero() {
        let items = pts(&[[1.0, 1.0], [1.0, 1.0], [0.0, 1.0]]);
        assert_eq!(run(&items, 0.0), vec![ids(&[0, 1]), ids(&[2])]);
    }

    #[test]
    fn cut_equals_ceiling_run() {
        let items = pts(&[[1.0, 0.1], [0.9, 0.3], [0.2, 1.0], [-0.5, 0.7], [-1.0, -0.2], [0.3, -0.9]]);
        let dendro = Dendrogram::from_vectors(items.iter().map(|(i, v)| (*i, v.as_slice())), Parallelism::Sequential).unwrap();
        assert!(dendro.merges.windows(2).all(|w| w[0].distance <= w[1].distance));
        for t in [0.0, 0.05, 0.2, 0.5, 1.0, 1.5, 2.0] {
            assert_eq!(dendro.cut(t), run(&items, t));
        }
    }
}
