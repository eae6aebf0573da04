use serde::{Deserialize, Serialize};

use crate::kb::{PhraseKind, TripleKey};
use crate::par;
use crate::side_info::SideInfoCollection;

use super::correlation::{convolve_into, correlate_into, dot};
use super::{EmbeddingSet, HingeForm, HyperParams, Pairing};

/// The four additive parts of the objective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub structure: f64,
    pub np_side: f64,
    pub rel_side: f64,
    pub regularization: f64,
}

impl LossTerms {
    pub fn total(&self) -> f64 {
        self.structure + self.np_side + self.rel_side + self.regularization
    }

    pub fn accumulate(&mut self, other: &LossTerms) {
        self.structure += other.structure;
        self.np_side += other.np_side;
        self.rel_side += other.rel_side;
        self.regularization += other.regularization;
    }

    pub fn is_finite(&self) -> bool {
        self.total().is_finite()
    }
}

/// Positives with their aligned corrupted triples (`negatives[i]` belongs to `positives[i]`).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingBatch {
    pub positives: Vec<TripleKey>,
    pub negatives: Vec<Vec<TripleKey>>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn objective(emb: &EmbeddingSet, batch: &TrainingBatch, side: &SideInfoCollection, h: &HyperParams) -> f64 {
    objective_terms(emb, batch, side, h).total()
}

pub fn objective_terms(
    emb: &EmbeddingSet,
    batch: &TrainingBatch,
    side: &SideInfoCollection,
    h: &HyperParams,
) -> LossTerms {
    evaluate(emb, batch, side, h, 1.0, None)
}

/// Analytic gradient of [`objective`]. The hinge uses subgradient 0 at its kink.
pub fn gradient(emb: &EmbeddingSet, batch: &TrainingBatch, side: &SideInfoCollection, h: &HyperParams) -> EmbeddingSet {
    let mut g = EmbeddingSet::zeros_like(emb);
    evaluate(emb, batch, side, h, 1.0, Some(&mut g));
    g
}

/// Loss and, optionally, gradient. `global_weight` scales the side-information and
/// regularization terms (training uses the batch's share of the triples); the ranking
/// term is always the batch's own sum. Zero-weight terms are skipped entirely.
pub(crate) fn evaluate(
    emb: &EmbeddingSet,
    batch: &TrainingBatch,
    side: &SideInfoCollection,
    h: &HyperParams,
    global_weight: f64,
    mut grad: Option<&mut EmbeddingSet>,
) -> LossTerms {
    let mut terms = LossTerms::default();
    if h.lambda_str != 0.0 && !batch.positives.is_empty() {
        terms.structure = ranking_term(emb, batch, h, grad.as_deref_mut());
    }
    for kind in [PhraseKind::Np, PhraseKind::Rel] {
        let mut total = 0.0;
        for source in side.sources(kind) {
            let lambda = h.side_weight(kind, &source.source_name);
            if lambda == 0.0 || source.is_empty() {
                continue;
            }
            let w = global_weight * lambda / source.len() as f64;
            let mut sum = 0.0;
            for (a, b) in source.pairs() {
                let table = emb.table(kind);
                let (va, vb) = (table.row(a), table.row(b));
                sum += va.iter().zip(vb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
                if let Some(g) = grad.as_deref_mut() {
                    let diff: Vec<f64> = va.iter().zip(vb).map(|(x, y)| 2.0 * w * (x - y)).collect();
                    let gt = g.table_mut(kind);
                    gt.row_mut(a).iter_mut().zip(&diff).for_each(|(g, d)| *g += d);
                    gt.row_mut(b).iter_mut().zip(&diff).for_each(|(g, d)| *g -= d);
                }
            }
            total += w * sum;
        }
        match kind {
            PhraseKind::Np => terms.np_side = total,
            PhraseKind::Rel => terms.rel_side = total,
        }
    }
    if h.lambda_reg != 0.0 {
        let w = global_weight * h.lambda_reg;
        terms.regularization = w * (emb.np.squared_norm() + emb.rel.squared_norm());
        if let Some(g) = grad {
            for (gt, t) in [(&mut g.np, &emb.np), (&mut g.rel, &emb.rel)] {
                for (gx, x) in gt.as_mut_slice().iter_mut().zip(t.as_slice()) {
                    *gx += 2.0 * w * x;
                }
            }
        }
    }
    terms
}

struct Scored {
    eta: f64,
    corr: Vec<f64>,
}

fn ranking_term(emb: &EmbeddingSet, batch: &TrainingBatch, h: &HyperParams, grad: Option<&mut EmbeddingSet>) -> f64 {
    debug_assert_eq!(batch.positives.len(), batch.negatives.len());
    let d = emb.dim();
    let mut triples: Vec<TripleKey> = batch.positives.clone();
    let mut neg_ranges = Vec::with_capacity(batch.negatives.len());
    for negs in &batch.negatives {
        let start = triples.len();
        triples.extend_from_slice(negs);
        neg_ranges.push(start..triples.len());
    }
    let n_pos = batch.positives.len();

    // Scores are computed per triple independently, so the result does not depend on
    // the parallelism mode.
    let scored: Vec<Scored> = par::map_slice(&triples, h.parallelism, |t| {
        let mut corr = vec![0.0; d];
        correlate_into(emb.np.row(t.subject), emb.np.row(t.object), &mut corr);
        let eta = dot(emb.rel.row(t.relation), &corr);
        Scored { eta, corr }
    });

    let margin = h.margin();
    let lambda = h.lambda_str;
    let mut coef = vec![0.0; triples.len()];
    let mut loss = 0.0;
    let mut hinge = |i: usize, j: usize, coef: &mut [f64]| match h.hinge {
        HingeForm::Sigmoid => {
            let (si, sj) = (sigmoid(scored[i].eta), sigmoid(scored[j].eta));
            let v = margin + sj - si;
            if v > 0.0 {
                loss += v;
                coef[j] += lambda * sj * (1.0 - sj);
                coef[i] -= lambda * si * (1.0 - si);
            }
        }
        HingeForm::Raw => {
            let v = margin + scored[j].eta - scored[i].eta;
            if v > 0.0 {
                loss += v;
                coef[j] += lambda;
                coef[i] -= lambda;
            }
        }
    };
    match h.pairing {
        Pairing::PerPositive => {
            for (i, range) in neg_ranges.iter().enumerate() {
                for j in range.clone() {
                    hinge(i, j, &mut coef);
                }
            }
        }
        Pairing::CrossProduct => {
            for i in 0..n_pos {
                for j in n_pos..triples.len() {
                    hinge(i, j, &mut coef);
                }
            }
        }
    }

    if let Some(g) = grad {
        let active: Vec<usize> = (0..triples.len()).filter(|&k| coef[k] != 0.0).collect();
        let contributions: Vec<[Vec<f64>; 3]> = par::map_slice(&active, h.parallelism, |&k| {
            let t = &triples[k];
            let c = coef[k];
            let (s, r, o) = (emb.np.row(t.subject), emb.rel.row(t.relation), emb.np.row(t.object));
            let mut gs = vec![0.0; d];
            let mut go = vec![0.0; d];
            correlate_into(r, o, &mut gs);
            convolve_into(r, s, &mut go);
            gs.iter_mut().for_each(|x| *x *= c);
            go.iter_mut().for_each(|x| *x *= c);
            let gr: Vec<f64> = scored[k].corr.iter().map(|x| c * x).collect();
            [gs, gr, go]
        });
        for (&k, [gs, gr, go]) in active.iter().zip(contributions) {
            let t = &triples[k];
            add(g.np.row_mut(t.subject), &gs);
            add(g.rel.row_mut(t.relation), &gr);
            add(g.np.row_mut(t.object), &go);
        }
    }
    lambda * loss
}

fn add(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(a, b)| *a += b);
}
