use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::kb::{OpenKb, TripleKey};
use crate::side_info::SideInfoCollection;

use super::negatives::sample_negatives;
use super::objective::{evaluate, LossTerms, TrainingBatch};
use super::{EmbeddingError, EmbeddingSet, HyperParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: LossTerms,
    pub total: f64,
    pub negatives_skipped: usize,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub embeddings: EmbeddingSet,
    pub log: Vec<EpochLog>,
}

/// Mini-batch gradient descent over the distinct triples of `kb`.
///
/// Every epoch shuffles the triples, then for each batch samples negatives, evaluates
/// the objective with the side-information and regularization terms weighted by the
/// batch's share of the triples, and takes one plain gradient step. A KB without
/// triples still takes one full-weight step per epoch on the remaining terms. All
/// randomness comes from `h.seed`, so repeated runs are bit-identical.
pub fn train(
    kb: &OpenKb,
    side: &SideInfoCollection,
    h: &HyperParams,
    init: EmbeddingSet,
) -> Result<TrainOutcome, EmbeddingError> {
    h.validate()?;
    init.check_covers(kb)?;
    if init.dim() != h.dim {
        return Err(EmbeddingError::DimensionMismatch {
            expected: h.dim,
            found: init.dim(),
        });
    }
    side.validate(kb).map_err(|e| EmbeddingError::Config(e.to_string()))?;

    let mut emb = init;
    let mut rng = ChaCha8Rng::seed_from_u64(h.seed);
    let mut order: Vec<TripleKey> = kb.distinct_triples().to_vec();
    let n = order.len();
    let mut log = Vec::with_capacity(h.epochs);

    for epoch in 0..h.epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut epoch_loss = LossTerms::default();
        let mut skipped = 0;
        let chunks: Vec<&[TripleKey]> = if n == 0 { vec![&[]] } else { order.chunks(h.batch_size).collect() };
        for (b, chunk) in chunks.into_iter().enumerate() {
            let mut batch = TrainingBatch {
                positives: chunk.to_vec(),
                negatives: Vec::with_capacity(chunk.len()),
            };
            for t in chunk {
                let s = sample_negatives(kb, t, h.negatives_per_positive, h.max_negative_retries, &mut rng);
                skipped += s.skipped;
                batch.negatives.push(s.negatives);
            }
            let weight = if n == 0 { 1.0 } else { chunk.len() as f64 / n as f64 };
            let mut grad = EmbeddingSet::zeros_like(&emb);
            let terms = evaluate(&emb, &batch, side, h, weight, Some(&mut grad));
            if !terms.is_finite() {
                return Err(EmbeddingError::Diverged {
                    epoch,
                    batch: b,
                    detail: format!("loss terms {terms:?}"),
                });
            }
            emb.sub_scaled(h.learning_rate, &grad);
            epoch_loss.accumulate(&terms);
        }
        if !emb.np.is_finite() || !emb.rel.is_finite() {
            return Err(EmbeddingError::Diverged {
                epoch,
                batch: 0,
                detail: "non-finite parameters after update".into(),
            });
        }
        let entry = EpochLog {
            epoch,
            loss: epoch_loss,
            total: epoch_loss.total(),
            negatives_skipped: skipped,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        };
        log::debug!("epoch {epoch}: loss {:.6}", entry.total);
        log.push(entry);
    }
    Ok(TrainOutcome { embeddings: emb, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{objective, random_embeddings};
    use crate::kb::{PhraseKind, TripleRecord};
    use crate::side_info::EquivalencePairSet;

    fn toy_kb() -> OpenKb {
        OpenKb::from_records([
            TripleRecord::new("a", "r", "b"),
            TripleRecord::new("b", "q", "c"),
            TripleRecord::new("c", "r", "d"),
            TripleRecord::new("d", "q", "a"),
        ])
        .unwrap()
    }

    fn pair_side(kb: &OpenKb) -> SideInfoCollection {
        let mut s = EquivalencePairSet::new("x", PhraseKind::Np);
        s.insert(kb.lookup(PhraseKind::Np, "a").unwrap(), kb.lookup(PhraseKind::Np, "c").unwrap());
        let mut side = SideInfoCollection::default();
        side.push(s).unwrap();
        side
    }

    #[test]
    fn side_pair_distance_shrinks_monotonically() {
        let kb = toy_kb();
        let side = pair_side(&kb);
        let (a, c) = (kb.lookup(PhraseKind::Np, "a").unwrap(), kb.lookup(PhraseKind::Np, "c").unwrap());
        let mut emb = random_embeddings(&kb, 6, 3);
        let h = HyperParams {
            dim: 6,
            lambda_str: 0.0,
            lambda_reg: 0.0,
            side_lambda: 1.0,
            epochs: 1,
            learning_rate: 0.05,
            ..Default::default()
        };
        let dist = |e: &EmbeddingSet| -> f64 {
            e.np.row(a).iter().zip(e.np.row(c)).map(|(x, y)| (x - y).powi(2)).sum()
        };
        let mut prev = dist(&emb);
        for _ in 0..20 {
            emb = train(&kb, &side, &h, emb).unwrap().embeddings;
            let d = dist(&emb);
            assert!(d < prev);
            prev = d;
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let kb = toy_kb();
        let side = pair_side(&kb);
        let h = HyperParams {
            dim: 8,
            epochs: 5,
            batch_size: 2,
            seed: 11,
            ..Default::default()
        };
        let run = || train(&kb, &side, &h, random_embeddings(&kb, 8, 1)).unwrap().embeddings;
        let (x, y) = (run(), run());
        let bits = |e: &EmbeddingSet| e.np.as_slice().iter().chain(e.rel.as_slice()).map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&x), bits(&y));
    }

    #[test]
    fn loss_on_fixed_batch_decreases() {
        let kb = toy_kb();
        let side = pair_side(&kb);
        let h = HyperParams {
            dim: 8,
            epochs: 30,
            batch_size: 4,
            learning_rate: 0.01,
            lambda_reg: 1e-3,
            ..Default::default()
        };
        let init = random_embeddings(&kb, 8, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let positives = kb.distinct_triples().to_vec();
        let negatives = positives
            .iter()
            .map(|t| sample_negatives(&kb, t, 2, 10, &mut rng).negatives)
            .collect();
        let batch = TrainingBatch { positives, negatives };
        let before = objective(&init, &batch, &side, &h);
        let after = objective(&train(&kb, &side, &h, init).unwrap().embeddings, &batch, &side, &h);
        assert!(after <= before, "{after} > {before}");
    }

    #[test]
    fn divergence_is_reported() {
        let kb = toy_kb();
        let side = pair_side(&kb);
        let h = HyperParams {
            dim: 4,
            lambda_str: 0.0,
            side_lambda: 1.0,
            lambda_reg: 0.0,
            learning_rate: 1e200,
            epochs: 50,
            ..Default::default()
        };
        let err = train(&kb, &side, &h, random_embeddings(&kb, 4, 0)).unwrap_err();
        assert!(matches!(err, EmbeddingError::Diverged { .. }));
    }

    #[test]
    fn rejects_mismatched_init() {
        let kb = toy_kb();
        let h = HyperParams { dim: 5, ..Default::default() };
        assert!(train(&kb, &SideInfoCollection::default(), &h, random_embeddings(&kb, 4, 0)).is_err());
    }
}
