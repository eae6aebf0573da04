//! Holographic embeddings of NPs and relation phrases with side-information penalties.
//!
//! A triple `(s, p, o)` scores `η = r_p · (e_s ⋆ e_o)` where `⋆` is circular
//! correlation. Training minimizes a pairwise ranking hinge over sigmoid scores, plus a
//! squared-distance penalty for each side-information pair (normalized per source),
//! plus L2 regularization, by plain mini-batch gradient descent.

mod checkpoint;
mod correlation;
mod init;
mod negatives;
mod objective;
mod train;

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kb::{OpenKb, PhraseId, PhraseKind, TripleKey};
use crate::par::Parallelism;

pub use checkpoint::{load_checkpoint, save_checkpoint, vocab_hash, Checkpoint, CHECKPOINT_VERSION};
pub use correlation::{
    circular_convolution, circular_correlation, circular_correlation_fft, convolve_into, correlate_into, dot,
};
pub use init::{init_embeddings, kb_tokens, phrase_tokens, phrase_vector, random_embeddings, WordVectors};
pub use negatives::{sample_negatives, NegativeSample};
pub use objective::{gradient, objective, objective_terms, LossTerms, TrainingBatch};
pub use train::{train, EpochLog, TrainOutcome};

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("unknown {kind} phrase {id}")]
    UnknownPhrase { kind: PhraseKind, id: PhraseId },
    #[error("configuration: {0}")]
    Config(String),
    #[error("training diverged at epoch {epoch}, batch {batch}: {detail}")]
    Diverged { epoch: usize, batch: usize, detail: String },
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
}

/// Dense row-major table of `len` vectors of dimension `dim`, indexed by phrase id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorTable {
    dim: usize,
    data: Vec<f64>,
}

impl VectorTable {
    pub fn zeros(len: usize, dim: usize) -> Self {
        VectorTable {
            dim,
            data: vec![0.0; len * dim],
        }
    }

    pub fn from_rows(dim: usize, rows: &[Vec<f64>]) -> Result<Self, EmbeddingError> {
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(EmbeddingError::DimensionMismatch {
                    expected: dim,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(VectorTable { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, id: PhraseId) -> &[f64] {
        let i = id.index() * self.dim;
        &self.data[i..i + self.dim]
    }

    pub fn row_mut(&mut self, id: PhraseId) -> &mut [f64] {
        let i = id.index() * self.dim;
        &mut self.data[i..i + self.dim]
    }

    pub fn get(&self, id: PhraseId) -> Option<&[f64]> {
        (id.index() < self.len()).then(|| self.row(id))
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim.max(1))
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn squared_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }
}

/// One vector per NP and per relation phrase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSet {
    pub np: VectorTable,
    pub rel: VectorTable,
}

impl EmbeddingSet {
    pub fn zeros(num_np: usize, num_rel: usize, dim: usize) -> Self {
        EmbeddingSet {
            np: VectorTable::zeros(num_np, dim),
            rel: VectorTable::zeros(num_rel, dim),
        }
    }

    pub fn zeros_like(other: &EmbeddingSet) -> Self {
        Self::zeros(other.np.len(), other.rel.len(), other.dim())
    }

    pub fn dim(&self) -> usize {
        self.np.dim()
    }

    pub fn table(&self, kind: PhraseKind) -> &VectorTable {
        match kind {
            PhraseKind::Np => &self.np,
            PhraseKind::Rel => &self.rel,
        }
    }

    pub fn table_mut(&mut self, kind: PhraseKind) -> &mut VectorTable {
        match kind {
            PhraseKind::Np => &mut self.np,
            PhraseKind::Rel => &mut self.rel,
        }
    }

    /// Vocabulary coverage, matching dimensions and finite entries.
    pub fn check_covers(&self, kb: &OpenKb) -> Result<(), EmbeddingError> {
        if self.np.dim() != self.rel.dim() || self.dim() == 0 {
            return Err(EmbeddingError::DimensionMismatch {
                expected: self.np.dim(),
                found: self.rel.dim(),
            });
        }
        for kind in [PhraseKind::Np, PhraseKind::Rel] {
            if self.table(kind).len() != kb.num_phrases(kind) {
                return Err(EmbeddingError::Config(format!(
                    "{kind} table has {} vectors for {} phrases",
                    self.table(kind).len(),
                    kb.num_phrases(kind)
                )));
            }
        }
        if !self.np.is_finite() || !self.rel.is_finite() {
            return Err(EmbeddingError::Config("non-finite embedding entries".into()));
        }
        Ok(())
    }

    /// `self -= step * g`.
    pub fn sub_scaled(&mut self, step: f64, g: &EmbeddingSet) {
        for (t, gt) in [(&mut self.np, &g.np), (&mut self.rel, &g.rel)] {
            for (x, dx) in t.data.iter_mut().zip(&gt.data) {
                *x -= step * dx;
            }
        }
    }
}

/// `r_p · (e_s ⋆ e_o)`.
pub fn score_triple(emb: &EmbeddingSet, s: PhraseId, p: PhraseId, o: PhraseId) -> Result<f64, EmbeddingError> {
    fn lookup(t: &VectorTable, kind: PhraseKind, id: PhraseId) -> Result<&[f64], EmbeddingError> {
        t.get(id).ok_or(EmbeddingError::UnknownPhrase { kind, id })
    }
    let es = lookup(&emb.np, PhraseKind::Np, s)?;
    let eo = lookup(&emb.np, PhraseKind::Np, o)?;
    let rp = lookup(&emb.rel, PhraseKind::Rel, p)?;
    let corr = circular_correlation(es, eo)?;
    Ok(dot(rp, &corr))
}

pub fn score_key(emb: &EmbeddingSet, t: &TripleKey) -> Result<f64, EmbeddingError> {
    score_triple(emb, t.subject, t.relation, t.object)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HingeForm {
    /// `max(0, γ + σ(η_neg) − σ(η_pos))`.
    #[default]
    Sigmoid,
    /// `max(0, γ + η_neg − η_pos)`.
    Raw,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    /// Each positive against its own sampled negatives.
    #[default]
    PerPositive,
    /// Every positive in the batch against every negative in the batch.
    CrossProduct,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HyperParams {
    pub dim: usize,
    /// Hinge margin; defaults to 0.5 for the sigmoid hinge and 1.0 for the raw hinge.
    pub margin: Option<f64>,
    pub hinge: HingeForm,
    pub pairing: Pairing,
    pub lambda_str: f64,
    /// Per-source NP side weights; sources not listed use `side_lambda`.
    pub lambda_ent: BTreeMap<String, f64>,
    /// Per-source relation side weights; sources not listed use `side_lambda`.
    pub lambda_rel: BTreeMap<String, f64>,
    pub side_lambda: f64,
    pub lambda_reg: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub negatives_per_positive: usize,
    pub max_negative_retries: usize,
    pub seed: u64,
    pub parallelism: Parallelism,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            dim: 300,
            margin: None,
            hinge: HingeForm::Sigmoid,
            pairing: Pairing::PerPositive,
            lambda_str: 1.0,
            lambda_ent: BTreeMap::new(),
            lambda_rel: BTreeMap::new(),
            side_lambda: 0.1,
            lambda_reg: 1e-4,
            learning_rate: 0.01,
            batch_size: 128,
            epochs: 100,
            negatives_per_positive: 2,
            max_negative_retries: 10,
            seed: 0,
            parallelism: Parallelism::Sequential,
        }
    }
}

impl HyperParams {
    pub fn margin(&self) -> f64 {
        self.margin.unwrap_or(match self.hinge {
            HingeForm::Sigmoid => 0.5,
            HingeForm::Raw => 1.0,
        })
    }

    pub fn side_weight(&self, kind: PhraseKind, source: &str) -> f64 {
        let map = match kind {
            PhraseKind::Np => &self.lambda_ent,
            PhraseKind::Rel => &self.lambda_rel,
        };
        map.get(source).copied().unwrap_or(self.side_lambda)
    }

    /// Zero every side-information weight.
    pub fn without_side_info(mut self) -> Self {
        self.side_lambda = 0.0;
        self.lambda_ent.values_mut().for_each(|v| *v = 0.0);
        self.lambda_rel.values_mut().for_each(|v| *v = 0.0);
        self
    }

    // `!(x > 0.0)` also rejects NaN
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), EmbeddingError> {
        let bad = |m: String| Err(EmbeddingError::Config(m));
        if self.dim == 0 {
            return bad("dim must be positive".into());
        }
        if !(self.margin() > 0.0) {
            return bad(format!("margin must be positive, got {}", self.margin()));
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive".into());
        }
        if self.batch_size == 0 || self.negatives_per_positive == 0 {
            return bad("batch_size and negatives_per_positive must be at least 1".into());
        }
        let lambdas = [self.lambda_str, self.side_lambda, self.lambda_reg]
            .into_iter()
            .chain(self.lambda_ent.values().copied())
            .chain(self.lambda_rel.values().copied());
        for l in lambdas {
            if !(l >= 0.0 && l.is_finite()) {
                return bad(format!("weights must be finite and non-negative, got {l}"));
            }
        }
        Ok(())
    }
}
