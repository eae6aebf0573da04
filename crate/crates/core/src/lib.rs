//! Canonicalization of open knowledge bases.
//!
//! An open KB is a bag of `(noun phrase, relation phrase, noun phrase)` triples whose
//! phrases are raw surface strings. This crate groups equivalent noun phrases and
//! equivalent relation phrases by
//!
//! 1. collecting soft equivalence evidence ([`side_info`]),
//! 2. learning holographic embeddings regularized by that evidence ([`embedding`]),
//! 3. clustering the embeddings with complete-linkage HAC and choosing a
//!    representative per cluster ([`canonicalize`]).
//!
//! [`metrics`] scores clusterings against gold annotations, [`baselines`] holds the
//! comparison systems and [`pipeline`] wires the stages together on disk.

pub mod baselines;
pub mod canonicalize;
pub mod embedding;
pub mod kb;
pub mod metrics;
pub mod par;
pub mod pipeline;
pub mod side_info;

pub use kb::{GoldClustering, OpenKb, Phrase, PhraseId, PhraseKind, Triple};
pub use par::Parallelism;
