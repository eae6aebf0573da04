//! End-to-end runs. Each stage reads its inputs from the config and from files that
//! earlier stages wrote into the run directory, so stages can be rerun separately.

mod config;
mod grid;
mod synth;

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use config::{ClusterConfig, DataConfig, PipelineConfig};
pub use grid::{apply_override, grid_points, grid_search, GridOutcome, GridRow, GridSpec};
pub use synth::{make_synthetic_kb, SynthSpec, SyntheticFiles, SyntheticKb};

use crate::baselines::{run_baseline, BaselineError, BaselineInputs};
use crate::canonicalize::{
    canonicalize_kb, cluster_embeddings, read_clusters, write_canonical, write_clusters, CanonError, Clustering,
    DedupReport, ThresholdChoice, ThresholdPolicy,
};
use crate::embedding::{
    init_embeddings, kb_tokens, load_checkpoint, save_checkpoint, train, vocab_hash, EmbeddingError, EmbeddingSet,
    EpochLog, WordVectors,
};
use crate::kb::{load_gold, load_triples, split_validation, GoldClustering, GoldLoadReport, KbError, OpenKb, PhraseKind, Split};
use crate::metrics::{evaluate_clustering, MetricsError, MetricsReport};
use crate::side_info::{assemble_side_info, CoverageReport, SideInfoCollection, SideInfoError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Ingest,
    SideInfo,
    Embed,
    Cluster,
    Evaluate,
    GridSearch,
    Synth,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Ingest => "ingest",
            Stage::SideInfo => "sideinfo",
            Stage::Embed => "embed",
            Stage::Cluster => "cluster",
            Stage::Evaluate => "evaluate",
            Stage::GridSearch => "grid-search",
            Stage::Synth => "synth",
        })
    }
}

#[derive(Debug, Error)]
pub enum StageError {
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error(transparent)]
    SideInfo(#[from] SideInfoError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Canon(#[from] CanonError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{0}")]
    Inconsistent(String),
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: StageError,
    },
}

fn at<E: Into<StageError>>(stage: Stage) -> impl FnOnce(E) -> PipelineError {
    move |e| PipelineError::Stage {
        stage,
        source: e.into(),
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StageError + '_ {
    move |source| StageError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Where each stage reads and writes. Defaults to fixed names in the run directory.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifacts {
    pub split: PathBuf,
    pub side_info: PathBuf,
    pub embeddings: PathBuf,
    pub train_log: PathBuf,
    pub np_clusters: PathBuf,
    pub rel_clusters: PathBuf,
    pub canonical_triples: PathBuf,
    pub cluster_report: PathBuf,
    pub metrics: PathBuf,
    pub leaderboard: PathBuf,
    pub manifest: PathBuf,
}

impl Artifacts {
    pub fn in_dir(dir: &Path) -> Self {
        Artifacts {
            split: dir.join("split.json"),
            side_info: dir.join("side_info.json"),
            embeddings: dir.join("embeddings.json"),
            train_log: dir.join("train_log.jsonl"),
            np_clusters: dir.join("np_clusters.jsonl"),
            rel_clusters: dir.join("rel_clusters.jsonl"),
            canonical_triples: dir.join("canonical_triples.jsonl"),
            cluster_report: dir.join("cluster_report.json"),
            metrics: dir.join("metrics.json"),
            leaderboard: dir.join("leaderboard.md"),
            manifest: dir.join("manifest.json"),
        }
    }

    /// The files a full run produces, by name, in a fixed order.
    pub fn outputs(&self) -> Vec<(&'static str, &Path)> {
        vec![
            ("split", &self.split),
            ("side_info", &self.side_info),
            ("embeddings", &self.embeddings),
            ("train_log", &self.train_log),
            ("np_clusters", &self.np_clusters),
            ("rel_clusters", &self.rel_clusters),
            ("canonical_triples", &self.canonical_triples),
            ("cluster_report", &self.cluster_report),
            ("metrics", &self.metrics),
            ("leaderboard", &self.leaderboard),
        ]
    }
}

fn create_parent(path: &Path) -> Result<(), StageError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), StageError> {
    create_parent(path)?;
    let mut text = serde_json::to_string_pretty(value).map_err(|source| StageError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, StageError> {
    let file = File::open(path).map_err(io_err(path))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|source| StageError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn write_lines<F>(path: &Path, f: F) -> Result<(), StageError>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<(), StageError>,
{
    create_parent(path)?;
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    f(&mut w)?;
    w.flush().map_err(io_err(path))
}

pub fn sha256_file(path: &Path) -> io::Result<String> {
    let digest = Sha256::digest(fs::read(path)?);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

fn check_vocab(kb: &OpenKb, found: &str, what: &Path) -> Result<(), StageError> {
    if vocab_hash(kb) == found {
        Ok(())
    } else {
        Err(StageError::Inconsistent(format!(
            "{} was produced from a different triples file",
            what.display()
        )))
    }
}

pub fn load_kb(cfg: &PipelineConfig) -> Result<OpenKb, KbError> {
    load_triples(&cfg.data.triples, cfg.data.format)
}

/// NP gold from the configured file, or from the triples' gold fields.
pub fn load_np_gold(cfg: &PipelineConfig, kb: &OpenKb) -> Result<(GoldClustering, Option<GoldLoadReport>), KbError> {
    match &cfg.data.np_gold {
        Some(p) => load_gold(p, kb, PhraseKind::Np).map(|(g, r)| (g, Some(r))),
        None => Ok((GoldClustering::np_from_triples(kb), None)),
    }
}

pub fn load_rel_gold(cfg: &PipelineConfig, kb: &OpenKb) -> Result<Option<GoldClustering>, KbError> {
    cfg.data
        .rel_gold
        .as_ref()
        .map(|p| load_gold(p, kb, PhraseKind::Rel).map(|(g, _)| g))
        .transpose()
}

/// Gold clusterings for validation and test.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Golds {
    pub np_validation: Option<GoldClustering>,
    pub np_test: Option<GoldClustering>,
    pub rel_validation: Option<GoldClustering>,
    pub rel_test: Option<GoldClustering>,
}

impl Golds {
    /// NP gold is split by entity; relation gold is restricted to the relation phrases
    /// occurring in each view's triples.
    pub fn new(kb: &OpenKb, split: Option<&Split>, np: &GoldClustering, rel: Option<&GoldClustering>) -> Self {
        let Some(split) = split else {
            return Golds::default();
        };
        let nonempty = |g: GoldClustering| (!g.is_empty()).then_some(g);
        let rel_in = |view: &crate::kb::KbView| rel.and_then(|g| nonempty(g.restrict_to_ids(&view.phrases(kb, PhraseKind::Rel))));
        Golds {
            np_validation: nonempty(np.restrict_to_labels(&split.validation.entities)),
            np_test: nonempty(np.restrict_to_labels(&split.test.entities)),
            rel_validation: rel_in(&split.validation),
            rel_test: rel_in(&split.test),
        }
    }

    pub fn load(cfg: &PipelineConfig, kb: &OpenKb, split: Option<&Split>) -> Result<Self, KbError> {
        let (np, _) = load_np_gold(cfg, kb)?;
        let rel = load_rel_gold(cfg, kb)?;
        Ok(Golds::new(kb, split, &np, rel.as_ref()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub vocab_hash: String,
    pub num_triples: usize,
    pub num_distinct_triples: usize,
    pub num_np: usize,
    pub num_rel: usize,
    pub np_gold_phrases: usize,
    pub np_gold_load: Option<GoldLoadReport>,
    pub rel_gold_phrases: Option<usize>,
    pub seed: u64,
    /// Absent when there is no NP gold to split on.
    pub split: Option<Split>,
}

pub fn ingest(cfg: &PipelineConfig, kb: &OpenKb) -> Result<IngestReport, StageError> {
    kb.audit()?;
    let (np_gold, np_gold_load) = load_np_gold(cfg, kb)?;
    let rel_gold = load_rel_gold(cfg, kb)?;
    let split = if np_gold.is_empty() {
        log::warn!("no NP gold: thresholds fall back to fixed values and nothing is scored");
        None
    } else {
        Some(split_validation(kb, &np_gold, cfg.data.validation_fraction, cfg.seed)?)
    };
    Ok(IngestReport {
        vocab_hash: vocab_hash(kb),
        num_triples: kb.triples().len(),
        num_distinct_triples: kb.distinct_triples().len(),
        num_np: kb.num_phrases(PhraseKind::Np),
        num_rel: kb.num_phrases(PhraseKind::Rel),
        np_gold_phrases: np_gold.len(),
        np_gold_load,
        rel_gold_phrases: rel_gold.map(|g| g.len()),
        seed: cfg.seed,
        split,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SideInfoArtifact {
    pub vocab_hash: String,
    pub coverage: CoverageReport,
    pub collection: SideInfoCollection,
}

/// Initial vectors: averaged word vectors when configured, seeded random otherwise.
pub fn initial_embeddings(cfg: &PipelineConfig, kb: &OpenKb) -> Result<EmbeddingSet, EmbeddingError> {
    let h = cfg.effective_hyper();
    let vectors = load_word_vectors(cfg, kb)?;
    init_embeddings(kb, vectors.as_ref(), h.dim, h.seed)
}

pub fn load_word_vectors(cfg: &PipelineConfig, kb: &OpenKb) -> Result<Option<WordVectors>, EmbeddingError> {
    cfg.data
        .word_vectors
        .as_ref()
        .map(|p| WordVectors::load(p, Some(&kb_tokens(kb))))
        .transpose()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterOutcome {
    pub np: Clustering,
    pub rel: Clustering,
    pub np_choice: Option<ThresholdChoice>,
    pub rel_choice: Option<ThresholdChoice>,
}

fn threshold_policy<'a>(fixed: Option<f64>, gold: Option<&'a GoldClustering>, cfg: &'a ClusterConfig) -> ThresholdPolicy<'a> {
    match (fixed, gold) {
        (Some(t), _) => ThresholdPolicy::Fixed(t),
        (None, Some(g)) => ThresholdPolicy::Tuned { gold: g, grid: &cfg.grid },
        (None, None) => ThresholdPolicy::Fixed(cfg.fallback_threshold),
    }
}

/// Cluster both vocabularies, tuning each cut on its validation gold.
pub fn cluster_all(cfg: &PipelineConfig, kb: &OpenKb, emb: &EmbeddingSet, golds: &Golds) -> Result<ClusterOutcome, CanonError> {
    let c = &cfg.clustering;
    let mode = cfg.mode();
    let np_policy = threshold_policy(c.np_threshold, golds.np_validation.as_ref(), c);
    let rel_policy = threshold_policy(c.rel_threshold, golds.rel_validation.as_ref(), c);
    let (np, np_choice) = cluster_embeddings(kb, PhraseKind::Np, &emb.np, np_policy, mode)?;
    let (rel, rel_choice) = cluster_embeddings(kb, PhraseKind::Rel, &emb.rel, rel_policy, mode)?;
    Ok(ClusterOutcome {
        np,
        rel,
        np_choice,
        rel_choice,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub np_threshold: f64,
    pub rel_threshold: f64,
    pub np_clusters: usize,
    pub rel_clusters: usize,
    pub np_validation: Option<ThresholdChoice>,
    pub rel_validation: Option<ThresholdChoice>,
    pub dedup: DedupReport,
}

/// Test-set scores per kind.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KindScores {
    pub np: Option<MetricsReport>,
    pub rel: Option<MetricsReport>,
}

pub fn score(np: &Clustering, rel: &Clustering, golds: &Golds) -> Result<KindScores, MetricsError> {
    let eval = |c: &Clustering, g: Option<&GoldClustering>| g.map(|g| evaluate_clustering(c, g)).transpose();
    Ok(KindScores {
        np: eval(np, golds.np_test.as_ref())?,
        rel: eval(rel, golds.rel_test.as_ref())?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardRow {
    pub method: String,
    pub scores: KindScores,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub rows: Vec<LeaderboardRow>,
}

fn f1_cell(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".to_string(), |v| format!("{:.1}", 100.0 * v))
}

/// Markdown table of NP F1 scores, one row per method.
pub fn leaderboard_table(rows: &[(String, Option<MetricsReport>)]) -> String {
    let mut out = String::from("| Method | Macro F1 | Micro F1 | Pair. F1 | Average |\n|---|---|---|---|---|\n");
    for (name, report) in rows {
        let cells = match report {
            Some(r) => [
                f1_cell(Some(r.macro_f1)),
                f1_cell(Some(r.micro_f1)),
                f1_cell(r.pair_f1),
                f1_cell(Some(r.mean_f1())),
            ],
            None => ["n/a", "n/a", "n/a", "n/a"].map(String::from),
        };
        out.push_str(&format!("| {name} | {} |\n", cells.join(" | ")));
    }
    out
}

pub const MAIN_METHOD: &str = "okbcanon";

/// One stage at a time, reading earlier stages' files from `art`.
pub struct Runner<'a> {
    pub cfg: &'a PipelineConfig,
    pub art: Artifacts,
}

impl<'a> Runner<'a> {
    pub fn new(cfg: &'a PipelineConfig) -> Self {
        Runner {
            cfg,
            art: Artifacts::in_dir(&cfg.out_dir),
        }
    }

    fn kb(&self, stage: Stage) -> Result<OpenKb, PipelineError> {
        load_kb(self.cfg).map_err(at(stage))
    }

    fn split(&self, stage: Stage, kb: &OpenKb) -> Result<Option<Split>, PipelineError> {
        let report: IngestReport = read_json(&self.art.split).map_err(at(stage))?;
        check_vocab(kb, &report.vocab_hash, &self.art.split).map_err(at(stage))?;
        Ok(report.split)
    }

    pub fn ingest(&self) -> Result<IngestReport, PipelineError> {
        let s = Stage::Ingest;
        let kb = self.kb(s)?;
        let report = ingest(self.cfg, &kb).map_err(at(s))?;
        write_json(&self.art.split, &report).map_err(at(s))?;
        log::info!(
            "ingested {} triples: {} NPs, {} relation phrases",
            report.num_triples,
            report.num_np,
            report.num_rel
        );
        Ok(report)
    }

    pub fn sideinfo(&self) -> Result<SideInfoArtifact, PipelineError> {
        let s = Stage::SideInfo;
        let kb = self.kb(s)?;
        let (collection, coverage) = assemble_side_info(&kb, &self.cfg.side_info, self.cfg.mode()).map_err(at(s))?;
        let artifact = SideInfoArtifact {
            vocab_hash: vocab_hash(&kb),
            coverage,
            collection,
        };
        write_json(&self.art.side_info, &artifact).map_err(at(s))?;
        Ok(artifact)
    }

    fn side_info(&self, stage: Stage, kb: &OpenKb) -> Result<SideInfoCollection, PipelineError> {
        let artifact: SideInfoArtifact = read_json(&self.art.side_info).map_err(at(stage))?;
        check_vocab(kb, &artifact.vocab_hash, &self.art.side_info).map_err(at(stage))?;
        Ok(artifact.collection)
    }

    pub fn embed(&self) -> Result<Vec<EpochLog>, PipelineError> {
        let s = Stage::Embed;
        let kb = self.kb(s)?;
        let side = self.side_info(s, &kb)?;
        let init = initial_embeddings(self.cfg, &kb).map_err(at(s))?;
        let outcome = train(&kb, &side, &self.cfg.effective_hyper(), init).map_err(at(s))?;
        create_parent(&self.art.embeddings).map_err(at(s))?;
        save_checkpoint(&self.art.embeddings, &kb, &outcome.embeddings, self.cfg.seed).map_err(at(s))?;
        write_lines(&self.art.train_log, |w| {
            for entry in &outcome.log {
                serde_json::to_writer(&mut *w, entry).map_err(|source| StageError::Json {
                    path: self.art.train_log.clone(),
                    source,
                })?;
                w.write_all(b"\n").map_err(io_err(&self.art.train_log))?;
            }
            Ok(())
        })
        .map_err(at(s))?;
        Ok(outcome.log)
    }

    pub fn cluster(&self) -> Result<ClusterReport, PipelineError> {
        let s = Stage::Cluster;
        let kb = self.kb(s)?;
        let split = self.split(s, &kb)?;
        let golds = Golds::load(self.cfg, &kb, split.as_ref()).map_err(at(s))?;
        let (emb, _) = load_checkpoint(&self.art.embeddings, &kb).map_err(at(s))?;
        let out = cluster_all(self.cfg, &kb, &emb, &golds).map_err(at(s))?;
        let (canonical, dedup) = canonicalize_kb(&kb, &out.np, &out.rel).map_err(at(s))?;
        for (path, clustering) in [(&self.art.np_clusters, &out.np), (&self.art.rel_clusters, &out.rel)] {
            write_lines(path, |w| Ok(write_clusters(w, &kb, clustering)?)).map_err(at(s))?;
        }
        write_lines(&self.art.canonical_triples, |w| Ok(write_canonical(w, &kb, &canonical)?)).map_err(at(s))?;
        let report = ClusterReport {
            np_threshold: out.np.threshold_used,
            rel_threshold: out.rel.threshold_used,
            np_clusters: out.np.clusters.len(),
            rel_clusters: out.rel.clusters.len(),
            np_validation: out.np_choice,
            rel_validation: out.rel_choice,
            dedup,
        };
        write_json(&self.art.cluster_report, &report).map_err(at(s))?;
        log::info!(
            "{} NP clusters at {:.2}, {} relation clusters at {:.2}",
            report.np_clusters,
            report.np_threshold,
            report.rel_clusters,
            report.rel_threshold
        );
        Ok(report)
    }

    pub fn evaluate(&self) -> Result<EvaluationReport, PipelineError> {
        let s = Stage::Evaluate;
        let kb = self.kb(s)?;
        let split = self.split(s, &kb)?;
        let golds = Golds::load(self.cfg, &kb, split.as_ref()).map_err(at(s))?;
        let read = |path: &Path, kind| -> Result<Clustering, PipelineError> {
            let file = File::open(path).map_err(io_err(path)).map_err(at(s))?;
            read_clusters(BufReader::new(file), &kb, kind).map_err(at(s))
        };
        let np = read(&self.art.np_clusters, PhraseKind::Np)?;
        let rel = read(&self.art.rel_clusters, PhraseKind::Rel)?;
        let mut rows = vec![LeaderboardRow {
            method: MAIN_METHOD.to_string(),
            scores: score(&np, &rel, &golds).map_err(at(s))?,
        }];

        if !self.cfg.baselines.is_empty() {
            let side = if self.art.side_info.is_file() {
                Some(self.side_info(s, &kb)?)
            } else {
                None
            };
            let vectors = load_word_vectors(self.cfg, &kb).map_err(at(s))?;
            let hyper = self.cfg.effective_hyper();
            let inputs = BaselineInputs {
                side: side.as_ref(),
                word_vectors: vectors.as_ref(),
                hyper: &hyper,
                np_validation: golds.np_validation.as_ref(),
                rel_validation: golds.rel_validation.as_ref(),
                grid: &self.cfg.clustering.grid,
                fallback_threshold: self.cfg.clustering.fallback_threshold,
                mode: self.cfg.mode(),
            };
            for b in &self.cfg.baselines {
                let out = run_baseline(b, &kb, &inputs).map_err(at(s))?;
                let dir = self.art.metrics.with_file_name("baselines");
                for (clustering, kind) in [(&out.np, "np"), (&out.rel, "rel")] {
                    let path = dir.join(format!("{}_{kind}_clusters.jsonl", b.name));
                    write_lines(&path, |w| Ok(write_clusters(w, &kb, clustering)?)).map_err(at(s))?;
                }
                rows.push(LeaderboardRow {
                    method: b.name.to_string(),
                    scores: score(&out.np, &out.rel, &golds).map_err(at(s))?,
                });
            }
        }

        let report = EvaluationReport { rows };
        write_json(&self.art.metrics, &report).map_err(at(s))?;
        let table: Vec<(String, Option<MetricsReport>)> =
            report.rows.iter().map(|r| (r.method.clone(), r.scores.np.clone())).collect();
        create_parent(&self.art.leaderboard).map_err(at(s))?;
        fs::write(&self.art.leaderboard, leaderboard_table(&table))
            .map_err(io_err(&self.art.leaderboard))
            .map_err(at(s))?;
        Ok(report)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub seed: u64,
    pub deterministic: bool,
    pub config_sha256: String,
    pub config: PipelineConfig,
    /// Input file path → SHA-256.
    pub inputs: BTreeMap<String, String>,
    /// Artifact name → SHA-256.
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        read_json(path).map_err(|e| PipelineError::Config(e.to_string()))
    }
}

fn config_inputs(cfg: &PipelineConfig) -> Vec<&Path> {
    let d = &cfg.data;
    let s = &cfg.side_info;
    let mut out: Vec<&Path> = vec![&d.triples];
    out.extend(d.np_gold.as_deref());
    out.extend(d.rel_gold.as_deref());
    out.extend(d.word_vectors.as_deref());
    out.extend(s.ppdb.as_ref().map(|p| p.path.as_path()));
    if let Some(w) = &s.wordnet {
        out.extend(w.np_path.as_deref());
        out.extend(w.rel_path.as_deref());
    }
    out.extend(s.kbp.as_deref());
    out
}

pub fn write_manifest(cfg: &PipelineConfig, art: &Artifacts) -> Result<Manifest, StageError> {
    let config_json = serde_json::to_vec(cfg).map_err(|source| StageError::Json {
        path: art.manifest.clone(),
        source,
    })?;
    let hash = |p: &Path| sha256_file(p).map_err(io_err(p));
    let mut inputs = BTreeMap::new();
    for p in config_inputs(cfg) {
        inputs.insert(p.display().to_string(), hash(p)?);
    }
    let mut outputs = BTreeMap::new();
    for (name, p) in art.outputs() {
        if p.is_file() {
            outputs.insert(name.to_string(), hash(p)?);
        }
    }
    let manifest = Manifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        deterministic: cfg.deterministic,
        config_sha256: Sha256::digest(&config_json).iter().map(|b| format!("{b:02x}")).collect(),
        config: cfg.clone(),
        inputs,
        outputs,
    };
    write_json(&art.manifest, &manifest)?;
    Ok(manifest)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub ingest: IngestReport,
    pub cluster: ClusterReport,
    pub evaluation: EvaluationReport,
    pub manifest: Manifest,
}

/// Every stage in order, then the manifest. A failing stage stops the run and keeps
/// whatever earlier stages wrote.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunSummary, PipelineError> {
    cfg.validate()?;
    let runner = Runner::new(cfg);
    fs::create_dir_all(&cfg.out_dir).map_err(|e| PipelineError::Config(format!("{}: {e}", cfg.out_dir.display())))?;
    let ingest = runner.ingest()?;
    runner.sideinfo()?;
    runner.embed()?;
    let cluster = runner.cluster()?;
    let evaluation = runner.evaluate()?;
    let manifest = write_manifest(cfg, &runner.art).map_err(at(Stage::Evaluate))?;
    Ok(RunSummary {
        out_dir: cfg.out_dir.clone(),
        ingest,
        cluster,
        evaluation,
        manifest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leaderboard_format() {
        let r = MetricsReport {
            macro_p: 1.0,
            macro_r: 0.5,
            macro_f1: 2.0 / 3.0,
            micro_p: 1.0,
            micro_r: 1.0,
            micro_f1: 1.0,
            pair_p: None,
            pair_r: Some(0.0),
            pair_f1: None,
            num_clusters: 1,
            num_gold_clusters: 1,
            num_elements: 1,
        };
        let t = leaderboard_table(&[("a".into(), Some(r)), ("b".into(), None)]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[0], "| Method | Macro F1 | Micro F1 | Pair. F1 | Average |");
        assert_eq!(lines[2], "| a | 66.7 | 100.0 | n/a | 55.6 |");
        assert_eq!(lines[3], "| b | n/a | n/a | n/a | n/a |");
    }

    #[test]
    fn stage_errors_name_the_stage() {
        let e = at::<KbError>(Stage::Cluster)(KbError::Empty);
        assert!(e.to_string().starts_with("cluster stage failed"));
    }
}
