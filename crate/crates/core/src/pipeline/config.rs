use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::BaselineConfig;
use crate::canonicalize::default_threshold_grid;
use crate::embedding::HyperParams;
use crate::kb::TripleFormat;
use crate::par::Parallelism;
use crate::side_info::SideInfoConfig;

use super::PipelineError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub triples: PathBuf,
    #[serde(default)]
    pub format: TripleFormat,
    /// `phrase <TAB> entity` lines. Without it, NP gold comes from the triples'
    /// `gold_sub_id` / `gold_obj_id` fields.
    #[serde(default)]
    pub np_gold: Option<PathBuf>,
    /// `phrase <TAB> relation` lines; relation clusters are only scored when present.
    #[serde(default)]
    pub rel_gold: Option<PathBuf>,
    #[serde(default = "DataConfig::default_fraction")]
    pub validation_fraction: f64,
    /// Whitespace-separated `token v1 ... vd` lines used to initialise embeddings.
    #[serde(default)]
    pub word_vectors: Option<PathBuf>,
}

impl DataConfig {
    fn default_fraction() -> f64 {
        0.2
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterConfig {
    #[serde(default = "default_threshold_grid")]
    pub grid: Vec<f64>,
    /// Fixed cuts; when unset the cut is tuned on validation gold.
    #[serde(default)]
    pub np_threshold: Option<f64>,
    #[serde(default)]
    pub rel_threshold: Option<f64>,
    /// Cut for a kind that has neither a fixed threshold nor validation gold.
    #[serde(default = "ClusterConfig::default_fallback")]
    pub fallback_threshold: f64,
}

impl ClusterConfig {
    fn default_fallback() -> f64 {
        0.5
    }
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            grid: default_threshold_grid(),
            np_threshold: None,
            rel_threshold: None,
            fallback_threshold: Self::default_fallback(),
        }
    }
}

/// Everything one run needs. Relative paths are resolved against the directory of
/// the config file when loaded with [`PipelineConfig::load`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Seeds the split, initialisation and training; overrides `hyper.seed`.
    #[serde(default)]
    pub seed: u64,
    /// Run every stage single-threaded.
    #[serde(default = "yes")]
    pub deterministic: bool,
    pub out_dir: PathBuf,
    pub data: DataConfig,
    #[serde(default)]
    pub side_info: SideInfoConfig,
    #[serde(default)]
    pub hyper: HyperParams,
    #[serde(default)]
    pub clustering: ClusterConfig,
    #[serde(default)]
    pub baselines: Vec<BaselineConfig>,
}

fn yes() -> bool {
    true
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str, base: &Path) -> Result<Self, PipelineError> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base)
    }

    pub fn to_toml_string(&self) -> Result<String, PipelineError> {
        toml::to_string(self).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out_dir);
        fix(&mut self.data.triples);
        self.data.np_gold.as_mut().map(fix);
        self.data.rel_gold.as_mut().map(fix);
        self.data.word_vectors.as_mut().map(fix);
        self.side_info.resolve_paths(base);
    }

    pub fn mode(&self) -> Parallelism {
        if self.deterministic {
            Parallelism::Sequential
        } else {
            Parallelism::Parallel
        }
    }

    /// Training parameters with the run's seed and parallelism applied.
    pub fn effective_hyper(&self) -> HyperParams {
        HyperParams {
            seed: self.seed,
            parallelism: self.mode(),
            ..self.hyper.clone()
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        let must_exist = |what: &str, p: &Path| {
            if p.is_file() {
                Ok(())
            } else {
                Err(PipelineError::Config(format!("{what} {} not found", p.display())))
            }
        };
        must_exist("triples file", &self.data.triples)?;
        for (what, p) in [
            ("np gold file", &self.data.np_gold),
            ("relation gold file", &self.data.rel_gold),
            ("word vectors", &self.data.word_vectors),
        ] {
            if let Some(p) = p {
                must_exist(what, p)?;
            }
        }
        let f = self.data.validation_fraction;
        if !(f > 0.0 && f < 1.0) {
            return bad(format!("validation_fraction must be in (0, 1), got {f}"));
        }
        let c = &self.clustering;
        if c.grid.is_empty() {
            return bad("clustering.grid is empty".into());
        }
        let thresholds = c.grid.iter().chain(&c.np_threshold).chain(&c.rel_threshold);
        for &t in thresholds.chain([&c.fallback_threshold]) {
            if !(0.0..=2.0).contains(&t) {
                return bad(format!("threshold {t} outside [0, 2]"));
            }
        }
        self.side_info.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.effective_hyper()
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        Ok(())
    }
}
