use std::collections::BTreeMap;
use std::fs;

use serde::{Deserialize, Serialize};

use crate::embedding::train;
use crate::kb::split_validation;
use crate::metrics::MetricsReport;
use crate::par;
use crate::side_info::{assemble_side_info, SideInfoCollection};

use super::{
    at, cluster_all, initial_embeddings, leaderboard_table, load_kb, load_np_gold, load_rel_gold, score, write_json,
    Golds, KindScores, PipelineConfig, PipelineError, Stage, StageError,
};

/// Dotted config key (`hyper.side_lambda`, `side_info.ppdb.confidence_min`, ...) to
/// the values it takes.
pub type GridSpec = BTreeMap<String, Vec<toml::Value>>;

/// Every combination, first key varying slowest.
pub fn grid_points(grid: &GridSpec) -> Vec<Vec<(String, toml::Value)>> {
    let keys: Vec<(&String, &Vec<toml::Value>)> = grid.iter().collect();
    if keys.iter().any(|(_, v)| v.is_empty()) {
        return Vec::new();
    }
    let mut counters = vec![0usize; keys.len()];
    let mut out = Vec::new();
    loop {
        out.push(
            keys.iter()
                .zip(&counters)
                .map(|((k, vals), &i)| ((*k).clone(), vals[i].clone()))
                .collect(),
        );
        let mut pos = keys.len();
        loop {
            if pos == 0 {
                return out;
            }
            pos -= 1;
            counters[pos] += 1;
            if counters[pos] < keys[pos].1.len() {
                break;
            }
            counters[pos] = 0;
        }
    }
}

const FIXED_KEYS: [&str; 3] = ["data", "out_dir", "baselines"];

/// Set one dotted key of `cfg`, re-validating the structure.
pub fn apply_override(cfg: &PipelineConfig, key: &str, value: &toml::Value) -> Result<PipelineConfig, PipelineError> {
    let bad = |m: String| PipelineError::Config(m);
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(bad(format!("malformed grid key {key:?}")));
    }
    if FIXED_KEYS.contains(&parts[0]) {
        return Err(bad(format!("grid key {key:?} cannot be searched over")));
    }
    let mut root = toml::Value::try_from(cfg).map_err(|e| bad(e.to_string()))?;
    let mut node = &mut root;
    for p in &parts[..parts.len() - 1] {
        let table = node.as_table_mut().ok_or_else(|| bad(format!("grid key {key:?} does not name a table")))?;
        node = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()));
    }
    node.as_table_mut()
        .ok_or_else(|| bad(format!("grid key {key:?} does not name a table")))?
        .insert(parts[parts.len() - 1].to_string(), value.clone());
    root.try_into().map_err(|e: toml::de::Error| bad(format!("grid key {key:?}: {e}")))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub index: usize,
    pub overrides: BTreeMap<String, toml::Value>,
    pub np_threshold: f64,
    pub rel_threshold: f64,
    pub validation_np: Option<MetricsReport>,
    pub validation_rel: Option<MetricsReport>,
    /// Mean F1 on validation, averaged over the kinds that have validation gold.
    pub criterion: f64,
    pub test: KindScores,
}

impl GridRow {
    pub fn label(&self) -> String {
        let parts: Vec<String> = self.overrides.iter().map(|(k, v)| format!("{k}={v}")).collect();
        format!("#{} {}", self.index, parts.join(", "))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridOutcome {
    pub best_index: usize,
    pub best: PipelineConfig,
    pub rows: Vec<GridRow>,
}

/// Exhaustive search over `grid`, selecting on validation mean F1; ties go to the
/// earliest point. Side information is computed once per distinct side-info setting.
/// Writes `grid/leaderboard.jsonl`, `grid/leaderboard.md` and `grid/best_config.toml`
/// under the base config's output directory.
pub fn grid_search(base: &PipelineConfig, grid: &GridSpec) -> Result<GridOutcome, PipelineError> {
    let s = Stage::GridSearch;
    if grid.is_empty() {
        return Err(PipelineError::Config("grid is empty".into()));
    }
    let points = grid_points(grid);
    if points.is_empty() {
        return Err(PipelineError::Config("a grid key has no values".into()));
    }
    let configs: Vec<PipelineConfig> = points
        .iter()
        .map(|overrides| {
            let mut cfg = base.clone();
            for (k, v) in overrides {
                cfg = apply_override(&cfg, k, v)?;
            }
            cfg.validate()?;
            Ok(cfg)
        })
        .collect::<Result<_, PipelineError>>()?;

    let kb = load_kb(base).map_err(at(s))?;
    let (np_gold, _) = load_np_gold(base, &kb).map_err(at(s))?;
    let rel_gold = load_rel_gold(base, &kb).map_err(at(s))?;
    if np_gold.is_empty() {
        return Err(PipelineError::Config("grid search needs NP validation gold".into()));
    }

    let mut side_cache: BTreeMap<String, SideInfoCollection> = BTreeMap::new();
    for cfg in &configs {
        let key = serde_json::to_string(&cfg.side_info).expect("side info config serializes");
        if let std::collections::btree_map::Entry::Vacant(slot) = side_cache.entry(key) {
            let (side, _) = assemble_side_info(&kb, &cfg.side_info, cfg.mode()).map_err(at(s))?;
            slot.insert(side);
        }
    }

    let jobs: Vec<usize> = (0..configs.len()).collect();
    let results: Vec<Result<GridRow, StageError>> = par::map_slice(&jobs, base.mode(), |&i| {
        let cfg = &configs[i];
        let split = split_validation(&kb, &np_gold, cfg.data.validation_fraction, cfg.seed)?;
        let golds = Golds::new(&kb, Some(&split), &np_gold, rel_gold.as_ref());
        if golds.np_validation.is_none() {
            return Err(StageError::Inconsistent("validation split has no NP gold".into()));
        }
        let side = &side_cache[&serde_json::to_string(&cfg.side_info).expect("side info config serializes")];
        let init = initial_embeddings(cfg, &kb)?;
        let emb = train(&kb, side, &cfg.effective_hyper(), init)?.embeddings;
        let out = cluster_all(cfg, &kb, &emb, &golds)?;
        let chosen = |c: &Option<crate::canonicalize::ThresholdChoice>| {
            c.as_ref().and_then(|c| c.scores.iter().find(|(t, _)| *t == c.threshold).map(|(_, r)| r.clone()))
        };
        let validation_np = chosen(&out.np_choice);
        let validation_rel = chosen(&out.rel_choice);
        let means: Vec<f64> = [&validation_np, &validation_rel]
            .into_iter()
            .flatten()
            .map(MetricsReport::mean_f1)
            .collect();
        let criterion = if means.is_empty() { 0.0 } else { means.iter().sum::<f64>() / means.len() as f64 };
        Ok(GridRow {
            index: i,
            overrides: points[i].iter().cloned().collect(),
            np_threshold: out.np.threshold_used,
            rel_threshold: out.rel.threshold_used,
            validation_np,
            validation_rel,
            criterion,
            test: score(&out.np, &out.rel, &golds)?,
        })
    });
    let rows: Vec<GridRow> = results.into_iter().collect::<Result<_, _>>().map_err(at(s))?;

    let mut best_index = 0;
    for row in &rows {
        if row.criterion > rows[best_index].criterion {
            best_index = row.index;
        }
    }
    let best = configs[best_index].clone();

    let dir = base.out_dir.join("grid");
    fs::create_dir_all(&dir)
        .map_err(|e| PipelineError::Config(format!("{}: {e}", dir.display())))?;
    let mut jsonl = String::new();
    for row in &rows {
        jsonl.push_str(&serde_json::to_string(row).expect("grid rows serialize"));
        jsonl.push('\n');
    }
    let write = |name: &str, text: String| {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|source| StageError::Io { path, source })
    };
    write("leaderboard.jsonl", jsonl).map_err(at(s))?;
    let table: Vec<(String, Option<MetricsReport>)> = rows.iter().map(|r| (r.label(), r.test.np.clone())).collect();
    write("leaderboard.md", leaderboard_table(&table)).map_err(at(s))?;
    write("best_config.toml", best.to_toml_string()?).map_err(at(s))?;
    write_json(&dir.join("best.json"), &rows[best_index]).map_err(at(s))?;
    Ok(GridOutcome { best_index, best, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::Path;

    fn base() -> PipelineConfig {
        PipelineConfig::from_toml_str("out_dir = \"/r\"\n[data]\ntriples = \"/t\"\n", Path::new("/")).unwrap()
    }

    #[test]
    fn odometer_order() {
        let mut g = GridSpec::new();
        g.insert("a".into(), vec![1.into(), 2.into()]);
        g.insert("b".into(), vec![10.into(), 20.into(), 30.into()]);
        let pts = grid_points(&g);
        assert_eq!(pts.len(), 6);
        let flat: Vec<(i64, i64)> = pts
            .iter()
            .map(|p| (p[0].1.as_integer().unwrap(), p[1].1.as_integer().unwrap()))
            .collect();
        assert_eq!(flat, vec![(1, 10), (1, 20), (1, 30), (2, 10), (2, 20), (2, 30)]);
        g.insert("c".into(), vec![]);
        assert!(grid_points(&g).is_empty());
    }

    #[test]
    fn overrides() {
        let cfg = apply_override(&base(), "hyper.side_lambda", &toml::Value::Float(0.5)).unwrap();
        assert_eq!(cfg.hyper.side_lambda, 0.5);
        let cfg = apply_override(&cfg, "side_info.amie.support_min", &toml::Value::Integer(3)).unwrap();
        assert_eq!(cfg.side_info.amie.unwrap().support_min, 3);
        let cfg = apply_override(&base(), "seed", &toml::Value::Integer(9)).unwrap();
        assert_eq!(cfg.seed, 9);
        assert!(apply_override(&base(), "hyper.nonsense", &toml::Value::Integer(1)).is_err());
        assert!(apply_override(&base(), "data.triples", &toml::Value::String("x".into())).is_err());
        assert!(apply_override(&base(), "hyper..dim", &toml::Value::Integer(1)).is_err());
    }

    #[test]
    fn empty_grid_is_config_error() {
        assert!(matches!(grid_search(&base(), &GridSpec::new()), Err(PipelineError::Config(_))));
    }
}
