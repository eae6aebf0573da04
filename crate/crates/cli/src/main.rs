use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use okbcanon::pipeline::{
    grid_search, leaderboard_table, make_synthetic_kb, write_manifest, GridSpec, PipelineConfig, Runner, SynthSpec,
};

#[derive(Parser)]
#[command(name = "okbcanon", version, about = "Canonicalize noun and relation phrases of an open KB")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Pipeline config (TOML). Relative paths inside resolve against its directory.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the run seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Single-threaded, bit-reproducible execution.
    #[arg(long, global = true, conflicts_with = "parallel")]
    deterministic: bool,
    /// Allow data-parallel execution.
    #[arg(long, global = true)]
    parallel: bool,
    /// Run directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(flatten)]
    paths: PathOverrides,
}

/// Per-artifact locations; each defaults to a fixed name in the run directory.
#[derive(Args, Default)]
struct PathOverrides {
    #[arg(long, global = true, value_name = "PATH")]
    split: Option<PathBuf>,
    #[arg(long, global = true, value_name = "PATH")]
    side_info: Option<PathBuf>,
    #[arg(long, global = true, value_name = "PATH")]
    embeddings: Option<PathBuf>,
    #[arg(long, global = true, value_name = "PATH")]
    train_log: Option<PathBuf>,
    #[arg(long, global = true, value_name = "PATH")]
    np_clusters: Option<PathBuf>,
    #[arg(long, global = true, value_name = "PATH")]
    rel_clusters: Option<PathBuf>,
    #[arg(long, global = true, value_name = "PATH")]
    canonical: Option<PathBuf>,
    #[arg(long, global = true, value_name = "PATH")]
    cluster_report: Option<PathBuf>,
    #[arg(long, global = true, value_name = "PATH")]
    metrics: Option<PathBuf>,
    #[arg(long, global = true, value_name = "PATH")]
    leaderboard: Option<PathBuf>,
    #[arg(long, global = true, value_name = "PATH")]
    manifest: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Load triples and gold, write the validation/test split.
    Ingest,
    /// Collect side information from the configured providers.
    Sideinfo,
    /// Train phrase embeddings.
    Embed,
    /// Cluster embeddings and rewrite the triples canonically.
    Cluster,
    /// Score clusters and configured baselines against test gold.
    Evaluate,
    /// Every stage in order, then the manifest.
    Pipeline,
    /// Exhaustive search over a grid of config overrides.
    GridSearch {
        /// TOML file mapping dotted config keys to value lists, e.g. `"hyper.dim" = [32, 64]`.
        #[arg(long)]
        grid: PathBuf,
    },
    /// Generate a synthetic KB with gold, synonym files and a ready-to-run config.
    Synth {
        /// Generator settings (TOML); defaults apply to missing keys.
        #[arg(long)]
        spec: Option<PathBuf>,
    },
}

fn load_config(common: &Common) -> Result<PipelineConfig> {
    let path = common.config.as_ref().context("--config is required for this command")?;
    let mut cfg = PipelineConfig::load(path)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if common.deterministic {
        cfg.deterministic = true;
    }
    if common.parallel {
        cfg.deterministic = false;
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn runner<'a>(cfg: &'a PipelineConfig, p: &PathOverrides) -> Result<Runner<'a>> {
    fs::create_dir_all(&cfg.out_dir).with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    let mut r = Runner::new(cfg);
    let a = &mut r.art;
    for (slot, over) in [
        (&mut a.split, &p.split),
        (&mut a.side_info, &p.side_info),
        (&mut a.embeddings, &p.embeddings),
        (&mut a.train_log, &p.train_log),
        (&mut a.np_clusters, &p.np_clusters),
        (&mut a.rel_clusters, &p.rel_clusters),
        (&mut a.canonical_triples, &p.canonical),
        (&mut a.cluster_report, &p.cluster_report),
        (&mut a.metrics, &p.metrics),
        (&mut a.leaderboard, &p.leaderboard),
        (&mut a.manifest, &p.manifest),
    ] {
        if let Some(path) = over {
            *slot = path.clone();
        }
    }
    Ok(r)
}

/// Flatten nested tables into dotted keys; leaves must be arrays.
fn flatten_grid(prefix: &str, table: &toml::Table, out: &mut GridSpec) -> Result<()> {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            toml::Value::Table(t) => flatten_grid(&key, t, out)?,
            toml::Value::Array(values) => {
                out.insert(key, values.clone());
            }
            other => bail!("grid entry {key} must be a list of values, got {other}"),
        }
    }
    Ok(())
}

fn load_grid(path: &Path) -> Result<GridSpec> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let table: toml::Table = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let mut grid = GridSpec::new();
    flatten_grid("", &table, &mut grid)?;
    Ok(grid)
}

fn synth(common: &Common, spec_path: Option<&Path>) -> Result<()> {
    let out = common.out.as_ref().context("synth needs --out")?;
    let mut spec: SynthSpec = match spec_path {
        Some(p) => toml::from_str(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => SynthSpec::default(),
    };
    if let Some(seed) = common.seed {
        spec.seed = seed;
    }
    let kb = make_synthetic_kb(&spec);
    kb.write(&out.join("data"))?;
    let config = format!(
        "seed = {}\nout_dir = \"run\"\n\n[data]\ntriples = \"data/triples.jsonl\"\nnp_gold = \"data/np_gold.tsv\"\nrel_gold = \"data/rel_gold.tsv\"\n\n\
         [side_info.wordnet]\nnp_path = \"data/np_synsets.tsv\"\nrel_path = \"data/rel_synsets.tsv\"\n\n\
         [hyper]\ndim = 32\nepochs = 200\nlearning_rate = 1.0\nbatch_size = 32\nside_lambda = 1.0\n",
        spec.seed
    );
    // make sure the written config parses before handing it out
    PipelineConfig::from_toml_str(&config, out)?;
    fs::write(out.join("config.toml"), config)?;
    println!(
        "wrote {} triples, {} noun phrases, {} relation phrases to {}",
        kb.records.len(),
        kb.np_gold.len(),
        kb.rel_gold.len(),
        out.display()
    );
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Command::Synth { spec } = &cli.command {
        return synth(&cli.common, spec.as_deref());
    }
    let cfg = load_config(&cli.common)?;
    match &cli.command {
        Command::Ingest => {
            let report = runner(&cfg, &cli.common.paths)?.ingest()?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Sideinfo => {
            let art = runner(&cfg, &cli.common.paths)?.sideinfo()?;
            println!("{}", serde_json::to_string_pretty(&art.coverage)?);
        }
        Command::Embed => {
            let log = runner(&cfg, &cli.common.paths)?.embed()?;
            if let Some(last) = log.last() {
                println!("trained {} epochs, final loss {:.6}", log.len(), last.total);
            }
        }
        Command::Cluster => {
            let report = runner(&cfg, &cli.common.paths)?.cluster()?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Evaluate => {
            let r = runner(&cfg, &cli.common.paths)?;
            r.evaluate()?;
            print!("{}", fs::read_to_string(&r.art.leaderboard)?);
        }
        Command::Pipeline => {
            let r = runner(&cfg, &cli.common.paths)?;
            r.ingest()?;
            r.sideinfo()?;
            r.embed()?;
            r.cluster()?;
            let eval = r.evaluate()?;
            write_manifest(&cfg, &r.art)?;
            let rows: Vec<_> = eval.rows.iter().map(|row| (row.method.clone(), row.scores.np.clone())).collect();
            print!("{}", leaderboard_table(&rows));
        }
        Command::GridSearch { grid } => {
            let spec = load_grid(grid)?;
            let outcome = grid_search(&cfg, &spec)?;
            let best = &outcome.rows[outcome.best_index];
            println!(
                "best point {} with validation criterion {:.4}; config in {}",
                best.label(),
                best.criterion,
                cfg.out_dir.join("grid/best_config.toml").display()
            );
        }
        Command::Synth { .. } => unreachable!(),
    }
    Ok(())
}
