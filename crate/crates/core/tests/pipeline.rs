mod common;

use std::fs;
use std::path::Path;

use okbcanon::baselines::{Baseline, BaselineConfig};
use okbcanon::pipeline::{grid_search, make_synthetic_kb, run_pipeline, GridSpec, Manifest, SynthSpec, SyntheticFiles};
use serde_json::Value;

fn fixture(dir: &Path, spec: &SynthSpec) -> SyntheticFiles {
    make_synthetic_kb(spec).write(&dir.join("data")).unwrap()
}

/// Train log lines without their wall-clock timings.
fn timing_free_log(path: &Path) -> Vec<Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| {
            let mut v: Value = serde_json::from_str(l).unwrap();
            v.as_object_mut().unwrap().remove("wall_ms");
            v
        })
        .collect()
}

#[test]
fn full_run_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let files = fixture(dir.path(), &SynthSpec::default());
    let cfg = common::synthetic_config(&dir.path().join("run"), &files, 3, 1.0);
    let run = run_pipeline(&cfg).unwrap();
    for name in [
        "split.json",
        "side_info.json",
        "embeddings.json",
        "train_log.jsonl",
        "np_clusters.jsonl",
        "rel_clusters.jsonl",
        "canonical_triples.jsonl",
        "metrics.json",
        "manifest.json",
    ] {
        assert!(run.out_dir.join(name).is_file(), "{name} missing");
    }
    assert_eq!(run.manifest.outputs.len(), 10);
    let metrics: Value = serde_json::from_str(&fs::read_to_string(run.out_dir.join("metrics.json")).unwrap()).unwrap();
    assert!(metrics.to_string().contains("macro_f1"));
    let canon = fs::read_to_string(run.out_dir.join("canonical_triples.jsonl")).unwrap();
    assert_eq!(canon.lines().count(), 200);
    assert_eq!(run.evaluation.rows.len(), 1);
}

#[test]
fn manifest_alone_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let files = fixture(dir.path(), &SynthSpec::default());
    let cfg = common::synthetic_config(&dir.path().join("first"), &files, 8, 1.0);
    let first = run_pipeline(&cfg).unwrap();

    let manifest = Manifest::load(&first.out_dir.join("manifest.json")).unwrap();
    let mut again = manifest.config.clone();
    again.out_dir = dir.path().join("second");
    let second = run_pipeline(&again).unwrap();

    for (name, hash) in &manifest.outputs {
        if name == "train_log" {
            continue;
        }
        assert_eq!(&second.manifest.outputs[name], hash, "{name} differs");
    }
    assert_eq!(
        timing_free_log(&first.out_dir.join("train_log.jsonl")),
        timing_free_log(&second.out_dir.join("train_log.jsonl"))
    );
    assert_eq!(manifest.inputs, second.manifest.inputs);
}

#[test]
fn disabling_side_information_reduces_to_the_structure_only_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let files = fixture(dir.path(), &SynthSpec::default());
    let mut cfg = common::synthetic_config(&dir.path().join("run"), &files, 6, 0.0);
    cfg.baselines.push(BaselineConfig::new(Baseline::HoleRandom));
    let run = run_pipeline(&cfg).unwrap();
    for kind in ["np", "rel"] {
        let main = fs::read(run.out_dir.join(format!("{kind}_clusters.jsonl"))).unwrap();
        let base = fs::read(run.out_dir.join(format!("baselines/hole_random_{kind}_clusters.jsonl"))).unwrap();
        assert_eq!(main, base, "{kind} clusters differ");
    }
    let rows = &run.evaluation.rows;
    assert_eq!(rows[0].scores, rows[1].scores);
}

#[test]
fn gold_labels_do_not_leak_into_fixed_threshold_runs() {
    let dir = tempfile::tempdir().unwrap();
    let files = fixture(dir.path(), &SynthSpec::default());
    let scrambled = dir.path().join("scrambled_np_gold.tsv");
    let text = fs::read_to_string(&files.np_gold).unwrap();
    let lines: Vec<String> = text
        .lines()
        .enumerate()
        .map(|(i, l)| {
            let phrase = l.split('\t').next().unwrap();
            format!("{phrase}\tX{}", i % 7)
        })
        .collect();
    fs::write(&scrambled, lines.join("\n") + "\n").unwrap();

    let run = |out: &str, np_gold: &Path| {
        let mut cfg = common::synthetic_config(&dir.path().join(out), &files, 2, 1.0);
        cfg.data.np_gold = Some(np_gold.to_path_buf());
        cfg.clustering.np_threshold = Some(0.3);
        cfg.clustering.rel_threshold = Some(0.3);
        run_pipeline(&cfg).unwrap().out_dir
    };
    let (a, b) = (run("real", &files.np_gold), run("scrambled", &scrambled));
    for name in ["side_info.json", "embeddings.json", "np_clusters.jsonl", "rel_clusters.jsonl", "canonical_triples.jsonl"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name} depends on gold");
    }
}

#[test]
fn grid_with_one_point_matches_a_plain_run() {
    let dir = tempfile::tempdir().unwrap();
    let files = fixture(dir.path(), &SynthSpec::default());
    let cfg = common::synthetic_config(&dir.path().join("run"), &files, 1, 1.0);
    let mut grid = GridSpec::new();
    grid.insert("hyper.side_lambda".into(), vec![1.0.into()]);
    let outcome = grid_search(&cfg, &grid).unwrap();
    assert_eq!(outcome.rows.len(), 1);
    assert_eq!(outcome.best_index, 0);
    let plain = run_pipeline(&cfg).unwrap();
    assert_eq!(outcome.rows[0].test, plain.evaluation.rows[0].scores);
}

#[test]
fn grid_enumerates_every_point_and_writes_the_best_config() {
    let dir = tempfile::tempdir().unwrap();
    let files = fixture(dir.path(), &SynthSpec::default());
    let cfg = common::synthetic_config(&dir.path().join("run"), &files, 1, 1.0);
    let mut grid = GridSpec::new();
    grid.insert("hyper.epochs".into(), vec![50.into(), 100.into()]);
    grid.insert("hyper.side_lambda".into(), vec![0.0.into(), 0.5.into()]);
    let outcome = grid_search(&cfg, &grid).unwrap();
    assert_eq!(outcome.rows.len(), 4);
    let best = &outcome.rows[outcome.best_index];
    assert!(outcome.rows.iter().all(|r| r.criterion <= best.criterion));
    let lines = fs::read_to_string(cfg.out_dir.join("grid/leaderboard.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 4);
    let written = fs::read_to_string(cfg.out_dir.join("grid/best_config.toml")).unwrap();
    let back = okbcanon::pipeline::PipelineConfig::from_toml_str(&written, Path::new("/")).unwrap();
    assert_eq!(back.hyper.epochs, outcome.best.hyper.epochs);
    assert_eq!(back.hyper.side_lambda, outcome.best.hyper.side_lambda);
}

#[test]
fn grid_finds_the_point_that_separates_the_fixture() {
    // Two aliases per entity and full side coverage: with side information on, every
    // alias pair is tied together.
    let spec = SynthSpec {
        aliases_per_entity: 2,
        np_side_coverage: 1.0,
        rel_side_coverage: 1.0,
        ..SynthSpec::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let files = fixture(dir.path(), &spec);
    let cfg = common::synthetic_config(&dir.path().join("run"), &files, 0, 1.0);
    let mut grid = GridSpec::new();
    grid.insert("hyper.side_lambda".into(), vec![0.0.into(), 1.0.into()]);
    let outcome = grid_search(&cfg, &grid).unwrap();
    let best = &outcome.rows[outcome.best_index];
    assert_eq!(best.overrides["hyper.side_lambda"], toml::Value::from(1.0));
    let np = |i: usize| outcome.rows[i].validation_np.as_ref().unwrap().mean_f1();
    assert_eq!(np(outcome.best_index), 1.0);
    assert!(np(0) < 1.0);
}
