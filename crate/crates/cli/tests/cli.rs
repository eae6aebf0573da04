use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn okbcanon(args: &[&str], cwd: &Path) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_okbcanon"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    out
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = okbcanon(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn stages_as_separate_processes_match_a_single_run() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    ok(&["synth", "--out", "fixture", "--seed", "4"], root);
    let config = root.join("fixture/config.toml");
    assert!(config.is_file());
    let cfg = config.to_str().unwrap();

    for stage in ["ingest", "sideinfo", "embed", "cluster", "evaluate"] {
        ok(&[stage, "--config", cfg, "--out", "staged"], root);
    }
    let table = ok(&["pipeline", "--config", cfg, "--out", "whole"], root);
    assert!(table.starts_with("| Method | Macro F1 | Micro F1 | Pair. F1 | Average |"));

    for name in [
        "split.json",
        "side_info.json",
        "embeddings.json",
        "np_clusters.jsonl",
        "rel_clusters.jsonl",
        "canonical_triples.jsonl",
        "metrics.json",
        "leaderboard.md",
    ] {
        let a = fs::read(root.join("staged").join(name)).unwrap();
        let b = fs::read(root.join("whole").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs");
    }
    assert!(root.join("whole/manifest.json").is_file());
}

#[test]
fn a_stage_reads_only_the_files_it_is_pointed_at() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    ok(&["synth", "--out", "fixture"], root);
    let cfg = root.join("fixture/config.toml");
    let cfg = cfg.to_str().unwrap();
    ok(&["ingest", "--config", cfg, "--out", "run", "--split", "elsewhere/split.json"], root);
    assert!(root.join("elsewhere/split.json").is_file());
    assert!(!root.join("run/split.json").exists());

    ok(&["sideinfo", "--config", cfg, "--out", "run"], root);
    ok(&["embed", "--config", cfg, "--out", "run"], root);

    // clustering needs the split, which is not in the run directory
    let out = okbcanon(&["cluster", "--config", cfg, "--out", "run"], root);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("cluster stage failed"));
    ok(&["cluster", "--config", cfg, "--out", "run", "--split", "elsewhere/split.json"], root);
    assert!(root.join("run/np_clusters.jsonl").is_file());
}

#[test]
fn grid_search_from_a_grid_file() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    ok(&["synth", "--out", "fixture"], root);
    fs::write(root.join("grid.toml"), "[hyper]\nside_lambda = [0.0, 1.0]\nepochs = [50, 100]\n").unwrap();
    let cfg = root.join("fixture/config.toml");
    let stdout = ok(&["grid-search", "--config", cfg.to_str().unwrap(), "--grid", "grid.toml", "--out", "g"], root);
    assert!(stdout.contains("best point"));
    let board = fs::read_to_string(root.join("g/grid/leaderboard.md")).unwrap();
    assert_eq!(board.lines().count(), 2 + 4);
    assert!(root.join("g/grid/best_config.toml").is_file());
}

#[test]
fn bad_config_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    ok(&["synth", "--out", "fixture"], root);
    let cfg = root.join("fixture/config.toml");
    let text = fs::read_to_string(&cfg).unwrap();
    fs::write(&cfg, text.replace("[hyper]\n", "[hyper]\nlearning_rte = 0.1\n")).unwrap();
    let out = okbcanon(&["pipeline", "--config", cfg.to_str().unwrap()], root);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rte"));

    let out = okbcanon(&["ingest"], root);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--config"));
}
