#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::Path;

use okbcanon::kb::{OpenKb, PhraseId, TripleRecord};
use okbcanon::pipeline::{PipelineConfig, SyntheticFiles};
use okbcanon::side_info::SynsetConfig;
use rand::Rng;

/// Training settings that separate the synthetic fixture in well under a second.
pub const SYNTH_HYPER: &str = "dim = 32\nepochs = 200\nlearning_rate = 1.0\nbatch_size = 32\n";

/// Pipeline config over generated files. Synset side information is always loaded;
/// `side_lambda` decides whether it is used.
pub fn synthetic_config(out: &Path, files: &SyntheticFiles, seed: u64, side_lambda: f64) -> PipelineConfig {
    let text = format!(
        "seed = {seed}\nout_dir = {out:?}\n[data]\ntriples = {:?}\nnp_gold = {:?}\nrel_gold = {:?}\n[hyper]\n{SYNTH_HYPER}side_lambda = {side_lambda}\n",
        files.triples, files.np_gold, files.rel_gold
    );
    let mut cfg = PipelineConfig::from_toml_str(&text, Path::new("/")).unwrap();
    cfg.side_info.wordnet = Some(SynsetConfig {
        np_path: Some(files.np_synsets.clone()),
        rel_path: Some(files.rel_synsets.clone()),
    });
    cfg
}

/// Up to `max_triples` distinct random triples over small vocabularies.
pub fn random_kb<R: Rng>(rng: &mut R, n_np: usize, n_rel: usize, max_triples: usize) -> OpenKb {
    let mut seen = BTreeSet::new();
    let n = rng.random_range(1..=max_triples);
    let records: Vec<TripleRecord> = (0..n)
        .map(|_| {
            let t = (
                rng.random_range(0..n_np),
                rng.random_range(0..n_rel),
                rng.random_range(0..n_np),
            );
            seen.insert(t);
            TripleRecord::new(&format!("e{}", t.0), &format!("r{}", t.1), &format!("e{}", t.2))
        })
        .collect();
    OpenKb::from_records(records).unwrap()
}

pub fn ids(v: &[u32]) -> Vec<PhraseId> {
    v.iter().map(|&i| PhraseId(i)).collect()
}
