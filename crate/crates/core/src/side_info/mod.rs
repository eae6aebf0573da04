//! Soft equivalence evidence between phrases.
//!
//! Every provider yields an [`EquivalencePairSet`]: a named set of unordered phrase
//! pairs of one kind. NP providers: entity linking, paraphrase database, synsets,
//! IDF token overlap and morphological normalization. Relation providers: paraphrase
//! database, synsets, mined implication rules and relation categories.

mod amie;
mod idf;
mod morph;
mod resources;

use std::collections::{BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kb::{OpenKb, PhraseId, PhraseKind};
use crate::par::Parallelism;

pub use amie::{amie_mine, argument_pairs, rule_stats, RuleStats};
pub use idf::{build_df, content_tokens, idf_equivalences, idf_overlap_score, stopwords, DocumentFrequency};
pub use morph::{morph_equivalences, morph_normalize, normal_forms};
pub use resources::{
    entity_link_equivalences, kbp_equivalences, np_links, ppdb_equivalences, synset_equivalences, PpdbLoadReport,
};

#[derive(Debug, Error)]
pub enum SideInfoError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("configuration: {0}")]
    Config(String),
}

/// Unordered, irreflexive phrase pairs from one source.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquivalencePairSet {
    pub source_name: String,
    pub kind: PhraseKind,
    pairs: BTreeSet<(PhraseId, PhraseId)>,
}

impl EquivalencePairSet {
    pub fn new(source_name: &str, kind: PhraseKind) -> Self {
        EquivalencePairSet {
            source_name: source_name.to_string(),
            kind,
            pairs: BTreeSet::new(),
        }
    }

    /// Every pair of distinct members within each group.
    pub fn from_groups<I, G>(source_name: &str, kind: PhraseKind, groups: I) -> Self
    where
        I: IntoIterator<Item = G>,
        G: IntoIterator<Item = PhraseId>,
    {
        let mut set = Self::new(source_name, kind);
        for g in groups {
            let mut members: Vec<PhraseId> = g.into_iter().collect();
            members.sort_unstable();
            members.dedup();
            for (i, &a) in members.iter().enumerate() {
                for &b in &members[i + 1..] {
                    set.insert(a, b);
                }
            }
        }
        set
    }

    /// Insert `{a, b}`. Self-pairs are ignored. Returns whether the pair was new.
    pub fn insert(&mut self, a: PhraseId, b: PhraseId) -> bool {
        match a.cmp(&b) {
            std::cmp::Ordering::Equal => false,
            std::cmp::Ordering::Less => self.pairs.insert((a, b)),
            std::cmp::Ordering::Greater => self.pairs.insert((b, a)),
        }
    }

    pub fn contains(&self, a: PhraseId, b: PhraseId) -> bool {
        self.pairs.contains(&(a.min(b), a.max(b)))
    }

    /// Pairs with the smaller id first, in ascending order.
    pub fn pairs(&self) -> impl ExactSizeIterator<Item = (PhraseId, PhraseId)> + '_ {
        self.pairs.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Phrases appearing in at least one pair.
    pub fn touched(&self) -> BTreeSet<PhraseId> {
        self.pairs.iter().flat_map(|&(a, b)| [a, b]).collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SideInfoCollection {
    pub np_sources: Vec<EquivalencePairSet>,
    pub rel_sources: Vec<EquivalencePairSet>,
}

impl SideInfoCollection {
    pub fn is_empty(&self) -> bool {
        self.np_sources.is_empty() && self.rel_sources.is_empty()
    }

    /// Add a source to the list matching its kind. Names must be unique per kind.
    pub fn push(&mut self, set: EquivalencePairSet) -> Result<(), SideInfoError> {
        let list = match set.kind {
            PhraseKind::Np => &mut self.np_sources,
            PhraseKind::Rel => &mut self.rel_sources,
        };
        if list.iter().any(|s| s.source_name == set.source_name) {
            return Err(SideInfoError::Config(format!(
                "duplicate {} source {:?}",
                set.kind, set.source_name
            )));
        }
        list.push(set);
        Ok(())
    }

    pub fn sources(&self, kind: PhraseKind) -> &[EquivalencePairSet] {
        match kind {
            PhraseKind::Np => &self.np_sources,
            PhraseKind::Rel => &self.rel_sources,
        }
    }

    /// Check every pair references a phrase of the declared kind in `kb`.
    pub fn validate(&self, kb: &OpenKb) -> Result<(), SideInfoError> {
        for kind in [PhraseKind::Np, PhraseKind::Rel] {
            let n = kb.num_phrases(kind);
            for s in self.sources(kind) {
                if s.kind != kind {
                    return Err(SideInfoError::Config(format!("source {} filed under wrong kind", s.source_name)));
                }
                if let Some((a, b)) = s.pairs().find(|&(a, b)| a.index() >= n || b.index() >= n) {
                    return Err(SideInfoError::Config(format!(
                        "source {} references unknown {kind} phrase in pair ({a}, {b})",
                        s.source_name
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PpdbConfig {
    pub path: PathBuf,
    #[serde(default = "PpdbConfig::default_confidence")]
    pub confidence_min: f64,
    #[serde(default = "yes")]
    pub np: bool,
    #[serde(default = "yes")]
    pub rel: bool,
}

impl PpdbConfig {
    fn default_confidence() -> f64 {
        0.0
    }
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynsetConfig {
    #[serde(default)]
    pub np_path: Option<PathBuf>,
    #[serde(default)]
    pub rel_path: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmieConfig {
    #[serde(default = "AmieConfig::default_support")]
    pub support_min: usize,
    #[serde(default = "AmieConfig::default_confidence")]
    pub confidence_min: f64,
}

impl AmieConfig {
    fn default_support() -> usize {
        2
    }
    fn default_confidence() -> f64 {
        0.2
    }
}

impl Default for AmieConfig {
    fn default() -> Self {
        AmieConfig {
            support_min: 2,
            confidence_min: 0.2,
        }
    }
}

/// Which providers run and where their resources live. Everything is off by default.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SideInfoConfig {
    #[serde(default)]
    pub entity_linking: bool,
    #[serde(default)]
    pub morph: bool,
    /// IDF overlap cutoff; `None` disables the provider.
    #[serde(default)]
    pub idf_cutoff: Option<f64>,
    #[serde(default)]
    pub ppdb: Option<PpdbConfig>,
    #[serde(default)]
    pub wordnet: Option<SynsetConfig>,
    #[serde(default)]
    pub amie: Option<AmieConfig>,
    #[serde(default)]
    pub kbp: Option<PathBuf>,
}

impl SideInfoConfig {
    /// Resolve relative resource paths against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = &mut self.ppdb {
            fix(&mut p.path);
        }
        if let Some(w) = &mut self.wordnet {
            w.np_path.as_mut().map(fix);
            w.rel_path.as_mut().map(fix);
        }
        self.kbp.as_mut().map(fix);
    }

    /// Every enabled provider's resource must exist.
    pub fn validate(&self) -> Result<(), SideInfoError> {
        let check = |what: &str, p: &Path| {
            if p.is_file() {
                Ok(())
            } else {
                Err(SideInfoError::Config(format!("{what} resource {} not found", p.display())))
            }
        };
        if let Some(p) = &self.ppdb {
            check("ppdb", &p.path)?;
        }
        if let Some(w) = &self.wordnet {
            if w.np_path.is_none() && w.rel_path.is_none() {
                return Err(SideInfoError::Config("wordnet enabled without any synset file".into()));
            }
            if let Some(p) = &w.np_path {
                check("wordnet np", p)?;
            }
            if let Some(p) = &w.rel_path {
                check("wordnet rel", p)?;
            }
        }
        if let Some(p) = &self.kbp {
            check("kbp", p)?;
        }
        if let Some(c) = self.idf_cutoff {
            if !(0.0..=1.0).contains(&c) {
                return Err(SideInfoError::Config(format!("idf cutoff {c} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceCoverage {
    pub source_name: String,
    pub kind: PhraseKind,
    pub phrases_covered: usize,
    pub fraction_covered: f64,
    pub pairs: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub num_nps: usize,
    pub num_rels: usize,
    pub sources: Vec<SourceCoverage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ppdb_load: Option<PpdbLoadReport>,
}

impl CoverageReport {
    pub fn of(kb: &OpenKb, side: &SideInfoCollection) -> Self {
        let mut report = CoverageReport {
            num_nps: kb.num_phrases(PhraseKind::Np),
            num_rels: kb.num_phrases(PhraseKind::Rel),
            ..Default::default()
        };
        for kind in [PhraseKind::Np, PhraseKind::Rel] {
            let total = kb.num_phrases(kind).max(1) as f64;
            for s in side.sources(kind) {
                let covered = s.touched().len();
                report.sources.push(SourceCoverage {
                    source_name: s.source_name.clone(),
                    kind,
                    phrases_covered: covered,
                    fraction_covered: covered as f64 / total,
                    pairs: s.len(),
                });
            }
        }
        report
    }
}

/// Run every enabled provider. NP sources are collected in the order entity linking,
/// ppdb, wordnet, idf overlap, morph; relation sources in the order ppdb, wordnet,
/// amie, kbp.
pub fn assemble_side_info(
    kb: &OpenKb,
    config: &SideInfoConfig,
    mode: Parallelism,
) -> Result<(SideInfoCollection, CoverageReport), SideInfoError> {
    config.validate()?;
    let mut side = SideInfoCollection::default();
    let mut ppdb_load = None;

    if config.entity_linking {
        side.push(entity_link_equivalences(kb))?;
    }
    let mut ppdb_rel = None;
    if let Some(p) = &config.ppdb {
        if p.np {
            let (set, report) = ppdb_equivalences(&p.path, p.confidence_min, kb, PhraseKind::Np)?;
            side.push(set)?;
            ppdb_load = Some(report);
        }
        if p.rel {
            let (set, report) = ppdb_equivalences(&p.path, p.confidence_min, kb, PhraseKind::Rel)?;
            ppdb_rel = Some(set);
            ppdb_load.get_or_insert(report);
        }
    }
    let mut wordnet_rel = None;
    if let Some(w) = &config.wordnet {
        if let Some(p) = &w.np_path {
            side.push(synset_equivalences(p, kb, PhraseKind::Np)?)?;
        }
        if let Some(p) = &w.rel_path {
            wordnet_rel = Some(synset_equivalences(p, kb, PhraseKind::Rel)?);
        }
    }
    if let Some(cutoff) = config.idf_cutoff {
        let df = build_df(kb);
        side.push(idf_equivalences(kb, &df, cutoff, mode))?;
    }
    if config.morph {
        side.push(morph_equivalences(kb, PhraseKind::Np))?;
    }

    for set in [ppdb_rel, wordnet_rel].into_iter().flatten() {
        side.push(set)?;
    }
    if let Some(a) = &config.amie {
        side.push(amie_mine(kb, a.support_min, a.confidence_min))?;
    }
    if let Some(p) = &config.kbp {
        side.push(kbp_equivalences(p, kb)?)?;
    }

    let mut report = CoverageReport::of(kb, &side);
    report.ppdb_load = ppdb_load;
    for s in &report.sources {
        log::info!(
            "side info {}/{}: {} pairs, {:.1}% of phrases covered",
            s.kind,
            s.source_name,
            s.pairs,
            100.0 * s.fraction_covered
        );
    }
    Ok((side, report))
}

/// All phrases of `kind` touched by any source; handy for coverage checks.
pub fn touched_phrases(side: &SideInfoCollection, kind: PhraseKind) -> HashSet<PhraseId> {
    side.sources(kind).iter().flat_map(|s| s.touched()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::TripleRecord;
    use std::io::Write;

    #[test]
    fn pair_set_is_unordered_and_irreflexive() {
        let mut s = EquivalencePairSet::new("x", PhraseKind::Np);
        assert!(!s.insert(PhraseId(1), PhraseId(1)));
        assert!(s.insert(PhraseId(3), PhraseId(1)));
        assert!(!s.insert(PhraseId(1), PhraseId(3)));
        assert!(s.contains(PhraseId(3), PhraseId(1)));
        assert_eq!(s.pairs().collect::<Vec<_>>(), vec![(PhraseId(1), PhraseId(3))]);
        let g = EquivalencePairSet::from_groups("g", PhraseKind::Np, [vec![PhraseId(2), PhraseId(0), PhraseId(2), PhraseId(1)]]);
        assert_eq!(g.len(), 3);
    }

    #[test]
    fn duplicate_source_names_rejected() {
        let mut c = SideInfoCollection::default();
        c.push(EquivalencePairSet::new("morph", PhraseKind::Np)).unwrap();
        c.push(EquivalencePairSet::new("morph", PhraseKind::Rel)).unwrap();
        assert!(c.push(EquivalencePairSet::new("morph", PhraseKind::Np)).is_err());
    }

    fn small_kb() -> OpenKb {
        let mut a = TripleRecord::new("US", "is in", "North America");
        a.entity_link_sub = Some("United_States".into());
        let mut b = TripleRecord::new("America", "is located in", "North America");
        b.entity_link_sub = Some("United_States".into());
        OpenKb::from_records([a, b, TripleRecord::new("Cities", "is in", "city")]).unwrap()
    }

    #[test]
    fn all_disabled_is_empty() {
        let kb = small_kb();
        let (side, report) = assemble_side_info(&kb, &SideInfoConfig::default(), Parallelism::Sequential).unwrap();
        assert!(side.is_empty());
        assert!(report.sources.is_empty());
    }

    #[test]
    fn entity_link_only() {
        let kb = small_kb();
        let cfg = SideInfoConfig {
            entity_linking: true,
            ..Default::default()
        };
        let (side, report) = assemble_side_info(&kb, &cfg, Parallelism::Sequential).unwrap();
        assert_eq!(side.np_sources.len(), 1);
        assert!(side.rel_sources.is_empty());
        assert_eq!(report.sources[0].phrases_covered, 2);
        assert!((report.sources[0].fraction_covered - 2.0 / 5.0).abs() < 1e-12);
        side.validate(&kb).unwrap();
    }

    #[test]
    fn missing_resource_is_config_error() {
        let kb = small_kb();
        let cfg = SideInfoConfig {
            kbp: Some(PathBuf::from("/definitely/not/here.tsv")),
            ..Default::default()
        };
        assert!(matches!(
            assemble_side_info(&kb, &cfg, Parallelism::Sequential),
            Err(SideInfoError::Config(_))
        ));
    }

    #[test]
    fn every_provider_together() {
        let kb = small_kb();
        let mut ppdb = tempfile::NamedTempFile::new().unwrap();
        writeln!(ppdb, "is in\tis located in\t0.8").unwrap();
        let mut kbp = tempfile::NamedTempFile::new().unwrap();
        writeln!(kbp, "is in\tloc:located_in").unwrap();
        let cfg = SideInfoConfig {
            entity_linking: true,
            morph: true,
            idf_cutoff: Some(0.5),
            ppdb: Some(PpdbConfig {
                path: ppdb.path().to_path_buf(),
                confidence_min: 0.5,
                np: true,
                rel: true,
            }),
            wordnet: None,
            amie: Some(AmieConfig::default()),
            kbp: Some(kbp.path().to_path_buf()),
        };
        let (side, _) = assemble_side_info(&kb, &cfg, Parallelism::Parallel).unwrap();
        let np: Vec<&str> = side.np_sources.iter().map(|s| s.source_name.as_str()).collect();
        let rel: Vec<&str> = side.rel_sources.iter().map(|s| s.source_name.as_str()).collect();
        assert_eq!(np, ["entity_linking", "ppdb", "idf_overlap", "morph"]);
        assert_eq!(rel, ["ppdb", "amie", "kbp"]);
        let is_in = kb.lookup(PhraseKind::Rel, "is in").unwrap();
        let loc = kb.lookup(PhraseKind::Rel, "is located in").unwrap();
        assert!(side.rel_sources[0].contains(is_in, loc));
        side.validate(&kb).unwrap();
    }
}
