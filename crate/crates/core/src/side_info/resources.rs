//! Equivalences read from external resource files or carried on the triples.
//!
//! Resource phrases are matched against the KB case-insensitively after whitespace
//! normalization; KB phrases missing from a resource contribute nothing.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use petgraph::unionfind::UnionFind;

use crate::kb::{normalize_whitespace, OpenKb, PhraseId, PhraseKind};

use super::{EquivalencePairSet, SideInfoError};

fn resource_key(text: &str) -> String {
    normalize_whitespace(&text.to_lowercase())
}

/// KB phrases of `kind` grouped by resource key.
fn kb_keys(kb: &OpenKb, kind: PhraseKind) -> HashMap<String, Vec<PhraseId>> {
    let mut map: HashMap<String, Vec<PhraseId>> = HashMap::new();
    for p in kb.vocab(kind) {
        map.entry(resource_key(&p.text)).or_default().push(p.id);
    }
    map
}

fn lines(path: &Path) -> Result<impl Iterator<Item = (usize, std::io::Result<String>)>, SideInfoError> {
    let f = File::open(path).map_err(|source| SideInfoError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(BufReader::new(f).lines().enumerate().map(|(i, l)| (i + 1, l)))
}

fn read_line(path: &Path, line: usize, l: std::io::Result<String>) -> Result<String, SideInfoError> {
    l.map_err(|e| SideInfoError::Parse {
        path: path.to_path_buf(),
        line,
        message: e.to_string(),
    })
}

#[derive(Clone, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct PpdbLoadReport {
    pub rows: usize,
    pub kept: usize,
    pub malformed: usize,
}

/// Paraphrase rows `phrase1 <TAB> phrase2 <TAB> score`. Rows at or above
/// `confidence_min` are unioned; KB phrases whose resource entries share a root are paired.
pub fn ppdb_equivalences(
    path: &Path,
    confidence_min: f64,
    kb: &OpenKb,
    kind: PhraseKind,
) -> Result<(EquivalencePairSet, PpdbLoadReport), SideInfoError> {
    let mut report = PpdbLoadReport::default();
    let mut intern: HashMap<String, usize> = HashMap::new();
    let mut edges: Vec<(usize, usize)> = Vec::new();
    fn id_of(s: String, intern: &mut HashMap<String, usize>) -> usize {
        let n = intern.len();
        *intern.entry(s).or_insert(n)
    }
    for (lineno, l) in lines(path)? {
        let l = read_line(path, lineno, l)?;
        if l.trim().is_empty() {
            continue;
        }
        report.rows += 1;
        let fields: Vec<&str> = l.split('\t').collect();
        let score = fields.get(2).and_then(|s| s.trim().parse::<f64>().ok());
        let (Some(score), true) = (score, fields.len() == 3) else {
            report.malformed += 1;
            continue;
        };
        let (a, b) = (resource_key(fields[0]), resource_key(fields[1]));
        if a.is_empty() || b.is_empty() || !score.is_finite() {
            report.malformed += 1;
            continue;
        }
        if score < confidence_min {
            continue;
        }
        report.kept += 1;
        let a = id_of(a, &mut intern);
        let b = id_of(b, &mut intern);
        edges.push((a, b));
    }
    if report.malformed > 0 {
        log::warn!("{}: skipped {} malformed rows", path.display(), report.malformed);
    }
    let mut uf = UnionFind::<usize>::new(intern.len());
    for (a, b) in edges {
        uf.union(a, b);
    }
    let mut groups: BTreeMap<usize, Vec<PhraseId>> = BTreeMap::new();
    for (key, ids) in kb_keys(kb, kind) {
        if let Some(&r) = intern.get(&key) {
            groups.entry(uf.find(r)).or_default().extend(ids);
        }
    }
    Ok((EquivalencePairSet::from_groups("ppdb", kind, groups.into_values()), report))
}

/// `phrase <TAB> synset_id[,synset_id...]`. Phrases sharing any synset are paired.
pub fn synset_equivalences(path: &Path, kb: &OpenKb, kind: PhraseKind) -> Result<EquivalencePairSet, SideInfoError> {
    let keys = kb_keys(kb, kind);
    let mut by_synset: BTreeMap<String, Vec<PhraseId>> = BTreeMap::new();
    for (lineno, l) in lines(path)? {
        let l = read_line(path, lineno, l)?;
        if l.trim().is_empty() {
            continue;
        }
        let (phrase, synsets) = l.split_once('\t').ok_or_else(|| SideInfoError::Parse {
            path: path.to_path_buf(),
            line: lineno,
            message: "expected `phrase <TAB> synset[,synset...]`".into(),
        })?;
        let Some(ids) = keys.get(&resource_key(phrase)) else {
            continue;
        };
        for s in synsets.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            by_synset.entry(s.to_string()).or_default().extend(ids.iter().copied());
        }
    }
    Ok(EquivalencePairSet::from_groups("wordnet", kind, by_synset.into_values()))
}

/// `relation_phrase <TAB> category`. Relations in the same category are paired.
pub fn kbp_equivalences(path: &Path, kb: &OpenKb) -> Result<EquivalencePairSet, SideInfoError> {
    let keys = kb_keys(kb, PhraseKind::Rel);
    let mut by_cat: BTreeMap<String, Vec<PhraseId>> = BTreeMap::new();
    for (lineno, l) in lines(path)? {
        let l = read_line(path, lineno, l)?;
        if l.trim().is_empty() {
            continue;
        }
        let (phrase, cat) = l.split_once('\t').ok_or_else(|| SideInfoError::Parse {
            path: path.to_path_buf(),
            line: lineno,
            message: "expected `relation_phrase <TAB> category`".into(),
        })?;
        let cat = cat.trim();
        if cat.is_empty() {
            continue;
        }
        if let Some(ids) = keys.get(&resource_key(phrase)) {
            by_cat.entry(cat.to_string()).or_default().extend(ids.iter().copied());
        }
    }
    Ok(EquivalencePairSet::from_groups("kbp", PhraseKind::Rel, by_cat.into_values()))
}

/// Majority linker output per NP over its occurrences; ties leave the NP unlinked.
pub fn np_links(kb: &OpenKb) -> BTreeMap<PhraseId, String> {
    let mut votes: BTreeMap<PhraseId, BTreeMap<&str, usize>> = BTreeMap::new();
    for t in kb.triples() {
        for (id, link) in [(t.subject, &t.subject_link), (t.object, &t.object_link)] {
            if let Some(l) = link.as_deref().map(str::trim).filter(|l| !l.is_empty()) {
                *votes.entry(id).or_default().entry(l).or_insert(0) += 1;
            }
        }
    }
    let mut out = BTreeMap::new();
    for (id, counts) in votes {
        let best = counts.values().copied().max().unwrap_or(0);
        let mut winners = counts.iter().filter(|(_, &c)| c == best);
        if let (Some((l, _)), None) = (winners.next(), winners.next()) {
            out.insert(id, l.to_string());
        }
    }
    out
}

pub fn entity_link_equivalences(kb: &OpenKb) -> EquivalencePairSet {
    let mut by_link: BTreeMap<String, Vec<PhraseId>> = BTreeMap::new();
    for (id, link) in np_links(kb) {
        by_link.entry(link).or_default().push(id);
    }
    EquivalencePairSet::from_groups("entity_linking", PhraseKind::Np, by_link.into_values())
}
