//! Open KB domain types, triple-file ingestion and the validation/test split.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KbError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("knowledge base has no triples")]
    Empty,
    #[error("validation fraction must lie in (0, 1), got {0}")]
    InvalidFraction(f64),
    #[error("gold assignment is empty")]
    EmptyGold,
    #[error("audit failed: {0}")]
    Audit(String),
}

/// Surrogate key of a phrase. Ids are dense and scoped to a [`PhraseKind`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PhraseId(pub u32);

impl PhraseId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for PhraseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhraseKind {
    Np,
    Rel,
}

impl fmt::Display for PhraseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PhraseKind::Np => "np",
            PhraseKind::Rel => "rel",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phrase {
    pub id: PhraseId,
    pub text: String,
    pub kind: PhraseKind,
    pub frequency: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triple {
    pub triple_id: u64,
    pub subject: PhraseId,
    pub relation: PhraseId,
    pub object: PhraseId,
    pub source_sentences: Vec<String>,
    pub subject_link: Option<String>,
    pub object_link: Option<String>,
    pub gold_subject: Option<String>,
    pub gold_object: Option<String>,
}

impl Triple {
    pub fn key(&self) -> TripleKey {
        TripleKey {
            subject: self.subject,
            relation: self.relation,
            object: self.object,
        }
    }
}

/// Id-only view of a triple, used for index lookups and negative sampling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TripleKey {
    pub subject: PhraseId,
    pub relation: PhraseId,
    pub object: PhraseId,
}

/// One line of a triples file. Field names are the on-disk contract.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripleRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub triple_id: Option<u64>,
    pub subject: String,
    pub relation: String,
    pub object: String,
    #[serde(default)]
    pub src_sentences: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entity_link_sub: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entity_link_obj: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_sub_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_obj_id: Option<String>,
}

impl TripleRecord {
    pub fn new(subject: &str, relation: &str, object: &str) -> Self {
        TripleRecord {
            subject: subject.to_string(),
            relation: relation.to_string(),
            object: object.to_string(),
            ..Default::default()
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TripleFormat {
    /// One JSON object per line with the [`TripleRecord`] field names.
    #[default]
    Jsonl,
    /// `subject <TAB> relation <TAB> object`; triple ids are line numbers.
    Tsv,
}

/// Trim and collapse runs of whitespace to a single space.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Default)]
struct Vocab {
    phrases: Vec<Phrase>,
    lookup: HashMap<String, PhraseId>,
}

impl Vocab {
    fn intern(&mut self, text: String, kind: PhraseKind) -> PhraseId {
        if let Some(&id) = self.lookup.get(&text) {
            self.phrases[id.index()].frequency += 1;
            return id;
        }
        let id = PhraseId(self.phrases.len() as u32);
        self.lookup.insert(text.clone(), id);
        self.phrases.push(Phrase {
            id,
            text,
            kind,
            frequency: 1,
        });
        id
    }
}

/// Accumulates records into an [`OpenKb`].
#[derive(Debug, Default)]
pub struct KbBuilder {
    np: Vocab,
    rel: Vocab,
    triples: Vec<Triple>,
}

impl KbBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Start from an existing KB's contents.
    pub fn from_kb(kb: &OpenKb) -> Self {
        let mut b = KbBuilder::new();
        for r in kb.to_records() {
            b.add(r).expect("records of a valid kb are valid");
        }
        b
    }

    /// Add one record. Fails if any of the three phrases is blank.
    pub fn add(&mut self, record: TripleRecord) -> Result<PhraseIds, String> {
        let subject = normalize_whitespace(&record.subject);
        let relation = normalize_whitespace(&record.relation);
        let object = normalize_whitespace(&record.object);
        for (name, v) in [("subject", &subject), ("relation", &relation), ("object", &object)] {
            if v.is_empty() {
                return Err(format!("empty {name}"));
            }
        }
        let s = self.np.intern(subject, PhraseKind::Np);
        let p = self.rel.intern(relation, PhraseKind::Rel);
        let o = self.np.intern(object, PhraseKind::Np);
        let triple_id = record.triple_id.unwrap_or(self.triples.len() as u64);
        self.triples.push(Triple {
            triple_id,
            subject: s,
            relation: p,
            object: o,
            source_sentences: record.src_sentences,
            subject_link: record.entity_link_sub,
            object_link: record.entity_link_obj,
            gold_subject: record.gold_sub_id,
            gold_object: record.gold_obj_id,
        });
        Ok(PhraseIds { s, p, o })
    }

    pub fn build(self) -> OpenKb {
        let mut index = HashSet::with_capacity(self.triples.len());
        let mut distinct = Vec::new();
        for t in &self.triples {
            if index.insert(t.key()) {
                distinct.push(t.key());
            }
        }
        OpenKb {
            triples: self.triples,
            np: self.np,
            rel: self.rel,
            index,
            distinct,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PhraseIds {
    pub s: PhraseId,
    pub p: PhraseId,
    pub o: PhraseId,
}

/// An immutable open KB: triples plus the NP and relation vocabularies.
#[derive(Debug)]
pub struct OpenKb {
    triples: Vec<Triple>,
    np: Vocab,
    rel: Vocab,
    index: HashSet<TripleKey>,
    distinct: Vec<TripleKey>,
}

impl OpenKb {
    pub fn from_records<I: IntoIterator<Item = TripleRecord>>(records: I) -> Result<Self, KbError> {
        let mut b = KbBuilder::new();
        for (i, r) in records.into_iter().enumerate() {
            b.add(r).map_err(|message| KbError::Parse { line: i + 1, message })?;
        }
        Ok(b.build())
    }

    /// Every triple occurrence, duplicates included, in file order.
    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    /// Distinct triples in order of first occurrence.
    pub fn distinct_triples(&self) -> &[TripleKey] {
        &self.distinct
    }

    pub fn np_vocab(&self) -> &[Phrase] {
        &self.np.phrases
    }

    pub fn rel_vocab(&self) -> &[Phrase] {
        &self.rel.phrases
    }

    pub fn vocab(&self, kind: PhraseKind) -> &[Phrase] {
        match kind {
            PhraseKind::Np => self.np_vocab(),
            PhraseKind::Rel => self.rel_vocab(),
        }
    }

    pub fn num_phrases(&self, kind: PhraseKind) -> usize {
        self.vocab(kind).len()
    }

    pub fn phrase(&self, kind: PhraseKind, id: PhraseId) -> &Phrase {
        &self.vocab(kind)[id.index()]
    }

    pub fn text(&self, kind: PhraseKind, id: PhraseId) -> &str {
        &self.phrase(kind, id).text
    }

    /// Look a phrase up by surface text (whitespace-normalized, case-sensitive).
    pub fn lookup(&self, kind: PhraseKind, text: &str) -> Option<PhraseId> {
        let map = match kind {
            PhraseKind::Np => &self.np.lookup,
            PhraseKind::Rel => &self.rel.lookup,
        };
        map.get(&normalize_whitespace(text)).copied()
    }

    pub fn contains(&self, s: PhraseId, p: PhraseId, o: PhraseId) -> bool {
        self.index.contains(&TripleKey {
            subject: s,
            relation: p,
            object: o,
        })
    }

    pub fn contains_key(&self, key: &TripleKey) -> bool {
        self.index.contains(key)
    }

    pub fn to_records(&self) -> Vec<TripleRecord> {
        self.triples
            .iter()
            .map(|t| TripleRecord {
                triple_id: Some(t.triple_id),
                subject: self.text(PhraseKind::Np, t.subject).to_string(),
                relation: self.text(PhraseKind::Rel, t.relation).to_string(),
                object: self.text(PhraseKind::Np, t.object).to_string(),
                src_sentences: t.source_sentences.clone(),
                entity_link_sub: t.subject_link.clone(),
                entity_link_obj: t.object_link.clone(),
                gold_sub_id: t.gold_subject.clone(),
                gold_obj_id: t.gold_object.clone(),
            })
            .collect()
    }

    /// Full-scan consistency check of ids, frequencies and the triple index.
    pub fn audit(&self) -> Result<(), KbError> {
        let mut np_freq = vec![0u32; self.np.phrases.len()];
        let mut rel_freq = vec![0u32; self.rel.phrases.len()];
        for t in &self.triples {
            for id in [t.subject, t.object] {
                *np_freq
                    .get_mut(id.index())
                    .ok_or_else(|| KbError::Audit(format!("triple {} has dangling np {id}", t.triple_id)))? += 1;
            }
            *rel_freq
                .get_mut(t.relation.index())
                .ok_or_else(|| KbError::Audit(format!("triple {} has dangling relation", t.triple_id)))? += 1;
        }
        for (vocab, freq) in [(&self.np, &np_freq), (&self.rel, &rel_freq)] {
            for (i, p) in vocab.phrases.iter().enumerate() {
                if p.id.index() != i || vocab.lookup.get(&p.text) != Some(&p.id) {
                    return Err(KbError::Audit(format!("vocab entry {i} is not self-consistent")));
                }
                if p.frequency == 0 || p.frequency != freq[i] {
                    return Err(KbError::Audit(format!("frequency mismatch for {:?}", p.text)));
                }
                if p.text.trim().is_empty() {
                    return Err(KbError::Audit(format!("blank phrase {}", p.id)));
                }
            }
        }
        let expected: HashSet<TripleKey> = self.triples.iter().map(Triple::key).collect();
        if expected != self.index || self.distinct.len() != self.index.len() {
            return Err(KbError::Audit("triple index disagrees with triples".into()));
        }
        Ok(())
    }
}

fn open(path: &Path) -> Result<BufReader<File>, KbError> {
    File::open(path).map(BufReader::new).map_err(|source| KbError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parse triple records from a reader. Blank lines are ignored.
pub fn read_records<R: BufRead>(reader: R, format: TripleFormat) -> Result<Vec<TripleRecord>, KbError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| KbError::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record = match format {
            TripleFormat::Jsonl => serde_json::from_str::<TripleRecord>(&line).map_err(|e| KbError::Parse {
                line: lineno,
                message: e.to_string(),
            })?,
            TripleFormat::Tsv => {
                let fields: Vec<&str> = line.split('\t').collect();
                if fields.len() < 3 {
                    return Err(KbError::Parse {
                        line: lineno,
                        message: format!("expected 3 tab-separated fields, found {}", fields.len()),
                    });
                }
                let mut r = TripleRecord::new(fields[0], fields[1], fields[2]);
                r.triple_id = Some(out.len() as u64);
                r
            }
        };
        for (name, v) in [("subject", &record.subject), ("relation", &record.relation), ("object", &record.object)] {
            if v.trim().is_empty() {
                return Err(KbError::Parse {
                    line: lineno,
                    message: format!("empty {name}"),
                });
            }
        }
        out.push(record);
    }
    if out.is_empty() {
        return Err(KbError::Empty);
    }
    Ok(out)
}

pub fn load_triples(path: &Path, format: TripleFormat) -> Result<OpenKb, KbError> {
    let records = read_records(open(path)?, format)?;
    OpenKb::from_records(records)
}

/// Evaluation-only mapping from phrase to gold entity (or relation) identifier.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldClustering {
    pub kind: Option<PhraseKind>,
    pub assignment: BTreeMap<PhraseId, String>,
}

impl GoldClustering {
    pub fn new(kind: PhraseKind) -> Self {
        GoldClustering {
            kind: Some(kind),
            assignment: BTreeMap::new(),
        }
    }

    pub fn label(&self, id: PhraseId) -> Option<&str> {
        self.assignment.get(&id).map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    /// Gold clusters as member lists, ordered by gold label.
    pub fn clusters(&self) -> Vec<Vec<PhraseId>> {
        let mut by_label: BTreeMap<&str, Vec<PhraseId>> = BTreeMap::new();
        for (id, label) in &self.assignment {
            by_label.entry(label).or_default().push(*id);
        }
        by_label.into_values().collect()
    }

    /// Keep only phrases whose label is in `labels`.
    pub fn restrict_to_labels(&self, labels: &BTreeSet<String>) -> GoldClustering {
        GoldClustering {
            kind: self.kind,
            assignment: self
                .assignment
                .iter()
                .filter(|(_, l)| labels.contains(*l))
                .map(|(k, v)| (*k, v.clone()))
                .collect(),
        }
    }

    /// Keep only the given phrases.
    pub fn restrict_to_ids(&self, ids: &BTreeSet<PhraseId>) -> GoldClustering {
        GoldClustering {
            kind: self.kind,
            assignment: self
                .assignment
                .iter()
                .filter(|(k, _)| ids.contains(*k))
                .map(|(k, v)| (*k, v.clone()))
                .collect(),
        }
    }

    /// NP gold labels from the per-triple `gold_sub_id` / `gold_obj_id` fields. A phrase
    /// seen with several labels takes the most frequent one, earliest label on ties.
    pub fn np_from_triples(kb: &OpenKb) -> GoldClustering {
        let mut votes: BTreeMap<PhraseId, Vec<(String, usize)>> = BTreeMap::new();
        let mut vote = |id: PhraseId, label: &Option<String>| {
            if let Some(l) = label {
                let v = votes.entry(id).or_default();
                match v.iter_mut().find(|(x, _)| x == l) {
                    Some(entry) => entry.1 += 1,
                    None => v.push((l.clone(), 1)),
                }
            }
        };
        for t in kb.triples() {
            vote(t.subject, &t.gold_subject);
            vote(t.object, &t.gold_object);
        }
        let mut gold = GoldClustering::new(PhraseKind::Np);
        for (id, v) in votes {
            let best = v.iter().map(|(_, c)| *c).max().unwrap_or(0);
            let label = v.into_iter().find(|(_, c)| *c == best).map(|(l, _)| l);
            if let Some(l) = label {
                gold.assignment.insert(id, l);
            }
        }
        gold
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldLoadReport {
    pub assigned: usize,
    pub not_in_kb: usize,
    pub conflicts: usize,
}

/// Read `phrase_text <TAB> gold_id` lines. Phrases absent from the KB are counted and
/// skipped; a repeated phrase keeps its first label.
pub fn load_gold(path: &Path, kb: &OpenKb, kind: PhraseKind) -> Result<(GoldClustering, GoldLoadReport), KbError> {
    let mut gold = GoldClustering::new(kind);
    let mut report = GoldLoadReport::default();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| KbError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let (text, label) = line.split_once('\t').ok_or_else(|| KbError::Parse {
            line: i + 1,
            message: "expected `phrase <TAB> gold_id`".into(),
        })?;
        let label = label.trim();
        match kb.lookup(kind, text) {
            None => report.not_in_kb += 1,
            Some(id) => match gold.assignment.get(&id) {
                Some(prev) if prev != label => report.conflicts += 1,
                Some(_) => {}
                None => {
                    gold.assignment.insert(id, label.to_string());
                    report.assigned += 1;
                }
            },
        }
    }
    Ok((gold, report))
}

/// A subset of a KB's triples, identified by position in [`OpenKb::triples`].
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KbView {
    pub triples: Vec<usize>,
    /// Gold entities whose subject triples make up this view.
    pub entities: BTreeSet<String>,
}

impl KbView {
    pub fn phrases(&self, kb: &OpenKb, kind: PhraseKind) -> BTreeSet<PhraseId> {
        let mut out = BTreeSet::new();
        for &i in &self.triples {
            let t = &kb.triples()[i];
            match kind {
                PhraseKind::Np => {
                    out.insert(t.subject);
                    out.insert(t.object);
                }
                PhraseKind::Rel => {
                    out.insert(t.relation);
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub validation: KbView,
    pub test: KbView,
}

/// Sample `fraction` of the subject-side gold entities; their triples form the
/// validation view and everything else the test view.
pub fn split_validation(kb: &OpenKb, gold: &GoldClustering, fraction: f64, seed: u64) -> Result<Split, KbError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(KbError::InvalidFraction(fraction));
    }
    if gold.is_empty() {
        return Err(KbError::EmptyGold);
    }
    let subject_entities: BTreeSet<&str> = kb.triples().iter().filter_map(|t| gold.label(t.subject)).collect();
    let all_entities: BTreeSet<String> = gold.assignment.values().cloned().collect();
    let pool: Vec<&str> = subject_entities.into_iter().collect();
    let k = ((pool.len() as f64) * fraction).round() as usize;
    let k = k.clamp(usize::from(!pool.is_empty()), pool.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sampled: BTreeSet<String> = pool.choose_multiple(&mut rng, k).map(|s| s.to_string()).collect();

    let mut validation = KbView {
        entities: sampled.clone(),
        ..Default::default()
    };
    let mut test = KbView {
        entities: all_entities.difference(&sampled).cloned().collect(),
        ..Default::default()
    };
    for (i, t) in kb.triples().iter().enumerate() {
        match gold.label(t.subject) {
            Some(l) if sampled.contains(l) => validation.triples.push(i),
            _ => test.triples.push(i),
        }
    }
    Ok(Split { validation, test })
}
