use std::collections::BTreeSet;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::kb::{GoldClustering, KbError, OpenKb, PhraseKind, TripleRecord};

/// Shape of a generated KB. Side-information coverage is the fraction of same-entity
/// (same-relation) alias pairs listed in the generated synset files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub n_entities: usize,
    pub aliases_per_entity: usize,
    pub n_relations: usize,
    pub paraphrases_per_relation: usize,
    pub n_triples: usize,
    /// Probability that a triple's object is replaced by a random entity.
    pub noise: f64,
    pub seed: u64,
    pub np_side_coverage: f64,
    pub rel_side_coverage: f64,
    /// Fraction of listed side-information pairs that are correct.
    pub side_precision: f64,
    /// Probability that a mention carries (correct) linker output.
    pub link_rate: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_entities: 20,
            aliases_per_entity: 3,
            n_relations: 5,
            paraphrases_per_relation: 2,
            n_triples: 200,
            noise: 0.0,
            seed: 0,
            np_side_coverage: 0.5,
            rel_side_coverage: 0.5,
            side_precision: 1.0,
            link_rate: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticKb {
    pub records: Vec<TripleRecord>,
    /// `(alias, entity)` for every alias.
    pub np_gold: Vec<(String, String)>,
    /// `(paraphrase, relation)` for every paraphrase.
    pub rel_gold: Vec<(String, String)>,
    /// `(phrase, synset)` lines; every synset names exactly one pair.
    pub np_synsets: Vec<(String, String)>,
    pub rel_synsets: Vec<(String, String)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SyntheticFiles {
    pub triples: PathBuf,
    pub np_gold: PathBuf,
    pub rel_gold: PathBuf,
    pub np_synsets: PathBuf,
    pub rel_synsets: PathBuf,
}

const ONSETS: [&str; 16] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "tr"];
const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];
const CODAS: [&str; 6] = ["", "n", "r", "s", "l", "x"];
const VERBS: [&str; 16] = [
    "founded", "acquired", "advised", "visited", "sued", "hired", "funded", "praised", "joined", "backed", "criticized",
    "supplied", "licensed", "audited", "sponsored", "insured",
];
const PARAPHRASE_FORMS: [&str; 4] = ["{}", "has {}", "reportedly {}", "once {}"];

fn word<R: Rng>(rng: &mut R, syllables: usize) -> String {
    let mut w = String::new();
    for _ in 0..syllables {
        w.push_str(ONSETS.choose(rng).unwrap());
        w.push_str(VOWELS.choose(rng).unwrap());
        w.push_str(CODAS.choose(rng).unwrap());
    }
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => w,
    }
}

fn alias_set<R: Rng>(rng: &mut R, n: usize, taken: &mut BTreeSet<String>) -> Vec<String> {
    loop {
        let first = word(rng, 2);
        let last = word(rng, 2);
        let mut aliases = vec![format!("{first} {last}"), last.clone(), word(rng, 3)];
        let mut k = 0;
        while aliases.len() < n {
            aliases.push(format!("{} {}", word(rng, 1), last));
            k += 1;
            if k > 100 {
                break;
            }
        }
        aliases.truncate(n);
        let lowered: BTreeSet<String> = aliases.iter().map(|a| a.to_lowercase()).collect();
        if lowered.len() == aliases.len() && lowered.iter().all(|a| !taken.contains(a)) {
            taken.extend(lowered);
            return aliases;
        }
    }
}

fn paraphrases(r: usize, p: usize) -> Vec<String> {
    let verb = match VERBS.get(r) {
        Some(v) => v.to_string(),
        None => format!("{}-{r}", VERBS[r % VERBS.len()]),
    };
    (0..p)
        .map(|k| match PARAPHRASE_FORMS.get(k) {
            Some(form) => form.replace("{}", &verb),
            None => format!("{verb} variant {k}"),
        })
        .collect()
}

/// `(phrase, synset)` lines covering `coverage` of within-group pairs, plus wrong
/// cross-group pairs so that `precision` of the listed pairs are correct.
fn side_lines<R: Rng>(rng: &mut R, groups: &[Vec<String>], coverage: f64, precision: f64, prefix: &str) -> Vec<(String, String)> {
    let mut good = Vec::new();
    for g in groups {
        for i in 0..g.len() {
            for j in i + 1..g.len() {
                good.push((g[i].clone(), g[j].clone()));
            }
        }
    }
    let n_good = ((good.len() as f64) * coverage).round() as usize;
    let mut chosen: Vec<(String, String)> = good.choose_multiple(rng, n_good.min(good.len())).cloned().collect();
    let precision = precision.clamp(f64::MIN_POSITIVE, 1.0);
    let n_bad = ((n_good as f64) * (1.0 - precision) / precision).round() as usize;
    if groups.len() > 1 {
        for _ in 0..n_bad {
            let a = rng.random_range(0..groups.len());
            let mut b = rng.random_range(0..groups.len() - 1);
            if b >= a {
                b += 1;
            }
            chosen.push((groups[a].choose(rng).unwrap().clone(), groups[b].choose(rng).unwrap().clone()));
        }
    }
    chosen
        .into_iter()
        .enumerate()
        .flat_map(|(k, (x, y))| {
            let id = format!("{prefix}{k}");
            [(x, id.clone()), (y, id)]
        })
        .collect()
}

/// Entities with several surface aliases, relations with several paraphrases and
/// triples realising facts of a random entity graph. Each entity first gets one
/// subject triple per alias; aliases and paraphrases are then used round-robin.
pub fn make_synthetic_kb(spec: &SynthSpec) -> SyntheticKb {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let ne = spec.n_entities.max(1);
    let na = spec.aliases_per_entity.max(1);
    let nr = spec.n_relations.max(1);
    let np = spec.paraphrases_per_relation.max(1);
    let mut taken = BTreeSet::new();
    let aliases: Vec<Vec<String>> = (0..ne).map(|_| alias_set(&mut rng, na, &mut taken)).collect();
    let rels: Vec<Vec<String>> = (0..nr).map(|r| paraphrases(r, np)).collect();

    let other = |rng: &mut ChaCha8Rng, e: usize| {
        if ne == 1 {
            return e;
        }
        let o = rng.random_range(0..ne - 1);
        if o >= e {
            o + 1
        } else {
            o
        }
    };
    // every entity has at least one outgoing fact
    let mut facts: Vec<(usize, usize, usize)> = Vec::new();
    let mut out_fact = Vec::with_capacity(ne);
    for e in 0..ne {
        out_fact.push(facts.len());
        let o = other(&mut rng, e);
        facts.push((e, e % nr, o));
    }
    let n_facts = (spec.n_triples / 2).max(ne);
    while facts.len() < n_facts {
        let s = rng.random_range(0..ne);
        let o = other(&mut rng, s);
        facts.push((s, rng.random_range(0..nr), o));
    }

    let mut mentions = vec![0usize; ne];
    let mut uses = vec![0usize; nr];
    let mut records = Vec::with_capacity(spec.n_triples);
    for t in 0..spec.n_triples {
        let (s, r, mut o) = if t < ne * na {
            facts[out_fact[t / na]]
        } else {
            facts[rng.random_range(0..facts.len())]
        };
        if spec.noise > 0.0 && rng.random_bool(spec.noise.clamp(0.0, 1.0)) {
            o = other(&mut rng, s);
        }
        let mut mention = |e: usize| {
            let a = aliases[e][mentions[e] % na].clone();
            mentions[e] += 1;
            a
        };
        let (subject, object) = (mention(s), mention(o));
        let relation = rels[r][uses[r] % np].clone();
        uses[r] += 1;
        let mut link = |e: usize| (spec.link_rate > 0.0 && rng.random_bool(spec.link_rate.min(1.0))).then(|| format!("E{e}"));
        let (entity_link_sub, entity_link_obj) = (link(s), link(o));
        records.push(TripleRecord {
            triple_id: Some(t as u64),
            subject,
            relation,
            object,
            src_sentences: Vec::new(),
            entity_link_sub,
            entity_link_obj,
            gold_sub_id: Some(format!("E{s}")),
            gold_obj_id: Some(format!("E{o}")),
        });
    }

    let np_gold = aliases
        .iter()
        .enumerate()
        .flat_map(|(e, a)| a.iter().map(move |x| (x.clone(), format!("E{e}"))))
        .collect();
    let rel_gold = rels
        .iter()
        .enumerate()
        .flat_map(|(r, p)| p.iter().map(move |x| (x.clone(), format!("R{r}"))))
        .collect();
    let np_synsets = side_lines(&mut rng, &aliases, spec.np_side_coverage, spec.side_precision, "SN");
    let rel_synsets = side_lines(&mut rng, &rels, spec.rel_side_coverage, spec.side_precision, "SR");
    SyntheticKb {
        records,
        np_gold,
        rel_gold,
        np_synsets,
        rel_synsets,
    }
}

fn tsv(lines: &[(String, String)]) -> String {
    lines.iter().map(|(a, b)| format!("{a}\t{b}\n")).collect()
}

impl SyntheticKb {
    pub fn kb(&self) -> Result<OpenKb, KbError> {
        OpenKb::from_records(self.records.iter().cloned())
    }

    pub fn gold(&self, kb: &OpenKb, kind: PhraseKind) -> GoldClustering {
        let lines = match kind {
            PhraseKind::Np => &self.np_gold,
            PhraseKind::Rel => &self.rel_gold,
        };
        let mut g = GoldClustering::new(kind);
        for (phrase, label) in lines {
            if let Some(id) = kb.lookup(kind, phrase) {
                g.assignment.insert(id, label.clone());
            }
        }
        g
    }

    /// Write `triples.jsonl`, the two gold files and the two synset files into `dir`.
    pub fn write(&self, dir: &Path) -> io::Result<SyntheticFiles> {
        fs::create_dir_all(dir)?;
        let files = SyntheticFiles {
            triples: dir.join("triples.jsonl"),
            np_gold: dir.join("np_gold.tsv"),
            rel_gold: dir.join("rel_gold.tsv"),
            np_synsets: dir.join("np_synsets.tsv"),
            rel_synsets: dir.join("rel_synsets.tsv"),
        };
        let mut jsonl = String::new();
        for r in &self.records {
            jsonl.push_str(&serde_json::to_string(r).map_err(io::Error::from)?);
            jsonl.push('\n');
        }
        fs::write(&files.triples, jsonl)?;
        fs::write(&files.np_gold, tsv(&self.np_gold))?;
        fs::write(&files.rel_gold, tsv(&self.rel_gold))?;
        fs::write(&files.np_synsets, tsv(&self.np_synsets))?;
        fs::write(&files.rel_synsets, tsv(&self.rel_synsets))?;
        Ok(files)
    }
}
