//! IDF-weighted token overlap between noun phrases.
//!
//! A "document" is one distinct NP string, so `f(x)` is the number of NPs in the
//! vocabulary whose token set contains `x`. Token weights are `1 / ln(1 + f(x))`.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::sync::OnceLock;

use crate::kb::{OpenKb, PhraseId, PhraseKind};
use crate::par::{self, Parallelism};

use super::EquivalencePairSet;

static STOPWORDS: OnceLock<HashSet<&'static str>> = OnceLock::new();

pub fn stopwords() -> &'static HashSet<&'static str> {
    STOPWORDS.get_or_init(|| {
        include_str!("../../data/stopwords.txt")
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .collect()
    })
}

/// Lowercased alphanumeric tokens of `text`, stopwords removed.
pub fn content_tokens(text: &str) -> BTreeSet<String> {
    let stop = stopwords();
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty() && !stop.contains(t))
        .map(str::to_string)
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DocumentFrequency {
    df: HashMap<String, u32>,
}

impl DocumentFrequency {
    pub fn from_counts<I: IntoIterator<Item = (String, u32)>>(counts: I) -> Self {
        DocumentFrequency {
            df: counts.into_iter().collect(),
        }
    }

    pub fn get(&self, token: &str) -> u32 {
        self.df.get(token).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.df.len()
    }

    pub fn is_empty(&self) -> bool {
        self.df.is_empty()
    }

    /// `1 / ln(1 + f)`. Unseen tokens are weighted as if seen once.
    pub fn weight(&self, token: &str) -> f64 {
        let f = self.get(token).max(1) as f64;
        1.0 / f.ln_1p()
    }

    /// Weighted Jaccard of two token sets; 0 when both are empty.
    pub fn overlap(&self, a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
        let inter: f64 = a.intersection(b).map(|t| self.weight(t)).sum();
        if inter == 0.0 {
            return 0.0;
        }
        let union: f64 = a.union(b).map(|t| self.weight(t)).sum();
        (inter / union).min(1.0)
    }

    pub fn score_text(&self, a: &str, b: &str) -> f64 {
        self.overlap(&content_tokens(a), &content_tokens(b))
    }
}

pub fn build_df(kb: &OpenKb) -> DocumentFrequency {
    let mut df: HashMap<String, u32> = HashMap::new();
    for p in kb.np_vocab() {
        for tok in content_tokens(&p.text) {
            *df.entry(tok).or_insert(0) += 1;
        }
    }
    DocumentFrequency { df }
}

pub fn idf_overlap_score(kb: &OpenKb, a: PhraseId, b: PhraseId, df: &DocumentFrequency) -> f64 {
    df.score_text(kb.text(PhraseKind::Np, a), kb.text(PhraseKind::Np, b))
}

/// All NP pairs scoring at least `cutoff`. Candidates are blocked on a shared token,
/// so pairs with no common token are never emitted.
pub fn idf_equivalences(kb: &OpenKb, df: &DocumentFrequency, cutoff: f64, mode: Parallelism) -> EquivalencePairSet {
    let tokens: Vec<BTreeSet<String>> = kb.np_vocab().iter().map(|p| content_tokens(&p.text)).collect();
    let mut postings: HashMap<&str, Vec<u32>> = HashMap::new();
    for (i, toks) in tokens.iter().enumerate() {
        for t in toks {
            postings.entry(t.as_str()).or_default().push(i as u32);
        }
    }
    let per_np: Vec<Vec<(u32, u32)>> = par::map_range(tokens.len(), mode, |i| {
        let mut cands: Vec<u32> = tokens[i]
            .iter()
            .flat_map(|t| postings[t.as_str()].iter().copied())
            .filter(|&j| j as usize > i)
            .collect();
        cands.sort_unstable();
        cands.dedup();
        cands
            .into_iter()
            .filter(|&j| df.overlap(&tokens[i], &tokens[j as usize]) >= cutoff)
            .map(|j| (i as u32, j))
            .collect()
    });
    let mut set = EquivalencePairSet::new("idf_overlap", PhraseKind::Np);
    for (a, b) in per_np.into_iter().flatten() {
        set.insert(PhraseId(a), PhraseId(b));
    }
    set
}
