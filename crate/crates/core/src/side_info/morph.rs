//! Rule-based morphological normalization.
//!
//! The rules are deliberately crude suffix heuristics (no lexicon): lowercase, drop
//! leading determiners, strip plural and tense suffixes per token, collapse
//! whitespace. The whole pass is iterated to a fixed point, which makes
//! [`morph_normalize`] idempotent.

use std::collections::BTreeMap;

use crate::kb::{OpenKb, PhraseId, PhraseKind};

use super::EquivalencePairSet;

const DETERMINERS: [&str; 3] = ["the", "a", "an"];
const MAX_PASSES: usize = 32;

fn is_vowel(c: u8) -> bool {
    matches!(c, b'a' | b'e' | b'i' | b'o' | b'u')
}

fn strip_plural(tok: &str) -> Option<String> {
    if let Some(stem) = tok.strip_suffix("ies") {
        if !stem.is_empty() {
            return Some(format!("{stem}y"));
        }
    }
    if let Some(stem) = tok.strip_suffix("ses") {
        if !stem.is_empty() {
            return Some(format!("{stem}s"));
        }
    }
    if tok.len() >= 2 && tok.ends_with('s') && !tok.ends_with("ss") && !tok.ends_with("us") && !tok.ends_with("is") {
        return Some(tok[..tok.len() - 1].to_string());
    }
    None
}

fn strip_tense(tok: &str) -> Option<String> {
    if let Some(stem) = tok.strip_suffix("ied") {
        if !stem.is_empty() {
            return Some(format!("{stem}y"));
        }
    }
    if let Some(stem) = tok.strip_suffix("ed") {
        if stem.chars().count() >= 3 {
            return Some(stem.to_string());
        }
    }
    if let Some(stem) = tok.strip_suffix("ing") {
        if stem.chars().count() >= 3 {
            let b = stem.as_bytes();
            let n = b.len();
            // running -> runn -> run
            if n >= 2 && b[n - 1] == b[n - 2] && b[n - 1].is_ascii_alphabetic() && !is_vowel(b[n - 1]) {
                return Some(stem[..n - 1].to_string());
            }
            return Some(stem.to_string());
        }
    }
    None
}

fn normalize_token(tok: &str) -> String {
    let mut t = tok.to_string();
    if let Some(s) = strip_plural(&t) {
        t = s;
    }
    if let Some(s) = strip_tense(&t) {
        t = s;
    }
    t
}

fn single_pass(text: &str) -> String {
    let lower = text.to_lowercase();
    let mut tokens: Vec<&str> = lower.split_whitespace().collect();
    while tokens.len() > 1 && DETERMINERS.contains(&tokens[0]) {
        tokens.remove(0);
    }
    tokens.iter().map(|t| normalize_token(t)).filter(|t| !t.is_empty()).collect::<Vec<_>>().join(" ")
}

pub fn morph_normalize(text: &str) -> String {
    let mut cur = single_pass(text);
    for _ in 0..MAX_PASSES {
        let next = single_pass(&cur);
        if next == cur {
            return cur;
        }
        cur = next;
    }
    cur
}

/// Normal form of every phrase of `kind`, indexed by phrase id.
pub fn normal_forms(kb: &OpenKb, kind: PhraseKind) -> Vec<String> {
    kb.vocab(kind).iter().map(|p| morph_normalize(&p.text)).collect()
}

/// Pairs of distinct phrases sharing a normal form.
pub fn morph_equivalences(kb: &OpenKb, kind: PhraseKind) -> EquivalencePairSet {
    let mut groups: BTreeMap<String, Vec<PhraseId>> = BTreeMap::new();
    for (p, form) in kb.vocab(kind).iter().zip(normal_forms(kb, kind)) {
        groups.entry(form).or_default().push(p.id);
    }
    EquivalencePairSet::from_groups("morph", kind, groups.into_values())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::TripleRecord;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(morph_normalize("The Cities"), "city");
        assert_eq!(morph_normalize("obama"), "obama");
        assert_eq!(morph_normalize("was running"), "wa run");
        assert_eq!(morph_normalize("buses"), "bus");
        assert_eq!(morph_normalize("class"), "class");
        assert_eq!(morph_normalize("carried"), "carry");
        assert_eq!(morph_normalize("walked"), "walk");
        assert_eq!(morph_normalize("the"), "the");
        assert_eq!(morph_normalize("  New   York  "), "new york");
    }

    #[test]
    fn fixed_point_handles_chained_suffixes() {
        // "gased" -> "gas" -> "ga": a single pass would not be idempotent here
        let once = morph_normalize("gased");
        assert_eq!(morph_normalize(&once), once);
        let det = morph_normalize("the as cat");
        assert_eq!(morph_normalize(&det), det);
    }

    fn kb_of(nps: &[&str]) -> OpenKb {
        OpenKb::from_records(nps.iter().map(|n| TripleRecord::new(n, "r", "anchor"))).unwrap()
    }

    #[test]
    fn equivalence_examples() {
        let kb = kb_of(&["Cities", "city", "London"]);
        let id = |t| kb.lookup(PhraseKind::Np, t).unwrap();
        let set = morph_equivalences(&kb, PhraseKind::Np);
        assert_eq!(set.len(), 1);
        assert!(set.contains(id("Cities"), id("city")));

        let kb = kb_of(&["apple", "Apple", "apples"]);
        let set = morph_equivalences(&kb, PhraseKind::Np);
        assert_eq!(set.len(), 3);

        let kb = kb_of(&["London", "Paris"]);
        let set = morph_equivalences(&kb, PhraseKind::Np);
        // "anchor" is also in the vocab; all normal forms distinct
        assert!(set.is_empty());
    }

    proptest! {
        #[test]
        fn idempotent(s in "[A-Za-z ]{0,40}") {
            let once = morph_normalize(&s);
            prop_assert_eq!(morph_normalize(&once), once);
        }

        #[test]
        fn idempotent_on_suffix_heavy_words(
            words in proptest::collection::vec("(the|a|an|[a-z]{1,6}(ies|ses|s|ied|ed|ing|ss|us|is)?)", 1..5)
        ) {
            let s = words.join(" ");
            let once = morph_normalize(&s);
            prop_assert_eq!(morph_normalize(&once), once);
        }
    }
}
