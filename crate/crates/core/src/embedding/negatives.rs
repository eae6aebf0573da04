use rand::Rng;

use crate::kb::{OpenKb, PhraseId, PhraseKind, TripleKey};

/// Negatives for one positive plus the number of slots abandoned after the retry budget.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NegativeSample {
    pub negatives: Vec<TripleKey>,
    pub skipped: usize,
}

/// Local closed-world corruption: swap the subject or the object (fair coin) for an NP
/// drawn uniformly from the vocabulary, rejecting anything already in the KB. Each
/// of the `k` slots gets `1 + max_retries` attempts before it is skipped.
pub fn sample_negatives<R: Rng + ?Sized>(
    kb: &OpenKb,
    t: &TripleKey,
    k: usize,
    max_retries: usize,
    rng: &mut R,
) -> NegativeSample {
    let n = kb.num_phrases(PhraseKind::Np) as u32;
    let mut out = NegativeSample::default();
    if n == 0 {
        out.skipped = k;
        return out;
    }
    for _ in 0..k {
        let mut found = None;
        for _ in 0..=max_retries {
            let replacement = PhraseId(rng.random_range(0..n));
            let cand = if rng.random_bool(0.5) {
                TripleKey {
                    subject: replacement,
                    ..*t
                }
            } else {
                TripleKey {
                    object: replacement,
                    ..*t
                }
            };
            if !kb.contains_key(&cand) {
                found = Some(cand);
                break;
            }
        }
        match found {
            Some(c) => out.negatives.push(c),
            None => out.skipped += 1,
        }
    }
    out
}
