//! Initial vectors from averaged pretrained word vectors.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::kb::{OpenKb, PhraseKind};

use super::{EmbeddingError, EmbeddingSet, VectorTable};

/// Pretrained token vectors, `token v_1 ... v_d` per line.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WordVectors {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl WordVectors {
    pub fn from_map(dim: usize, vectors: HashMap<String, Vec<f64>>) -> Result<Self, EmbeddingError> {
        if let Some(v) = vectors.values().find(|v| v.len() != dim) {
            return Err(EmbeddingError::DimensionMismatch {
                expected: dim,
                found: v.len(),
            });
        }
        Ok(WordVectors { dim, vectors })
    }

    /// Load a vectors file, keeping only tokens in `wanted` when given.
    pub fn load(path: &Path, wanted: Option<&HashSet<String>>) -> Result<Self, EmbeddingError> {
        let f = File::open(path).map_err(|source| EmbeddingError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut dim = None;
        let mut vectors = HashMap::new();
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let parse_err = |message: String| EmbeddingError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            };
            let line = line.map_err(|e| parse_err(e.to_string()))?;
            let mut fields = line.split_whitespace();
            let Some(token) = fields.next() else { continue };
            let values: Vec<f64> = fields
                .map(|x| x.parse::<f64>().map_err(|e| parse_err(format!("{x:?}: {e}"))))
                .collect::<Result<_, _>>()?;
            match dim {
                None => dim = Some(values.len()),
                Some(d) if d != values.len() => {
                    return Err(parse_err(format!("expected {d} values, found {}", values.len())));
                }
                Some(_) => {}
            }
            if wanted.is_none_or(|w| w.contains(token)) {
                vectors.insert(token.to_string(), values);
            }
        }
        Ok(WordVectors {
            dim: dim.unwrap_or(0),
            vectors,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors.get(token).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

/// Lowercased whitespace tokens, the keys looked up in the vectors file.
pub fn phrase_tokens(text: &str) -> Vec<String> {
    text.to_lowercase().split_whitespace().map(str::to_string).collect()
}

/// Every token of every phrase in the KB.
pub fn kb_tokens(kb: &OpenKb) -> HashSet<String> {
    kb.np_vocab()
        .iter()
        .chain(kb.rel_vocab())
        .flat_map(|p| phrase_tokens(&p.text))
        .collect()
}

/// Mean of the known token vectors of `text`; when no token is known, entries are
/// drawn uniformly from `[-0.1/√d, 0.1/√d]`.
pub fn phrase_vector<R: Rng + ?Sized>(text: &str, vectors: Option<&WordVectors>, dim: usize, rng: &mut R) -> Vec<f64> {
    let mut sum = vec![0.0; dim];
    let mut found = 0usize;
    if let Some(wv) = vectors {
        for tok in phrase_tokens(text) {
            if let Some(v) = wv.get(&tok) {
                sum.iter_mut().zip(v).for_each(|(s, x)| *s += x);
                found += 1;
            }
        }
    }
    if found == 0 {
        let bound = 0.1 / (dim as f64).sqrt();
        return (0..dim).map(|_| rng.random_range(-bound..=bound)).collect();
    }
    let inv = 1.0 / found as f64;
    sum.into_iter().map(|s| s * inv).collect()
}

/// Initialize every NP then every relation phrase, in id order, from `vectors`.
/// Randomness is only consumed by phrases without any known token.
pub fn init_embeddings(
    kb: &OpenKb,
    vectors: Option<&WordVectors>,
    dim: usize,
    seed: u64,
) -> Result<EmbeddingSet, EmbeddingError> {
    if let Some(wv) = vectors {
        if wv.dim() != dim && !wv.is_empty() {
            return Err(EmbeddingError::Config(format!(
                "word vectors have dimension {}, embeddings need {dim}",
                wv.dim()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut table = |kind| {
        let rows: Vec<Vec<f64>> = kb
            .vocab(kind)
            .iter()
            .map(|p| phrase_vector(&p.text, vectors, dim, &mut rng))
            .collect();
        VectorTable::from_rows(dim, &rows)
    };
    let np = table(PhraseKind::Np)?;
    let rel = table(PhraseKind::Rel)?;
    Ok(EmbeddingSet { np, rel })
}

pub fn random_embeddings(kb: &OpenKb, dim: usize, seed: u64) -> EmbeddingSet {
    init_embeddings(kb, None, dim, seed).expect("random init cannot fail")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::TripleRecord;
    use std::io::Write;

    fn vectors() -> WordVectors {
        let mut m = HashMap::new();
        m.insert("new".to_string(), vec![1.0, 0.0, 2.0]);
        m.insert("york".to_string(), vec![3.0, 4.0, 0.0]);
        WordVectors::from_map(3, m).unwrap()
    }

    #[test]
    fn averaging() {
        let wv = vectors();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(phrase_vector("New York", Some(&wv), 3, &mut rng), vec![2.0, 2.0, 1.0]);
        assert_eq!(phrase_vector("york", Some(&wv), 3, &mut rng), vec![3.0, 4.0, 0.0]);
        assert_eq!(phrase_vector("new zzz", Some(&wv), 3, &mut rng), vec![1.0, 0.0, 2.0]);
    }

    #[test]
    fn unknown_tokens_fall_back_to_seeded_uniform() {
        let wv = vectors();
        let draw = |seed| phrase_vector("qwerty", Some(&wv), 3, &mut ChaCha8Rng::seed_from_u64(seed));
        let a = draw(5);
        assert_eq!(a, draw(5));
        assert_ne!(a, draw(6));
        let bound = 0.1 / 3f64.sqrt();
        assert!(a.iter().all(|x| x.abs() <= bound));
    }

    #[test]
    fn kb_init_and_dim_check() {
        let kb = OpenKb::from_records([TripleRecord::new("New York", "near", "Boston")]).unwrap();
        let wv = vectors();
        let emb = init_embeddings(&kb, Some(&wv), 3, 1).unwrap();
        assert_eq!(emb.np.row(kb.lookup(PhraseKind::Np, "New York").unwrap()), &[2.0, 2.0, 1.0]);
        emb.check_covers(&kb).unwrap();
        assert!(matches!(init_embeddings(&kb, Some(&wv), 4, 1), Err(EmbeddingError::Config(_))));
        assert_eq!(random_embeddings(&kb, 8, 3), random_embeddings(&kb, 8, 3));
    }

    #[test]
    fn load_file_filtered() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "new 1 0 2\nyork 3 4 0\nzebra 9 9 9").unwrap();
        let wanted: HashSet<String> = ["new".to_string(), "york".to_string()].into();
        let wv = WordVectors::load(f.path(), Some(&wanted)).unwrap();
        assert_eq!(wv.dim(), 3);
        assert_eq!(wv.len(), 2);
        assert_eq!(wv.get("york"), Some(&[3.0, 4.0, 0.0][..]));
        let mut bad = tempfile::NamedTempFile::new().unwrap();
        writeln!(bad, "a 1 2\nb 1").unwrap();
        assert!(matches!(WordVectors::load(bad.path(), None), Err(EmbeddingError::Parse { line: 2, .. })));
    }
}
