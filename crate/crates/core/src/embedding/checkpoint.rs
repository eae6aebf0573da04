//! Versioned JSON dump of an [`EmbeddingSet`].

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::kb::{OpenKb, PhraseKind};

use super::{EmbeddingError, EmbeddingSet, VectorTable};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub dim: usize,
    pub seed: u64,
    pub vocab_hash: String,
    pub np: Vec<Vec<f64>>,
    pub rel: Vec<Vec<f64>>,
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 over both vocabularies in id order.
pub fn vocab_hash(kb: &OpenKb) -> String {
    let mut h = Sha256::new();
    for kind in [PhraseKind::Np, PhraseKind::Rel] {
        h.update(kind.to_string().as_bytes());
        h.update([0u8]);
        for p in kb.vocab(kind) {
            h.update(p.text.as_bytes());
            h.update([0u8]);
        }
    }
    hex(&h.finalize())
}

pub fn save_checkpoint(path: &Path, kb: &OpenKb, emb: &EmbeddingSet, seed: u64) -> Result<(), EmbeddingError> {
    let ck = Checkpoint {
        format_version: CHECKPOINT_VERSION,
        dim: emb.dim(),
        seed,
        vocab_hash: vocab_hash(kb),
        np: emb.np.to_rows(),
        rel: emb.rel.to_rows(),
    };
    let text = serde_json::to_string(&ck).map_err(|e| EmbeddingError::Config(e.to_string()))?;
    fs::write(path, text).map_err(|source| EmbeddingError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Load a checkpoint and check it was trained on `kb`'s vocabulary.
pub fn load_checkpoint(path: &Path, kb: &OpenKb) -> Result<(EmbeddingSet, Checkpoint), EmbeddingError> {
    let text = fs::read_to_string(path).map_err(|source| EmbeddingError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut ck: Checkpoint = serde_json::from_str(&text).map_err(|e| EmbeddingError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })?;
    if ck.format_version != CHECKPOINT_VERSION {
        return Err(EmbeddingError::Config(format!(
            "checkpoint format {} is not supported",
            ck.format_version
        )));
    }
    if ck.vocab_hash != vocab_hash(kb) {
        return Err(EmbeddingError::Config("checkpoint vocabulary does not match the KB".into()));
    }
    let emb = EmbeddingSet {
        np: VectorTable::from_rows(ck.dim, &ck.np)?,
        rel: VectorTable::from_rows(ck.dim, &ck.rel)?,
    };
    emb.check_covers(kb)?;
    ck.np.clear();
    ck.rel.clear();
    Ok((emb, ck))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::random_embeddings;
    use crate::kb::TripleRecord;

    #[test]
    fn round_trip_is_exact() {
        let kb = OpenKb::from_records([TripleRecord::new("a", "r", "b")]).unwrap();
        let emb = random_embeddings(&kb, 7, 4);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("emb.json");
        save_checkpoint(&p, &kb, &emb, 4).unwrap();
        let (back, meta) = load_checkpoint(&p, &kb).unwrap();
        assert_eq!(back, emb);
        assert_eq!(meta.seed, 4);
        let other = OpenKb::from_records([TripleRecord::new("a", "r", "c")]).unwrap();
        assert!(load_checkpoint(&p, &other).is_err());
    }
}
