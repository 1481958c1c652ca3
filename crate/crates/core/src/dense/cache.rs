use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Content-addressed embedding store: one JSON file per `(model, text)` key,
/// at `<dir>/<first two hex digits>/<sha256 hex>.json`.
#[derive(Debug, Clone)]
pub struct EmbeddingCache {
    dir: PathBuf,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    model: String,
    text: String,
    values: Vec<f32>,
}

impl EmbeddingCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(EmbeddingCache { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn key(model: &str, text: &str) -> String {
        let digest = Sha256::new()
            .chain_update(model.as_bytes())
            .chain_update([0u8])
            .chain_update(text.as_bytes())
            .finalize();
        hex::encode(digest)
    }

    pub fn path_for(&self, model: &str, text: &str) -> PathBuf {
        let key = Self::key(model, text);
        self.dir.join(&key[..2]).join(format!("{key}.json"))
    }

    /// Raw provider output, if present and consistent with the key.
    pub fn get(&self, model: &str, text: &str) -> Option<Vec<f32>> {
        let bytes = std::fs::read(self.path_for(model, text)).ok()?;
        let entry: Entry = serde_json::from_slice(&bytes).ok()?;
        (entry.model == model && entry.text == text).then_some(entry.values)
    }

    pub fn put(&self, model: &str, text: &str, values: &[f32]) -> Result<()> {
        let path = self.path_for(model, text);
        let parent = path.parent().expect("cache path has a parent");
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        let entry = Entry {
            model: model.to_owned(),
            text: text.to_owned(),
            values: values.to_vec(),
        };
        let tmp = path.with_extension("json.tmp");
        std::fs::write(
            &tmp,
            serde_json::to_vec(&entry).expect("cache entry serializes"),
        )
        .map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_layout() {
        let dir = tempfile::tempdir().unwrap();
        let cache = EmbeddingCache::open(dir.path()).unwrap();
        assert!(cache.get("m", "hello").is_none());
        cache.put("m", "hello", &[0.1, -2.5, 3.0e-7]).unwrap();
        assert_eq!(cache.get("m", "hello").unwrap(), vec![0.1, -2.5, 3.0e-7]);
        assert!(cache.get("other", "hello").is_none());

        let key = EmbeddingCache::key("m", "hello");
        assert_eq!(key.len(), 64);
        assert!(dir
            .path()
            .join(&key[..2])
            .join(format!("{key}.json"))
            .exists());
    }

    #[test]
    fn key_separates_model_and_text() {
        assert_ne!(
            EmbeddingCache::key("ab", "c"),
            EmbeddingCache::key("a", "bc")
        );
    }
}
