//! Persistent embedding cache: one JSON file per entry, sharded by key prefix.

use std::path::{Path, PathBuf};

use tracing::warn;

use crate::siblings::{EmbeddingCache, EmbeddingVector};

#[derive(Debug, Clone)]
pub struct DiskCache {
    dir: PathBuf,
}

impl DiskCache {
    pub fn open(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, key: &str) -> PathBuf {
        let shard = key.get(..2).unwrap_or("__");
        self.dir.join(shard).join(format!("{key}.json"))
    }
}

impl EmbeddingCache for DiskCache {
    fn get(&self, key: &str) -> Option<EmbeddingVector> {
        let path = self.path(key);
        let bytes = std::fs::read(&path).ok()?;
        match serde_json::from_slice::<EmbeddingVector>(&bytes) {
            Ok(v) if !v.components.is_empty() => Some(v),
            _ => {
                warn!("corrupt embedding cache entry {}; recomputing", path.display());
                None
            }
        }
    }

    fn put(&self, key: &str, vector: &EmbeddingVector) {
        let path = self.path(key);
        let write = || -> std::io::Result<()> {
            let parent = path.parent().expect("sharded path");
            std::fs::create_dir_all(parent)?;
            // write then rename so concurrent readers never see a partial entry
            let tmp = tempfile::NamedTempFile::new_in(parent)?;
            serde_json::to_writer(&tmp, vector)?;
            tmp.persist(&path).map_err(|e| e.error)?;
            Ok(())
        };
        if let Err(e) = write() {
            warn!("cannot write embedding cache entry {}: {e}", path.display());
        }
    }
}
