//! Content-addressed response cache.
//!
//! Layout: `<dir>/<first two hex chars>/<key>.json`. Writes go to a temp
//! file in the target directory and are renamed into place, so readers see
//! either nothing or a complete entry, and concurrent writers of the same
//! key are harmless.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datamodel::SamplingConfig;

use super::ModelEndpoint;

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct CacheKey(pub [u8; 32]);

impl CacheKey {
    pub fn hex(&self) -> String {
        hex::encode(self.0)
    }

    /// First eight bytes, used to seed mock responses.
    pub fn seed(&self) -> u64 {
        let mut b = [0u8; 8];
        b.copy_from_slice(&self.0[..8]);
        u64::from_le_bytes(b)
    }
}

impl fmt::Debug for CacheKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CacheKey({})", self.hex())
    }
}

/// SHA-256 over a length-prefixed encoding of everything that can change a
/// response. The auth token and concurrency limit are excluded.
pub fn cache_key(
    endpoint: &ModelEndpoint,
    prompt: &str,
    sampling: &SamplingConfig,
    sample_index: u32,
    repeat_index: u32,
) -> CacheKey {
    let mut h = Sha256::new();
    let mut field = |bytes: &[u8]| {
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(bytes);
    };
    field(b"memoprobe-cache-v1");
    field(endpoint.name.as_bytes());
    field(endpoint.base_url.as_bytes());
    field(endpoint.model_id.as_bytes());
    field(prompt.as_bytes());
    field(&sampling.temperature.to_bits().to_le_bytes());
    field(&sampling.nucleus.to_bits().to_le_bytes());
    field(&sampling.max_tokens.to_le_bytes());
    field(&sample_index.to_le_bytes());
    field(&repeat_index.to_le_bytes());
    let out = h.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&out);
    CacheKey(key)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CachedRequest {
    pub endpoint: String,
    pub base_url: String,
    pub model_id: String,
    pub prompt: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    pub sample_index: u32,
    pub repeat_index: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub request: CachedRequest,
    pub response: String,
    pub created_unix: u64,
}

#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        ResponseCache { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, key: &CacheKey) -> PathBuf {
        let hex = key.hex();
        self.dir.join(&hex[..2]).join(format!("{hex}.json"))
    }

    /// A missing or unreadable entry is a miss.
    pub fn get(&self, key: &CacheKey) -> Option<CacheEntry> {
        let bytes = fs::read(self.path_for(key)).ok()?;
        let entry: CacheEntry = serde_json::from_slice(&bytes).ok()?;
        (entry.key == key.hex()).then_some(entry)
    }

    pub fn put(&self, key: &CacheKey, entry: &CacheEntry) -> std::io::Result<()> {
        let path = self.path_for(key);
        let parent = path.parent().expect("cache path has a parent");
        fs::create_dir_all(parent)?;
        let mut tmp = tempfile::NamedTempFile::new_in(parent)?;
        serde_json::to_writer_pretty(&mut tmp, entry)?;
        tmp.write_all(b"\n")?;
        tmp.as_file().sync_all()?;
        tmp.persist(&path).map_err(|e| e.error)?;
        Ok(())
    }

    /// Number of entries on disk.
    pub fn len(&self) -> usize {
        let Ok(shards) = fs::read_dir(&self.dir) else { return 0 };
        shards
            .flatten()
            .filter_map(|s| fs::read_dir(s.path()).ok())
            .flat_map(|files| files.flatten())
            .filter(|f| f.path().extension().is_some_and(|e| e == "json"))
            .count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
