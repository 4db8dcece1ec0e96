use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::fsutil::write_atomic;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CachedResponse {
    pub key: String,
    pub response_text: String,
    /// Seconds since the Unix epoch when the response was stored.
    pub timestamp: u64,
    #[serde(default)]
    pub from_cache: bool,
    /// Latency of the original request, replayed on hits.
    #[serde(default)]
    pub latency_ms: u64,
}

/// One JSON file per key at `<dir>/<first two hex chars>/<key>.json`.
#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, key: &str) -> PathBuf {
        let prefix = key.get(..2).unwrap_or("00");
        self.dir.join(prefix).join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Option<CachedResponse> {
        let bytes = std::fs::read(self.path_for(key)).ok()?;
        let mut entry: CachedResponse = serde_json::from_slice(&bytes).ok()?;
        if entry.key != key {
            return None;
        }
        entry.from_cache = true;
        Some(entry)
    }

    pub fn put(&self, key: &str, response_text: &str, latency_ms: u64) -> std::io::Result<()> {
        let path = self.path_for(key);
        std::fs::create_dir_all(path.parent().expect("cache path has a parent"))?;
        let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let entry = CachedResponse {
            key: key.to_string(),
            response_text: response_text.to_string(),
            timestamp,
            from_cache: false,
            latency_ms,
        };
        write_atomic(&path, &serde_json::to_vec_pretty(&entry).expect("cache entry serialization is infallible"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::new(dir.path());
        let key = "ab12cd";
        assert!(cache.get(key).is_none());
        cache.put(key, "hello", 7).unwrap();
        assert!(dir.path().join("ab").join("ab12cd.json").is_file());
        let hit = cache.get(key).unwrap();
        assert_eq!((hit.response_text.as_str(), hit.from_cache, hit.latency_ms), ("hello", true, 7));
    }

    #[test]
    fn corrupt_entries_are_misses() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::new(dir.path());
        let path = cache.path_for("ffee");
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, b"{garbage").unwrap();
        assert!(cache.get("ffee").is_none());
    }
}
