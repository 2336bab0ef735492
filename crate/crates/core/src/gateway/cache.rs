//! Content-addressed disk cache for completions.
//!
//! Entries live at `<root>/<first two key hex chars>/<key>` and are written
//! atomically (temp file + rename), so a crash mid-write can never produce a
//! half-written entry that later reads as a hit. Corrupt or unreadable entries
//! are treated as misses and overwritten by the next store.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub text: String,
    pub provider: String,
}

#[derive(Debug, Clone)]
pub struct DiskCache {
    root: PathBuf,
}

impl DiskCache {
    pub fn new(root: impl AsRef<Path>) -> std::io::Result<Self> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(&root)?;
        Ok(DiskCache { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn entry_path(&self, key: &str) -> PathBuf {
        let prefix = &key[..key.len().min(2)];
        self.root.join(prefix).join(key)
    }

    /// Look up a key. Any I/O or deserialization problem is a miss.
    pub fn get(&self, key: &str) -> Option<CacheEntry> {
        let bytes = fs::read(self.entry_path(key)).ok()?;
        serde_json::from_slice(&bytes).ok()
    }

    /// Store an entry atomically, overwriting any previous value.
    pub fn put(&self, key: &str, entry: &CacheEntry) -> std::io::Result<()> {
        let path = self.entry_path(key);
        let dir = path.parent().expect("entry path always has a parent");
        fs::create_dir_all(dir)?;
        let tmp = dir.join(format!("{key}.tmp"));
        let bytes = serde_json::to_vec(entry).expect("cache entry serialization cannot fail");
        fs::write(&tmp, bytes)?;
        fs::rename(&tmp, &path)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_layout() {
        let dir = tempfile::tempdir().unwrap();
        let cache = DiskCache::new(dir.path()).unwrap();
        let key = "ab".to_string() + &"0".repeat(62);
        let entry = CacheEntry { text: "payload".into(), provider: "stub".into() };
        cache.put(&key, &entry).unwrap();
        assert_eq!(cache.get(&key), Some(entry));
        assert!(dir.path().join("ab").join(&key).exists(), "entries are sharded by key prefix");
    }

    #[test]
    fn corrupt_entries_read_as_misses_and_are_replaced() {
        let dir = tempfile::tempdir().unwrap();
        let cache = DiskCache::new(dir.path()).unwrap();
        let key = "cd".to_string() + &"1".repeat(62);
        fs::create_dir_all(dir.path().join("cd")).unwrap();
        fs::write(dir.path().join("cd").join(&key), b"not json at all").unwrap();
        assert_eq!(cache.get(&key), None);
        let entry = CacheEntry { text: "fresh".into(), provider: "stub".into() };
        cache.put(&key, &entry).unwrap();
        assert_eq!(cache.get(&key), Some(entry));
    }

    #[test]
    fn missing_key_is_a_miss() {
        let dir = tempfile::tempdir().unwrap();
        let cache = DiskCache::new(dir.path()).unwrap();
        assert_eq!(cache.get(&("ef".to_string() + &"2".repeat(62))), None);
    }
}
