//! Persistent response cache.
//!
//! One record per key, stored as `<root>/<aa>/<key>.json` where `aa` is the
//! first two hex digits of the key. Records carry a format version and a
//! per-record checksum; anything unreadable, version-mismatched, or
//! checksum-mismatched is logged and treated as a miss, then overwritten by
//! the next store.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ChatRequest, Usage};

pub const CACHE_FORMAT_VERSION: u32 = 1;

/// Canonical hash over everything that determines a backend response.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheKey(String);

impl CacheKey {
    pub fn compute(provider: &str, model_id: &str, request: &ChatRequest) -> Self {
        #[derive(Serialize)]
        struct KeyFields<'a> {
            provider: &'a str,
            model_id: &'a str,
            prompt: &'a str,
            image_digest: Option<&'a str>,
            n: u32,
            temperature: f64,
            top_p: f64,
            max_tokens: Option<u32>,
            stop: Option<&'a [String]>,
        }
        let canonical = serde_json::to_string(&KeyFields {
            provider,
            model_id,
            prompt: &request.prompt,
            image_digest: request.image.as_ref().map(|i| i.digest.as_str()),
            n: request.n,
            temperature: request.temperature,
            top_p: request.top_p,
            max_tokens: request.max_tokens,
            stop: request.stop.as_deref(),
        })
        .expect("key fields serialize");
        CacheKey(sha256_hex(canonical.as_bytes()))
    }

    pub fn as_hex(&self) -> &str {
        &self.0
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CacheRecord {
    version: u32,
    key: String,
    provider: String,
    model_id: String,
    prompt_sha256: String,
    completions: Vec<String>,
    input_tokens: u64,
    output_tokens: u64,
    created_unix_ms: u64,
    #[serde(default)]
    checksum: String,
}

impl CacheRecord {
    fn compute_checksum(&self) -> String {
        let mut unsummed = self.clone();
        unsummed.checksum = String::new();
        sha256_hex(
            serde_json::to_string(&unsummed)
                .expect("record serializes")
                .as_bytes(),
        )
    }
}

/// A cached backend reply.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CachedReply {
    pub completions: Vec<String>,
    pub usage: Usage,
    pub created_unix_ms: u64,
}

/// On-disk response store. Writes are serialized; reads are lock-free.
pub struct DiskCache {
    root: PathBuf,
    write_lock: Mutex<()>,
}

impl DiskCache {
    pub fn open(root: impl Into<PathBuf>) -> std::io::Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(DiskCache {
            root,
            write_lock: Mutex::new(()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn path_for(&self, key: &CacheKey) -> PathBuf {
        self.root.join(&key.as_hex()[..2]).join(format!("{}.json", key.as_hex()))
    }

    /// Returns the stored reply, or `None` for missing or corrupt records.
    pub fn lookup(&self, key: &CacheKey) -> Option<CachedReply> {
        let path = self.path_for(key);
        let bytes = fs::read(&path).ok()?;
        let record: CacheRecord = match serde_json::from_slice(&bytes) {
            Ok(r) => r,
            Err(e) => {
                log::warn!("cache record {} unreadable ({e}); treating as miss", path.display());
                return None;
            }
        };
        if record.version != CACHE_FORMAT_VERSION {
            log::warn!(
                "cache record {} has version {}; treating as miss",
                path.display(),
                record.version
            );
            return None;
        }
        if record.checksum != record.compute_checksum() || record.key != *key.as_hex() {
            log::warn!(
                "cache record {} failed integrity check; treating as miss",
                path.display()
            );
            return None;
        }
        Some(CachedReply {
            completions: record.completions,
            usage: Usage {
                input_tokens: record.input_tokens,
                output_tokens: record.output_tokens,
            },
            created_unix_ms: record.created_unix_ms,
        })
    }

    pub fn store(
        &self,
        key: &CacheKey,
        provider: &str,
        model_id: &str,
        prompt: &str,
        reply: &CachedReply,
    ) -> std::io::Result<()> {
        let mut record = CacheRecord {
            version: CACHE_FORMAT_VERSION,
            key: key.as_hex().to_string(),
            provider: provider.to_string(),
            model_id: model_id.to_string(),
            prompt_sha256: sha256_hex(prompt.as_bytes()),
            completions: reply.completions.clone(),
            input_tokens: reply.usage.input_tokens,
            output_tokens: reply.usage.output_tokens,
            created_unix_ms: reply.created_unix_ms,
            checksum: String::new(),
        };
        record.checksum = record.compute_checksum();

        let path = self.path_for(key);
        let _guard = self.write_lock.lock().unwrap();
        fs::create_dir_all(path.parent().expect("key path has parent"))?;
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, serde_json::to_vec(&record)?)?;
        fs::rename(&tmp, &path)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::ChatRequest;

    fn request(prompt: &str) -> ChatRequest {
        ChatRequest::text(prompt).with_n(1)
    }

    fn reply() -> CachedReply {
        CachedReply {
            completions: vec!["Analysis: ok.\nRating: 2".into()],
            usage: Usage {
                input_tokens: 10,
                output_tokens: 7,
            },
            created_unix_ms: 42,
        }
    }

    #[test]
    fn store_then_lookup_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let cache = DiskCache::open(dir.path()).unwrap();
        let key = CacheKey::compute("mock", "m", &request("hello"));
        assert!(cache.lookup(&key).is_none());
        cache.store(&key, "mock", "m", "hello", &reply()).unwrap();
        assert_eq!(cache.lookup(&key), Some(reply()));
    }

    #[test]
    fn corrupt_record_is_a_miss() {
        let dir = tempfile::tempdir().unwrap();
        let cache = DiskCache::open(dir.path()).unwrap();
        let key = CacheKey::compute("mock", "m", &request("hello"));
        cache.store(&key, "mock", "m", "hello", &reply()).unwrap();
        let path = cache.path_for(&key);
        // Flip a completion byte without updating the checksum.
        let tampered = fs::read_to_string(&path).unwrap().replace("Rating: 2", "Rating: 3");
        fs::write(&path, tampered).unwrap();
        assert!(cache.lookup(&key).is_none());
        // Garbage bytes are also just a miss.
        fs::write(&path, b"not json").unwrap();
        assert!(cache.lookup(&key).is_none());
    }

    #[test]
    fn key_is_sensitive_to_every_request_field() {
        let base = ChatRequest::text("p");
        let variants = [
            ChatRequest::text("q"),
            base.clone().with_n(2),
            ChatRequest {
                temperature: 0.5,
                ..base.clone()
            },
            ChatRequest {
                top_p: 0.9,
                ..base.clone()
            },
            ChatRequest {
                max_tokens: Some(64),
                ..base.clone()
            },
            ChatRequest {
                stop: Some(vec!["###".into()]),
                ..base.clone()
            },
        ];
        let key = CacheKey::compute("p1", "m1", &base);
        for v in &variants {
            assert_ne!(key, CacheKey::compute("p1", "m1", v));
        }
        assert_ne!(key, CacheKey::compute("p2", "m1", &base));
        assert_ne!(key, CacheKey::compute("p1", "m2", &base));
    }
}
