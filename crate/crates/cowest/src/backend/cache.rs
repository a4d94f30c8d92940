//! Content-addressed response cache. Entries live at
//! `{root}/{first two hex chars}/{digest}` and store the canonical request,
//! the response text, and a checksum over the response so corruption is
//! detected instead of silently replayed.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{sha256_hex, BackendError, Completion, GenerationRequest, RequestBudget, TextBackend};

#[derive(Debug, Serialize, Deserialize)]
struct CacheEntry {
    checksum: String,
    request: serde_json::Value,
    response: String,
}

#[derive(Debug)]
pub struct ResponseCache {
    root: PathBuf,
}

impl ResponseCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn entry_path(&self, digest: &str) -> PathBuf {
        self.root.join(&digest[..2]).join(digest)
    }

    /// Returns the cached response text, None on a miss, CacheCorrupt when
    /// the stored payload fails its checksum or cannot be parsed.
    pub fn lookup(&self, digest: &str) -> Result<Option<String>, BackendError> {
        let path = self.entry_path(digest);
        let raw = match fs::read_to_string(&path) {
            Ok(raw) => raw,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(source) => return Err(BackendError::Io { path, source }),
        };
        let entry: CacheEntry = serde_json::from_str(&raw)
            .map_err(|_| BackendError::CacheCorrupt { digest: digest.to_string() })?;
        if sha256_hex(entry.response.as_bytes()) != entry.checksum {
            return Err(BackendError::CacheCorrupt { digest: digest.to_string() });
        }
        Ok(Some(entry.response))
    }

    /// Stores via write-to-temp-then-rename so concurrent writers of the
    /// same digest cannot leave a torn entry.
    pub fn store(
        &self,
        request: &GenerationRequest,
        digest: &str,
        response: &str,
    ) -> Result<(), BackendError> {
        let path = self.entry_path(digest);
        let dir = path.parent().expect("entry path always has a parent").to_path_buf();
        fs::create_dir_all(&dir).map_err(|source| BackendError::Io { path: dir.clone(), source })?;
        let entry = CacheEntry {
            checksum: sha256_hex(response.as_bytes()),
            request: serde_json::from_str(&request.canonical_json())
                .expect("canonical json always parses"),
            response: response.to_string(),
        };
        let body = serde_json::to_string(&entry).expect("entry serialization cannot fail");
        let tmp = dir.join(format!(".{digest}.tmp.{}", std::process::id()));
        fs::write(&tmp, body).map_err(|source| BackendError::Io { path: tmp.clone(), source })?;
        fs::rename(&tmp, &path).map_err(|source| BackendError::Io { path, source })?;
        Ok(())
    }
}

/// The cache-through generate path: validate, look up by digest, and only on
/// a miss spend budget and call the backend, storing the fresh response.
pub fn cached_generate(
    backend: &dyn TextBackend,
    cache: Option<&ResponseCache>,
    budget: Option<&RequestBudget>,
    request: &GenerationRequest,
) -> Result<Completion, BackendError> {
    request.validate()?;
    let digest = request.digest();
    if let Some(cache) = cache {
        let started = Instant::now();
        if let Some(text) = cache.lookup(&digest)? {
            return Ok(Completion {
                from_cache: true,
                latency_ms: started.elapsed().as_millis() as u64,
                request_digest: digest,
                text,
            });
        }
    }
    if let Some(budget) = budget {
        budget.try_acquire()?;
    }
    let completion = backend.generate(request)?;
    if let Some(cache) = cache {
        cache.store(request, &digest, &completion.text)?;
    }
    Ok(completion)
}
