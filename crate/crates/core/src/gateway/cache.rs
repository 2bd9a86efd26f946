use std::io::Write;
use std::path::{Path, PathBuf};

use super::{cache_key, ChatProvider, ChatRequest, ChatResponse, GatewayError, ShortDigest};

/// One JSON file per request digest under a directory.
///
/// Writes go to a temp file in the same directory and are renamed into
/// place, so readers never observe a partial entry.
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

    pub fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    /// `Ok(None)` on a miss or a corrupt entry.
    pub fn get(&self, key: &str) -> Result<Option<ChatResponse>, GatewayError> {
        let path = self.path_for(key);
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        match serde_json::from_str(&text) {
            Ok(r) => Ok(Some(r)),
            Err(e) => {
                log::warn!("corrupt cache entry {}: {e}; treating as miss", path.display());
                Ok(None)
            }
        }
    }

    pub fn put(&self, key: &str, response: &ChatResponse) -> Result<(), GatewayError> {
        std::fs::create_dir_all(&self.dir)?;
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
        serde_json::to_writer_pretty(&mut tmp, response)
            .map_err(|e| GatewayError::Io(e.into()))?;
        tmp.flush()?;
        tmp.persist(self.path_for(key)).map_err(|e| e.error)?;
        Ok(())
    }
}

/// Serves from the cache when possible, otherwise calls the inner provider
/// and stores the reply. Cache failures fall back to pass-through.
#[derive(Debug)]
pub struct CachedChat<P> {
    inner: P,
    cache: ResponseCache,
}

impl<P> CachedChat<P> {
    pub fn new(inner: P, cache: ResponseCache) -> Self {
        CachedChat { inner, cache }
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }
}

impl<P: ChatProvider> ChatProvider for CachedChat<P> {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let key = cache_key(request);
        match self.cache.get(&key) {
            Ok(Some(hit)) => return Ok(hit),
            Ok(None) => {}
            Err(e) => log::warn!("cache read failed for {}: {e}", ShortDigest(&key)),
        }
        let response = self.inner.chat(request)?;
        if let Err(e) = self.cache.put(&key, &response) {
            log::warn!("cache write failed for {}: {e}", ShortDigest(&key));
        }
        Ok(response)
    }
}
