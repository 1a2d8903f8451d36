//! Content-addressed response cache: `<dir>/<hh>/<sha256>.json`.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::{Frame, RawResponse};
use crate::error::{Error, Result};

/// sha256 over model, frame, temperature and the exact prompt bytes.
pub fn cache_key(model: &str, frame: Frame, temperature: f64, prompt: &str) -> String {
    let mut h = Sha256::new();
    h.update(model.as_bytes());
    h.update([0x1f]);
    h.update(frame.as_str().as_bytes());
    h.update([0x1f]);
    h.update(temperature.to_bits().to_le_bytes());
    h.update([0x1f]);
    h.update(prompt.as_bytes());
    hex::encode(h.finalize())
}

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

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(&key[..2]).join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Result<Option<RawResponse>> {
        let path = self.path(key);
        match std::fs::read_to_string(&path) {
            Ok(text) => Ok(Some(serde_json::from_str(&text)?)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::io(path, e)),
        }
    }

    /// Writes through a temporary file and renames, so concurrent readers
    /// never observe a partial entry.
    pub fn put(&self, key: &str, resp: &RawResponse) -> Result<()> {
        let path = self.path(key);
        let dir = path.parent().expect("cache path has a parent");
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let tmp = dir.join(format!(".{key}.{:?}.tmp", std::thread::current().id()));
        let mut stored = resp.clone();
        stored.cached = false;
        std::fs::write(&tmp, serde_json::to_vec(&stored)?).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
    }
}
