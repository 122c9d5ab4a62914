//! Content-addressed on-disk response cache.
//!
//! One file per entry, named by the hex SHA-256 of
//! `template version \0 model name \0 rendered prompt`; the file holds the
//! raw response bytes. Writes go through a temp file and a rename, so
//! concurrent writers of the same key leave one complete value behind.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use sha2::{Digest, Sha256};

use super::prompt::PROMPT_TEMPLATE_VERSION;

#[derive(Debug)]
pub struct ResponseCache {
    dir: PathBuf,
    tmp_counter: AtomicU64,
}

pub fn cache_key(model_name: &str, rendered_prompt: &str) -> String {
    let mut h = Sha256::new();
    h.update(PROMPT_TEMPLATE_VERSION.as_bytes());
    h.update([0u8]);
    h.update(model_name.as_bytes());
    h.update([0u8]);
    h.update(rendered_prompt.as_bytes());
    hex::encode(h.finalize())
}

impl ResponseCache {
    pub fn open(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            tmp_counter: AtomicU64::new(0),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(key)
    }

    pub fn get(&self, key: &str) -> Option<String> {
        std::fs::read_to_string(self.path(key)).ok()
    }

    pub fn put(&self, key: &str, value: &str) -> std::io::Result<()> {
        let n = self.tmp_counter.fetch_add(1, Ordering::Relaxed);
        let tmp = self
            .dir
            .join(format!(".{key}.{}.{n}.tmp", std::process::id()));
        std::fs::write(&tmp, value.as_bytes())?;
        std::fs::rename(&tmp, self.path(key))
    }

    pub fn len(&self) -> usize {
        std::fs::read_dir(&self.dir)
            .map(|rd| {
                rd.filter_map(Result::ok)
                    .filter(|e| !e.file_name().to_string_lossy().starts_with('.'))
                    .count()
            })
            .unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
