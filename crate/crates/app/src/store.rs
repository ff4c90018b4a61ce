//! Content-addressed image storage: each upload lives at
//! `images/<sha256 of its bytes>`.

use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

#[derive(Debug, Clone)]
pub struct ImageStore {
    dir: PathBuf,
}

pub fn image_id(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn valid_id(id: &str) -> bool {
    id.len() == 64 && id.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
}

impl ImageStore {
    pub fn open(root: impl AsRef<Path>) -> std::io::Result<Self> {
        let dir = root.as_ref().join("images");
        std::fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn path(&self, id: &str) -> PathBuf {
        self.dir.join(id)
    }

    /// Stores `bytes` unless already present. Writes go through a temporary
    /// file and a rename, so a reader never sees a partial image.
    pub fn put(&self, bytes: &[u8]) -> std::io::Result<String> {
        let id = image_id(bytes);
        let path = self.path(&id);
        if !path.exists() {
            let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
            tmp.write_all(bytes)?;
            tmp.as_file().sync_all()?;
            tmp.persist(&path).map_err(|e| e.error)?;
        }
        Ok(id)
    }

    /// `None` for unknown or malformed ids.
    pub fn get(&self, id: &str) -> std::io::Result<Option<Vec<u8>>> {
        if !valid_id(id) {
            return Ok(None);
        }
        match std::fs::read(self.path(id)) {
            Ok(b) => Ok(Some(b)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }
}
