use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use llpr::Result;

/// Output directory of one run. Every file is written in full in one call
/// so reruns produce identical bytes.
#[derive(Clone, Debug)]
pub struct Outputs {
    dir: PathBuf,
}

impl Outputs {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn sub(&self, name: &str) -> Result<Self> {
        Self::create(&self.dir.join(name))
    }

    pub fn text(&self, name: &str, body: &str) -> Result<PathBuf> {
        let p = self.path(name);
        fs::write(&p, body)?;
        Ok(p)
    }

    pub fn json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> Result<PathBuf> {
        self.text(name, &(serde_json::to_string_pretty(value)? + "\n"))
    }

    pub fn csv_rows<T: Serialize>(&self, name: &str, rows: &[T]) -> Result<PathBuf> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r).map_err(|e| llpr::Error::Format(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| llpr::Error::Format(e.to_string()))?;
        let p = self.path(name);
        fs::write(&p, bytes)?;
        Ok(p)
    }

    /// Buffers a writer-based serializer and stores the result.
    pub fn with_writer(&self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<PathBuf> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        let p = self.path(name);
        fs::write(&p, buf)?;
        Ok(p)
    }
}
