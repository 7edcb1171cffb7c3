//! Run manifests: every artifact a run writes, each with a SHA-256 digest,
//! plus the fully resolved configuration so the run can be reproduced
//! byte for byte.

use std::path::{Path, PathBuf};

use pcl_core::error::{Error, Result};
use pcl_core::sha256_hex;
use serde::{Deserialize, Serialize};

/// One artifact, identified by its run-relative file name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub seed: u64,
    pub dev_fraction: f64,
    pub optimizer: String,
    /// "synthetic" or the input path.
    pub input_source: String,
    pub input_sha256: String,
    /// Pipeline stage at which the split was taken.
    pub split_stage: String,
    pub artifacts: Vec<ArtifactEntry>,
    /// Full resolved configuration echo.
    pub config: serde_json::Value,
    /// Defaults that fill gaps the experiment grid cannot pin down
    /// (warmup length, weight decay).
    pub notes: Vec<String>,
}

impl RunManifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

/// Writes artifacts under a run directory and records their digests.
pub struct ArtifactWriter {
    dir: PathBuf,
    entries: Vec<ArtifactEntry>,
}

impl ArtifactWriter {
    pub fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
        Ok(ArtifactWriter {
            dir: dir.to_path_buf(),
            entries: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        self.entries.push(ArtifactEntry {
            name: name.to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(path)
    }

    pub fn entries(&self) -> &[ArtifactEntry] {
        &self.entries
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writer_records_digests() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = ArtifactWriter::new(dir.path()).unwrap();
        w.write("a.txt", b"hello").unwrap();
        w.write("b.txt", b"").unwrap();
        assert_eq!(w.entries().len(), 2);
        assert_eq!(w.entries()[0].sha256, sha256_hex(b"hello"));
        assert!(dir.path().join("a.txt").exists());
    }
}
