//! Artifact manifest: what a recipe wrote, with content hashes.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArtifactKind {
    Checkpoint,
    Csv,
    Json,
    Svg,
    Log,
    Space,
    Report,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub kind: ArtifactKind,
    /// Hex sha-256 of the file content. `None` only for logs, which carry
    /// wall-clock timing and are exempt from byte-level reproducibility.
    pub sha256: Option<String>,
}

/// Every file a recipe emitted, in emission order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ArtifactManifest {
    pub entries: Vec<ManifestEntry>,
}

fn hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

pub fn sha256_hex(data: &[u8]) -> String {
    hex(&Sha256::digest(data))
}

impl ArtifactManifest {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Verifies that every listed file exists under `root` and, when
    /// hashed, still matches its recorded hash.
    pub fn verify(&self, root: &Path) -> Result<()> {
        for entry in &self.entries {
            let path = root.join(&entry.path);
            let data = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
            if let Some(expected) = &entry.sha256 {
                let actual = sha256_hex(&data);
                if &actual != expected {
                    return Err(Error::Format {
                        path,
                        offset: 0,
                        message: format!(
                            "manifest hash mismatch: recorded {expected}, found {actual}"
                        ),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Writes artifacts into an output directory while building the manifest.
pub struct ArtifactWriter {
    root: PathBuf,
    manifest: ArtifactManifest,
}

impl ArtifactWriter {
    pub fn new(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        Ok(ArtifactWriter {
            root: root.to_path_buf(),
            manifest: ArtifactManifest::default(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_of(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write(&mut self, name: &str, kind: ArtifactKind, data: &[u8]) -> Result<PathBuf> {
        let path = self.root.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(&path, data).map_err(|e| Error::io(&path, e))?;
        let sha256 = match kind {
            ArtifactKind::Log => None,
            _ => Some(sha256_hex(data)),
        };
        self.manifest.entries.push(ManifestEntry {
            path: name.to_string(),
            kind,
            sha256,
        });
        Ok(path)
    }

    /// Registers a file written through other means (e.g. a checkpoint).
    pub fn register(&mut self, name: &str, kind: ArtifactKind) -> Result<()> {
        let path = self.root.join(name);
        let data = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let sha256 = match kind {
            ArtifactKind::Log => None,
            _ => Some(sha256_hex(&data)),
        };
        self.manifest.entries.push(ManifestEntry {
            path: name.to_string(),
            kind,
            sha256,
        });
        Ok(())
    }

    pub fn manifest(&self) -> &ArtifactManifest {
        &self.manifest
    }

    /// Writes `manifest.json` and returns the finished manifest.
    pub fn finish(self) -> Result<ArtifactManifest> {
        let path = self.root.join("manifest.json");
        let json = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
        Ok(self.manifest)
    }

    pub fn into_manifest(self) -> ArtifactManifest {
        self.manifest
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verify_catches_tampering() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = ArtifactWriter::new(dir.path()).unwrap();
        w.write("a.csv", ArtifactKind::Csv, b"x,y\n1,2\n").unwrap();
        let manifest = w.finish().unwrap();
        manifest.verify(dir.path()).unwrap();
        std::fs::write(dir.path().join("a.csv"), b"tampered").unwrap();
        assert!(manifest.verify(dir.path()).is_err());
    }

    #[test]
    fn logs_are_exempt_from_hashing() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = ArtifactWriter::new(dir.path()).unwrap();
        w.write("run.log", ArtifactKind::Log, b"took 3s").unwrap();
        let manifest = w.finish().unwrap();
        assert_eq!(manifest.entries[0].sha256, None);
        std::fs::write(dir.path().join("run.log"), b"took 4s").unwrap();
        manifest.verify(dir.path()).unwrap();
    }
}
