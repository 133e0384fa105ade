//! Content-hash inventory of a run directory.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::RunError;

pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    /// Path relative to the run directory, `/`-separated.
    pub path: String,
    pub kind: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub code_version: String,
    /// Unix seconds.
    pub created: u64,
    pub updated: u64,
    #[serde(default, rename = "artifact")]
    pub artifacts: Vec<Artifact>,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

pub fn sha256_file(path: &Path) -> Result<String, RunError> {
    let bytes = std::fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn kind_of(path: &str) -> &'static str {
    let name = path.rsplit('/').next().unwrap_or(path);
    if name.ends_with(".ckpt") {
        "checkpoint"
    } else if name.ends_with(".bin") {
        "dataset"
    } else if name == "metrics.csv" || name.ends_with(".activations.csv") || path.starts_with("replay/") {
        "log"
    } else if name == "config.toml" {
        "config"
    } else {
        "report"
    }
}

fn collect(dir: &Path, root: &Path, out: &mut Vec<PathBuf>) -> Result<(), RunError> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect(&p, root, out)?;
        } else if p != root.join(MANIFEST_FILE) {
            out.push(p);
        }
    }
    Ok(())
}

fn relative(path: &Path, root: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/")
}

impl RunManifest {
    /// Hashes every file under `dir` except the manifest itself.
    pub fn scan(dir: &Path) -> Result<Self, RunError> {
        let mut files = Vec::new();
        collect(dir, dir, &mut files)?;
        let mut artifacts = Vec::with_capacity(files.len());
        for f in files {
            let path = relative(&f, dir);
            artifacts.push(Artifact {
                kind: kind_of(&path).into(),
                sha256: sha256_file(&f)?,
                bytes: std::fs::metadata(&f)?.len(),
                path,
            });
        }
        let t = now();
        Ok(RunManifest { code_version: env!("CARGO_PKG_VERSION").into(), created: t, updated: t, artifacts })
    }

    pub fn load(dir: &Path) -> Result<Self, RunError> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| RunError::VerifyMismatch(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| RunError::VerifyMismatch(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, dir: &Path) -> Result<(), RunError> {
        let text = toml::to_string(self).map_err(|e| RunError::Config(e.to_string()))?;
        std::fs::write(dir.join(MANIFEST_FILE), text)?;
        Ok(())
    }

    /// Rescans `dir`, keeping the original creation time.
    pub fn refresh(dir: &Path) -> Result<Self, RunError> {
        let mut m = Self::scan(dir)?;
        if let Ok(old) = Self::load(dir) {
            m.created = old.created;
        }
        m.save(dir)?;
        Ok(m)
    }

    /// First listed file that is missing or whose content changed.
    pub fn check(&self, dir: &Path) -> Result<(), RunError> {
        for a in &self.artifacts {
            let p = dir.join(&a.path);
            if !p.is_file() {
                return Err(RunError::VerifyMismatch(format!("{} is missing", a.path)));
            }
            if sha256_file(&p)? != a.sha256 {
                return Err(RunError::VerifyMismatch(format!("{} does not match its recorded hash", a.path)));
            }
        }
        Ok(())
    }
}
