//! Output files with provenance. Nothing here depends on the clock or the
//! environment, so identical inputs give byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::RunConfig;

pub const TOOL: &str = "hdqkd";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub seed: u64,
    pub config_sha256: String,
}

impl Provenance {
    pub fn new(cfg: &RunConfig) -> Self {
        Self { tool: TOOL, version: VERSION, seed: cfg.seed, config_sha256: cfg.digest() }
    }

    pub fn line(&self) -> String {
        format!("{} {} seed={} config_sha256={}", self.tool, self.version, self.seed, self.config_sha256)
    }
}

pub struct OutDir {
    root: PathBuf,
    provenance: Provenance,
}

#[derive(Serialize)]
struct Document<'a, T: Serialize> {
    provenance: &'a Provenance,
    #[serde(flatten)]
    body: &'a T,
}

impl OutDir {
    pub fn create(root: &Path, provenance: Provenance) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating output directory {}", root.display()))?;
        Ok(Self { root: root.to_path_buf(), provenance })
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write_bytes(&self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    /// CSV preceded by a `#` provenance line.
    pub fn write_csv(&self, name: &str, body: &str) -> Result<PathBuf> {
        self.write_bytes(name, format!("# {}\n{body}", self.provenance.line()).as_bytes())
    }

    /// Pretty JSON object: `provenance` followed by the fields of `body`,
    /// which must serialize as a map.
    pub fn write_json<T: Serialize>(&self, name: &str, body: &T) -> Result<PathBuf> {
        let doc = Document { provenance: &self.provenance, body };
        let mut text = serde_json::to_string_pretty(&doc)?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    /// Binary PGM with the provenance as a header comment.
    pub fn write_pgm(&self, name: &str, pgm: &[u8]) -> Result<PathBuf> {
        let magic = b"P5\n";
        anyhow::ensure!(pgm.starts_with(magic), "not a binary PGM");
        let mut out = magic.to_vec();
        out.extend_from_slice(format!("# {}\n", self.provenance.line()).as_bytes());
        out.extend_from_slice(&pgm[magic.len()..]);
        self.write_bytes(name, &out)
    }
}
