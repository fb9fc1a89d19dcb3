use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use dualgap::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to re-run a command and check its outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: Vec<String>,
    pub config: serde_json::Value,
    pub seed: u64,
    pub version: String,
    pub started: String,
    pub finished: String,
    pub outputs: Vec<OutputFile>,
    /// SHA-256 over `path\0sha256\n` lines of all outputs, sorted by path.
    pub content_hash: String,
}

/// Output directory that remembers every file written into it.
pub struct OutDir {
    root: PathBuf,
    written: Vec<String>,
    started: String,
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root).map_err(|e| io_err(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
            started: now(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let p = self.path(name);
        std::fs::write(&p, contents).map_err(|e| io_err(&p, e))?;
        if !self.written.iter().any(|w| w == name) {
            self.written.push(name.to_string());
        }
        Ok(())
    }

    pub fn write_csv(&mut self, name: &str, table: &dualgap::report::CsvTable) -> Result<()> {
        self.write(name, &table.to_csv_string())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(name, &s)
    }

    /// Hashes every written file and writes the manifest last.
    pub fn finish(mut self, command: Vec<String>, config: serde_json::Value, seed: u64) -> Result<RunManifest> {
        let mut outputs = Vec::new();
        self.written.sort();
        for name in &self.written {
            let p = self.root.join(name);
            let bytes = std::fs::read(&p).map_err(|e| io_err(&p, e))?;
            outputs.push(OutputFile {
                path: name.clone(),
                sha256: hex::encode(Sha256::digest(&bytes)),
            });
        }
        let mut h = Sha256::new();
        for o in &outputs {
            h.update(format!("{}\0{}\n", o.path, o.sha256).as_bytes());
        }
        let manifest = RunManifest {
            command,
            config,
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            started: self.started.clone(),
            finished: now(),
            outputs,
            content_hash: hex::encode(h.finalize()),
        };
        let mut s = serde_json::to_string_pretty(&manifest)?;
        s.push('\n');
        let p = self.root.join(MANIFEST_FILE);
        std::fs::write(&p, s).map_err(|e| io_err(&p, e))?;
        Ok(manifest)
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}
