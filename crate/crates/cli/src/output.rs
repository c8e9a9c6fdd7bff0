//! Output directory with a checksummed file list.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub struct OutputDir {
    root: PathBuf,
    files: Vec<FileEntry>,
}

impl OutputDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, contents: &[u8]) -> CliResult<()> {
        let path = self.root.join(name);
        std::fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
        self.files.push(FileEntry {
            path: name.to_string(),
            sha256: sha256_hex(contents),
            bytes: contents.len(),
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value).expect("serializable");
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Writes `summary.json` listing every file written so far.
    pub fn finish(mut self, summary: serde_json::Value) -> CliResult<PathBuf> {
        let mut summary = summary;
        summary["files"] = serde_json::to_value(&self.files).expect("serializable");
        self.write_json("summary.json", &summary)?;
        Ok(self.root.join("summary.json"))
    }
}

/// Short decimal tag for file names, e.g. `0.4` for r = 0.4.
pub fn r_tag(r: f64) -> String {
    format!("{r}")
}
