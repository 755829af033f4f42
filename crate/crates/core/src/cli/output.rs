// SPDX-License-Identifier: Apache-2.0
//! CSV/JSON emission and the run manifest.

use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

pub fn sha256_hex(bytes: &[u8]) -> String {
    let d = Sha256::digest(bytes);
    d.iter().map(|b| format!("{b:02x}")).collect()
}

/// Column-oriented table with a metadata block.
#[derive(Clone, Debug, Default)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    /// (key, value) lines of the # block, after the scenario lines.
    pub meta: Vec<(String, String)>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Table { name: name.to_string(), columns: columns.iter().map(|s| s.to_string()).collect(), rows: Vec::new(), meta: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.push((key.to_string(), value.to_string()));
        self
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    /// CSV text: # metadata, one header row, data rows.
    pub fn to_csv(&self, scenario: &str, hash: &str) -> String {
        let mut s = String::new();
        s.push_str(&format!("# scenario: {scenario}\n# scenario_sha256: {hash}\n"));
        for (k, v) in &self.meta {
            s.push_str(&format!("# {k}: {v}\n"));
        }
        s.push_str(&self.columns.join(","));
        s.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|x| format!("{:.12e}", x + 0.0)).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }
}

/// Data rows of a CSV produced by [`Table::to_csv`] (metadata and header
/// stripped).
pub fn csv_body(text: &str) -> String {
    text.lines().filter(|l| !l.starts_with('#')).skip(1).collect::<Vec<_>>().join("\n")
}

#[derive(Clone, Debug, Serialize)]
pub struct EmittedFile {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub scenario: String,
    pub scenario_sha256: String,
    pub tool_version: String,
    pub protocol: String,
    pub integrator: serde_json::Value,
    pub wall_clock_s: f64,
    pub files: Vec<EmittedFile>,
}

/// Writes files into one directory, remembering them for the manifest and
/// for cleanup on failure.
pub struct Writer {
    dir: PathBuf,
    emitted: Vec<EmittedFile>,
}

impl Writer {
    pub fn new(dir: &Path) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Writer { dir: dir.to_path_buf(), emitted: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, contents: &str) -> io::Result<PathBuf> {
        let p = self.dir.join(name);
        let tmp = self.dir.join(format!(".{name}.tmp"));
        fs::write(&tmp, contents)?;
        fs::rename(&tmp, &p)?;
        self.emitted.push(EmittedFile { path: name.to_string(), sha256: sha256_hex(contents.as_bytes()), bytes: contents.len() });
        Ok(p)
    }

    pub fn emitted(&self) -> &[EmittedFile] {
        &self.emitted
    }

    /// Removes everything written so far.
    pub fn cleanup(&mut self) {
        for f in self.emitted.drain(..) {
            let _ = fs::remove_file(self.dir.join(&f.path));
        }
    }

    /// Writes `manifest.json` last and returns its path.
    pub fn finish(self, mut manifest: RunManifest) -> io::Result<PathBuf> {
        manifest.files = self.emitted;
        let text = serde_json::to_string_pretty(&manifest).map_err(io::Error::other)?;
        let p = self.dir.join("manifest.json");
        let tmp = self.dir.join(".manifest.json.tmp");
        fs::write(&tmp, text + "\n")?;
        fs::rename(&tmp, &p)?;
        Ok(p)
    }
}
