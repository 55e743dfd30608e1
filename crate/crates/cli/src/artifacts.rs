//! In-memory output files, flushed to disk together with their manifest.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};
use susy_core::Result as CoreResult;

/// Name of the manifest written at the root of the output directory.
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Default, Clone)]
pub struct Artifacts {
    files: BTreeMap<String, Vec<u8>>,
}

#[derive(Debug, Serialize)]
struct Entry<'a> {
    path: &'a str,
    bytes: usize,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    seed: u64,
    files: Vec<Entry<'a>>,
}

pub fn sha256_hex(data: &[u8]) -> String {
    Sha256::digest(data).iter().map(|b| format!("{b:02x}")).collect()
}

impl Artifacts {
    pub fn insert(&mut self, path: impl Into<String>, data: Vec<u8>) {
        self.files.insert(path.into(), data);
    }

    /// Collects whatever `write` emits into a buffer stored at `path`.
    pub fn csv(
        &mut self,
        path: impl Into<String>,
        write: impl FnOnce(&mut Vec<u8>) -> CoreResult<()>,
    ) -> CoreResult<()> {
        let mut buf = Vec::new();
        write(&mut buf)?;
        self.insert(path, buf);
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, path: impl Into<String>, value: &T) {
        let mut buf = serde_json::to_vec_pretty(value).expect("plain data serializes");
        buf.push(b'\n');
        self.insert(path, buf);
    }

    pub fn extend(&mut self, other: Artifacts) {
        self.files.extend(other.files);
    }

    pub fn paths(&self) -> impl Iterator<Item = &str> {
        self.files.keys().map(String::as_str)
    }

    pub fn get(&self, path: &str) -> Option<&[u8]> {
        self.files.get(path).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.files.len()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    fn manifest_bytes(&self, command: &str, seed: u64) -> Vec<u8> {
        let files =
            self.files.iter().map(|(path, data)| Entry { path, bytes: data.len(), sha256: sha256_hex(data) }).collect();
        let mut buf = serde_json::to_vec_pretty(&Manifest { command, seed, files }).expect("plain data serializes");
        buf.push(b'\n');
        buf
    }

    /// Writes every file under `dir`, then the manifest.
    pub fn write_to(&self, dir: &Path, command: &str, seed: u64) -> std::io::Result<()> {
        for (path, data) in &self.files {
            let target = dir.join(path);
            if let Some(parent) = target.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(target, data)?;
        }
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(MANIFEST), self.manifest_bytes(command, seed))
    }
}
