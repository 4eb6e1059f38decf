use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const TOOL: &str = "sketchforge";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const PARTIAL_SUFFIX: &str = ".partial";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Record of one run, written last and atomically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    /// Directory the relative paths of `config` are resolved against.
    pub base_dir: PathBuf,
    pub config: Value,
    pub status: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub summary: Value,
}

impl RunManifest {
    pub fn file_name(subcommand: &str) -> String {
        format!("{subcommand}.manifest.json")
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .context("output path has no file name")?;
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

pub fn digest_file(path: &Path, label: String) -> anyhow::Result<FileDigest> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(FileDigest {
        path: label,
        sha256: sha256_hex(&bytes),
        bytes: bytes.len() as u64,
    })
}

/// Output files of a run, with their digests.
#[derive(Debug)]
pub struct Outputs {
    dir: PathBuf,
    entries: Vec<FileDigest>,
}

impl Outputs {
    pub fn new(dir: PathBuf) -> anyhow::Result<Self> {
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self { dir, entries: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> anyhow::Result<()> {
        write_atomic(&self.dir.join(name), bytes)?;
        self.entries.push(FileDigest {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    /// Writes a directory of files and records one digest over the sorted
    /// `name digest` lines of its members.
    pub fn write_tree(&mut self, name: &str, mut files: Vec<(String, Vec<u8>)>) -> anyhow::Result<()> {
        let dir = self.dir.join(name);
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        files.sort_by(|a, b| a.0.cmp(&b.0));
        let mut listing = String::new();
        let mut total = 0u64;
        for (file, bytes) in &files {
            write_atomic(&dir.join(file), bytes)?;
            listing.push_str(&format!("{file} {}\n", sha256_hex(bytes)));
            total += bytes.len() as u64;
        }
        self.entries.push(FileDigest {
            path: format!("{name}/"),
            sha256: sha256_hex(listing.as_bytes()),
            bytes: total,
        });
        Ok(())
    }

    /// Renames every output with the partial suffix.
    pub fn mark_partial(&mut self) -> anyhow::Result<()> {
        for e in &mut self.entries {
            let trimmed = e.path.trim_end_matches('/');
            let renamed = format!("{trimmed}{PARTIAL_SUFFIX}");
            let target = self.dir.join(&renamed);
            if target.is_dir() {
                fs::remove_dir_all(&target)?;
            }
            fs::rename(self.dir.join(trimmed), &target)?;
            e.path = if e.path.ends_with('/') { format!("{renamed}/") } else { renamed };
        }
        Ok(())
    }

    pub fn into_entries(self) -> Vec<FileDigest> {
        self.entries
    }
}
