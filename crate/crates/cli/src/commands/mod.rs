use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};
use sketchforge_core::datamodel::{ImageRecord, SketchRecord};
use sketchforge_core::instructions::SketchPool;
use sketchforge_core::jsonl;

use crate::config::LoadedConfig;
use crate::manifest::{digest_file, FileDigest, Outputs, TOOL, VERSION};

mod curate;
mod gallery;
mod instr;
mod mix;
mod report;
mod score;
mod sketch_gen;

pub use curate::curate_pretrain;
pub use gallery::gallery_build;
pub use instr::instr_build;
pub use mix::{mix_audit, mix_build};
pub use report::report;
pub use score::score;
pub use sketch_gen::sketch_gen;

/// Result of a subcommand that ran to completion.
#[derive(Debug, Default)]
pub struct Outcome {
    /// Some requested output could not be produced in full.
    pub partial: bool,
    /// Problems that invalidate the run (for example audit violations).
    pub violations: usize,
    pub summary: Value,
}

pub struct Ctx<'a> {
    pub cfg: &'a LoadedConfig,
    pub subcommand: &'static str,
    pub out: Outputs,
    pub inputs: Vec<FileDigest>,
}

impl<'a> Ctx<'a> {
    pub fn new(cfg: &'a LoadedConfig, subcommand: &'static str) -> anyhow::Result<Self> {
        Ok(Self {
            cfg,
            subcommand,
            out: Outputs::new(cfg.out_dir())?,
            inputs: Vec::new(),
        })
    }

    pub fn seed(&self) -> u64 {
        self.cfg.config.seed
    }

    /// Resolves an input, checks that it exists and records its digest.
    pub fn input(&mut self, p: &Path) -> anyhow::Result<PathBuf> {
        let r = self.cfg.input(p)?;
        if r.is_file() && !self.inputs.iter().any(|d| Path::new(&d.path) == p) {
            self.inputs.push(digest_file(&r, p.display().to_string())?);
        }
        Ok(r)
    }

    pub fn opt_input(&mut self, p: Option<&PathBuf>) -> anyhow::Result<Option<PathBuf>> {
        p.map(|p| self.input(p)).transpose()
    }

    /// Header line for JSONL outputs: tool, version, seed and the section of
    /// the configuration this subcommand reads.
    pub fn header<S: Serialize>(&self, section: &S) -> anyhow::Result<Value> {
        Ok(json!({
            "tool": TOOL,
            "version": VERSION,
            "subcommand": self.subcommand,
            "seed": self.seed(),
            "config": serde_json::to_value(section)?,
        }))
    }

    pub fn write_jsonl<T: Serialize, S: Serialize>(&mut self, name: &str, section: &S, records: &[T]) -> anyhow::Result<()> {
        let header = self.header(section)?;
        let bytes = jsonl::to_jsonl_bytes(Some(&header), records);
        self.out.write(name, &bytes)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> anyhow::Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.out.write(name, &bytes)
    }
}

pub fn section<'s, T>(s: &'s Option<T>, name: &str) -> anyhow::Result<&'s T> {
    s.as_ref().ok_or_else(|| anyhow!("configuration has no [{name}] section"))
}

pub fn read_records<T: DeserializeOwned>(path: &Path) -> anyhow::Result<Vec<T>> {
    Ok(jsonl::read_jsonl(path)?)
}

pub fn read_images(path: &Path) -> anyhow::Result<Vec<ImageRecord>> {
    let images: Vec<ImageRecord> = read_records(path)?;
    for img in &images {
        img.validate(None).with_context(|| format!("{}: image {}", path.display(), img.id))?;
    }
    Ok(images)
}

pub fn read_pool(path: &Path) -> anyhow::Result<SketchPool> {
    let mut pool = SketchPool::new();
    for rec in read_records::<SketchRecord>(path)? {
        pool.entry(rec.class_id).or_default().push(rec);
    }
    Ok(pool)
}

pub fn read_lines(path: &Path) -> anyhow::Result<Vec<String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text.lines().map(|l| l.trim().to_string()).filter(|l| !l.is_empty()).collect())
}

pub fn count_map<K: Ord + Clone>(items: impl IntoIterator<Item = K>) -> BTreeMap<K, usize> {
    let mut m = BTreeMap::new();
    for k in items {
        *m.entry(k).or_default() += 1;
    }
    m
}
