use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sketchforge_core::curation::{PoolSpec, DEFAULT_SIM_THRESHOLD, DEFAULT_TAIL_THRESHOLD};
use sketchforge_core::datamodel::SketchSource;
use sketchforge_core::evalmetrics::Averaging;
use sketchforge_core::instructions::CompositionSpec;
use sketchforge_core::sketchgen::SketchParams;

use crate::manifest::RunManifest;

/// Environment variable naming the directory searched for configs.
pub const CONFIG_DIR_ENV: &str = "SKETCHFORGE_CONFIG_DIR";
pub const DEFAULT_CONFIG_NAME: &str = "sketchforge.toml";

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sketch_gen: Option<SketchGenSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curate_pretrain: Option<CurateSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mix: Option<MixSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instr: Option<InstrSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gallery: Option<GallerySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<ScoreSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<ReportSection>,
}

fn primary_source() -> SketchSource {
    SketchSource::SketchVclO365
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SketchGenSection {
    /// Image manifest (JSONL of image records).
    pub images: PathBuf,
    /// Directory of `<image id>_<annotation index>.png` instance masks.
    pub masks_dir: PathBuf,
    /// Base for relative photo paths; defaults to the manifest's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub photo_root: Option<PathBuf>,
    #[serde(default = "primary_source")]
    pub source: SketchSource,
    #[serde(default)]
    pub params: SketchParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<Vec<u32>>,
}

fn default_tail_threshold() -> u64 {
    DEFAULT_TAIL_THRESHOLD
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurateSection {
    pub images: PathBuf,
    pub n_head: usize,
    pub n_tail: usize,
    #[serde(default = "default_tail_threshold")]
    pub tail_threshold: u64,
    /// JSONL of `{image_id, caption}`; with `class_names` and `pools`
    /// pretraining samples are composed for the picks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub captions: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_names: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pools: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompts: Option<PathBuf>,
}

fn default_sim_threshold() -> f64 {
    DEFAULT_SIM_THRESHOLD
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixSection {
    /// JSONL of available sketches, each with a `class_id` or a source `label`.
    pub sketches: PathBuf,
    #[serde(default)]
    pub spec: PoolSpec,
    /// Parent class list, one per line, needed for labelled sketches.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub taxonomy: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<PathBuf>,
    #[serde(default = "default_sim_threshold")]
    pub sim_threshold: f64,
    /// Pools to audit; defaults to `pools.jsonl` in the output directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pools: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstrSection {
    pub detect_images: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count_images: Option<PathBuf>,
    /// JSONL of `{image_id, class_id, count}` replacing annotation counts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count_truth: Option<PathBuf>,
    pub vqa_items: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vqa_images: Option<PathBuf>,
    pub sbir_images: PathBuf,
    pub pools: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompts: Option<PathBuf>,
    /// Class names checked against the prompt templates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_names: Option<PathBuf>,
    #[serde(default)]
    pub composition: CompositionSpec,
    /// Multiplies the default composition sizes; fractions stay as configured.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
}

impl InstrSection {
    pub fn effective_composition(&self) -> CompositionSpec {
        match self.scale {
            Some(f) => CompositionSpec {
                vqa_sketch_fraction: self.composition.vqa_sketch_fraction,
                sbir_positive_fraction: self.composition.sbir_positive_fraction,
                ..CompositionSpec::scaled(f)
            },
            None => self.composition,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GallerySection {
    /// JSONL of `{class_id, score}` detection mAP per class.
    pub class_map: PathBuf,
    pub images: PathBuf,
    pub sketches: PathBuf,
}

fn default_model() -> String {
    "model".into()
}

fn default_ks() -> Vec<usize> {
    vec![1, 5, 10]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreSection {
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<String>,
    /// Image manifest holding detection ground truth.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub images: Option<PathBuf>,
    #[serde(default)]
    pub averaging: Averaging,
    #[serde(default = "default_ks")]
    pub ks: Vec<usize>,
    #[serde(default)]
    pub entries: Vec<ScoreInput>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreInput {
    pub image_dataset: String,
    pub sketch_source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predictions: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub images: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gallery: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<PathBuf>,
}

fn default_report_name() -> String {
    "report".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportSection {
    pub inputs: Vec<PathBuf>,
    #[serde(default = "default_report_name")]
    pub name: String,
}

/// A parsed configuration and the directory its relative paths refer to.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.resolve(&self.config.out_dir)
    }

    /// Resolves an input path and checks that it exists.
    pub fn input(&self, p: &Path) -> anyhow::Result<PathBuf> {
        let r = self.resolve(p);
        if !r.exists() {
            bail!("input path does not exist: {}", r.display());
        }
        Ok(r)
    }
}

/// Finds the config file: the given path, else the same name under the
/// config directory variable, else the default name in that directory.
pub fn locate(path: Option<&Path>) -> anyhow::Result<PathBuf> {
    let env_dir = std::env::var_os(CONFIG_DIR_ENV).map(PathBuf::from);
    match (path, env_dir) {
        (Some(p), _) if p.exists() => Ok(p.to_path_buf()),
        (Some(p), Some(dir)) if p.is_relative() && dir.join(p).exists() => Ok(dir.join(p)),
        (Some(p), _) => bail!("config file not found: {}", p.display()),
        (None, Some(dir)) if dir.join(DEFAULT_CONFIG_NAME).exists() => Ok(dir.join(DEFAULT_CONFIG_NAME)),
        (None, _) => bail!("no --config given and no {DEFAULT_CONFIG_NAME} under ${CONFIG_DIR_ENV}"),
    }
}

fn parse_override_value(raw: &str) -> Value {
    let doc = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&doc) {
        Ok(mut t) => t
            .remove("v")
            .and_then(|v| serde_json::to_value(v).ok())
            .unwrap_or_else(|| Value::String(raw.to_string())),
        Err(_) => Value::String(raw.to_string()),
    }
}

/// Applies a dotted `key=value` assignment; the value is read as a TOML
/// literal and falls back to a plain string.
pub fn apply_override(doc: &mut Value, assignment: &str) -> anyhow::Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| anyhow!("override {assignment:?} is not key=value"))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        bail!("bad override key {key:?}");
    }
    let mut node = doc;
    for part in &parts[..parts.len() - 1] {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| anyhow!("override {key:?} descends into a non-table"))?;
        node = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    let obj = node
        .as_object_mut()
        .ok_or_else(|| anyhow!("override {key:?} descends into a non-table"))?;
    obj.insert(parts[parts.len() - 1].to_string(), parse_override_value(raw.trim()));
    Ok(())
}

/// Loads a TOML config or the snapshot inside a run manifest, then applies
/// overrides, seed and worker count.
pub fn load(
    path: &Path,
    overrides: &[String],
    seed: Option<u64>,
    workers: Option<usize>,
) -> anyhow::Result<LoadedConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let is_manifest = path.extension().is_some_and(|e| e == "json");
    let (mut doc, base_dir) = if is_manifest {
        let m: RunManifest =
            serde_json::from_str(&text).with_context(|| format!("parsing run manifest {}", path.display()))?;
        (m.config, m.base_dir)
    } else {
        let table: toml::Table = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let dir = if dir.as_os_str().is_empty() { PathBuf::from(".") } else { dir };
        (serde_json::to_value(table)?, std::fs::canonicalize(&dir)?)
    };
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    if let Some(s) = seed {
        apply_override(&mut doc, &format!("seed={s}"))?;
    }
    if let Some(w) = workers {
        apply_override(&mut doc, &format!("workers={w}"))?;
    }
    let config: RunConfig = serde_json::from_value(doc).context("invalid configuration")?;
    if config.workers == Some(0) {
        bail!("workers must be at least 1");
    }
    Ok(LoadedConfig { config, base_dir })
}
