//! Synthetic workspace for driving the `sketchforge` binary end to end.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use image::{GrayImage, Luma, Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};
use sketchforge_core::datamodel::{
    format_box_list, normalize_box, Annotation, BoundingBox, ImageRecord, InstructionSample, PredictionRecord, Round,
    SketchRecord, SketchSource, TaskKind,
};
use sketchforge_core::evalmetrics::{GallerySpec, LabeledItem};
use sketchforge_core::instructions::{QaItem, QaRound};
use sketchforge_core::jsonl;
use tempfile::TempDir;

pub const BIN: &str = env!("CARGO_BIN_EXE_sketchforge");

pub const CLASS_NAMES: [&str; 7] = ["person", "car", "dog", "cat", "bicycle", "zebra", "apple"];

/// Classes of the tail-balancing fixture and their instance counts.
pub const CURATE_COUNTS: [(u32, u64); 6] = [(0, 5000), (1, 4999), (2, 6000), (3, 1), (4, 40), (6, 4000)];
pub const CURATE_N_HEAD: usize = 20;
pub const CURATE_N_TAIL: usize = 60;

pub const SBIR_CLASSES: u32 = 20;

#[derive(Debug)]
pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Run {
    pub fn stdout_json(&self) -> Value {
        serde_json::from_str(self.stdout.trim()).unwrap_or_else(|e| panic!("stdout not JSON ({e}): {}", self.stdout))
    }

    pub fn stderr_json(&self) -> Value {
        let line = self.stderr.lines().last().unwrap_or_default();
        serde_json::from_str(line).unwrap_or_else(|e| panic!("stderr not JSON ({e}): {}", self.stderr))
    }
}

pub fn run(args: &[&str]) -> Run {
    run_env(args, &[])
}

pub fn run_env(args: &[&str], env: &[(&str, &Path)]) -> Run {
    let mut cmd = Command::new(BIN);
    cmd.args(args).env_remove("SKETCHFORGE_CONFIG_DIR");
    for (k, v) in env {
        cmd.env(k, v);
    }
    let out = cmd.output().expect("binary runs");
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

/// Every file under `dir` except run manifests, keyed by relative path.
pub fn tree_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else if !p.to_string_lossy().ends_with(".manifest.json") {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

pub fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))).unwrap()
}

pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Vec<T> {
    jsonl::read_jsonl(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn write_records<T: Serialize>(path: &Path, records: &[T]) {
    jsonl::write_jsonl(path, None, records).unwrap();
}

fn annotation(w: u32, h: u32, abs: [f64; 4], class_id: u32) -> Annotation {
    Annotation {
        class_id,
        bbox: normalize_box(abs, w, h).unwrap(),
        area_px: (abs[2] - abs[0]) * (abs[3] - abs[1]),
    }
}

fn random_abs_box(rng: &mut ChaCha8Rng, w: u32, h: u32) -> [f64; 4] {
    let bw = rng.gen_range(w / 8..w / 2) as f64;
    let bh = rng.gen_range(h / 8..h / 2) as f64;
    let x = rng.gen_range(0.0..(w as f64 - bw)).floor();
    let y = rng.gen_range(0.0..(h as f64 - bh)).floor();
    [x, y, x + bw, y + bh]
}

fn sketch(id: String, class_id: u32, source: SketchSource) -> SketchRecord {
    SketchRecord { path: PathBuf::from(format!("sk/{id}.png")), id, class_id, source, origin_image_id: None }
}

/// Ellipse inscribed in an integer box, as a full-image mask.
pub fn ellipse_mask(w: u32, h: u32, b: [u32; 4]) -> GrayImage {
    let (cx, cy) = ((b[0] + b[2]) as f64 / 2.0, (b[1] + b[3]) as f64 / 2.0);
    let (rx, ry) = ((b[2] - b[0]) as f64 / 2.0, (b[3] - b[1]) as f64 / 2.0);
    GrayImage::from_fn(w, h, |x, y| {
        let dx = (x as f64 + 0.5 - cx) / rx;
        let dy = (y as f64 + 0.5 - cy) / ry;
        Luma([if dx * dx + dy * dy <= 1.0 { 255 } else { 0 }])
    })
}

/// A photo with smooth gradients, stripes and noise.
pub fn textured_photo(rng: &mut ChaCha8Rng, w: u32, h: u32) -> RgbImage {
    let period = rng.gen_range(5..17);
    let tint: [u8; 3] = rng.gen();
    let mut img = RgbImage::from_fn(w, h, |x, y| {
        let stripe = if (x / period + y / period) % 2 == 0 { 60 } else { 190 };
        Rgb([
            stripe.max(tint[0] / 2),
            ((x * 255) / w.max(1)) as u8,
            ((y * 255) / h.max(1)) as u8 ^ tint[2],
        ])
    });
    for p in img.pixels_mut() {
        for c in p.0.iter_mut() {
            *c = c.saturating_add(rng.gen_range(0..24));
        }
    }
    img
}

/// A temporary directory holding every input the subcommands read, plus
/// configs referring to them by relative path.
pub struct World {
    pub dir: TempDir,
    pub sbir_gallery: GallerySpec,
}

impl World {
    pub fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
        write_sketch_gen_inputs(&root, &mut rng);
        let images = write_instr_inputs(&root, &mut rng);
        write_mix_inputs(&root);
        write_curate_inputs(&root);
        write_gallery_inputs(&root, &mut rng);
        write_detect_score_inputs(&root, &images, &mut rng);
        write_vqa_score_inputs(&root);
        let sbir_gallery = write_sbir_score_inputs(&root);
        write_report_inputs(&root);
        fs::write(root.join("config.toml"), MAIN_CONFIG).unwrap();
        fs::write(root.join("instr_sbir.toml"), INSTR_SBIR_CONFIG).unwrap();
        fs::write(root.join("score_vqa.toml"), SCORE_VQA_CONFIG).unwrap();
        fs::write(root.join("score_sbir.toml"), SCORE_SBIR_CONFIG).unwrap();
        fs::write(root.join("report.toml"), REPORT_CONFIG).unwrap();
        World { dir, sbir_gallery }
    }

    pub fn root(&self) -> &Path {
        self.dir.path()
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    pub fn config(&self) -> String {
        self.path("config.toml").display().to_string()
    }

    /// Runs a subcommand against `config` with the output directory `out`
    /// and extra arguments.
    pub fn run_in(&self, config: &str, out: &Path, sub: &[&str], extra: &[&str]) -> Run {
        let cfg = self.path(config).display().to_string();
        let set = format!("out_dir={}", out.display());
        let mut args: Vec<&str> = sub.to_vec();
        args.extend(["--config", &cfg, "--set", &set]);
        args.extend(extra);
        run(&args)
    }
}

impl Default for World {
    fn default() -> Self {
        Self::new()
    }
}

fn write_sketch_gen_inputs(root: &Path, rng: &mut ChaCha8Rng) {
    fs::create_dir_all(root.join("photos")).unwrap();
    fs::create_dir_all(root.join("masks")).unwrap();
    let mut records = Vec::new();
    for i in 0..6u32 {
        let (w, h) = (96 + 8 * i, 80 + 4 * i);
        let id = format!("sg{i}");
        textured_photo(rng, w, h).save(root.join(format!("photos/{id}.png"))).unwrap();
        let mut annotations = Vec::new();
        for k in 0..2u32 {
            let x0 = rng.gen_range(2..w / 2 - 10);
            let y0 = rng.gen_range(2..h / 2 - 10);
            let b = [x0, y0, x0 + rng.gen_range(16..w / 2), y0 + rng.gen_range(16..h / 2)];
            annotations.push(annotation(w, h, b.map(f64::from), (i + k) % 4));
            // one instance is left without a mask
            if !(i == 5 && k == 1) {
                ellipse_mask(w, h, b).save(root.join(format!("masks/{id}_{k}.png"))).unwrap();
            }
        }
        records.push(ImageRecord { id, path: PathBuf::from(format!("photos/sg{i}.png")), width: w, height: h, annotations });
    }
    write_records(&root.join("sg_images.jsonl"), &records);
}

fn write_instr_inputs(root: &Path, rng: &mut ChaCha8Rng) -> Vec<ImageRecord> {
    let (w, h) = (200, 160);
    let multi: Vec<ImageRecord> = (0..80u32)
        .map(|i| {
            let mut classes = vec![i % 6, (i + 1) % 6];
            if i % 3 == 0 {
                classes.push(i % 6);
            }
            let annotations = classes.iter().map(|&c| annotation(w, h, random_abs_box(rng, w, h), c)).collect();
            ImageRecord { id: format!("m{i}"), path: PathBuf::from(format!("m{i}.jpg")), width: w, height: h, annotations }
        })
        .collect();
    let single: Vec<ImageRecord> = (0..30u32)
        .map(|i| ImageRecord {
            id: format!("s{i}"),
            path: PathBuf::from(format!("s{i}.jpg")),
            width: w,
            height: h,
            annotations: vec![annotation(w, h, random_abs_box(rng, w, h), i % 6)],
        })
        .collect();
    let qa: Vec<QaItem> = (0..70u32)
        .map(|i| QaItem {
            image_id: format!("m{i}"),
            rounds: (0..1 + i % 2)
                .map(|r| QaRound { question: format!("Question {r} about the scene?"), answer: format!("Answer {r}.") })
                .collect(),
            class_id: None,
        })
        .collect();
    let pool: Vec<SketchRecord> = (0..6u32)
        .flat_map(|c| (0..4).map(move |k| sketch(format!("k{c}_{k}"), c, SketchSource::ALL[k % 5])))
        .collect();
    write_records(&root.join("images.jsonl"), &multi);
    write_records(&root.join("sbir_images.jsonl"), &single);
    write_records(&root.join("vqa.jsonl"), &qa);
    write_records(&root.join("pools_fixture.jsonl"), &pool);
    multi
}

/// Supply per class, chosen to hit every branch of the pool rules.
pub fn mix_supply() -> Vec<(u32, SketchSource, usize)> {
    use SketchSource::*;
    vec![
        (0, SketchVclO365, 250),
        (1, SketchVclO365, 120),
        (2, SketchVclO365, 80),
        (2, Sketchy, 300),
        (2, QuickDraw, 300),
        (3, SketchVclO365, 10),
        (3, QuickDraw, 100),
        (4, SketchVclO365, 300),
        (4, Sketchy, 40),
        (5, SketchVclO365, 5),
        (5, Sketchy, 100),
    ]
}

/// Sketches listed by source label instead of class id.
pub const LABELLED: [(&str, usize); 2] = [("Zebra", 30), ("unicornish", 12)];

fn write_mix_inputs(root: &Path) {
    let mut rows: Vec<Value> = Vec::new();
    for (c, src, n) in mix_supply() {
        for k in 0..n {
            rows.push(json!({ "id": format!("x{c}_{}_{k}", src.as_str()), "source": src, "path": "sk/x.png", "class_id": c }));
        }
    }
    for (label, n) in LABELLED {
        for k in 0..n {
            rows.push(json!({ "id": format!("l_{label}_{k}"), "source": "QuickDraw", "path": "sk/l.png", "label": label }));
        }
    }
    write_records(&root.join("supply.jsonl"), &rows);
    fs::write(root.join("taxonomy.txt"), CLASS_NAMES[..6].join("\n") + "\n").unwrap();
    fs::write(root.join("class_names.txt"), CLASS_NAMES.join("\n") + "\n").unwrap();
}

fn write_curate_inputs(root: &Path) {
    let (w, h) = (100, 100);
    let ann = |c: u32| annotation(w, h, [10.0, 10.0, 20.0, 20.0], c);
    let mut images = Vec::new();
    for (c, count) in CURATE_COUNTS {
        // at most 100 instances per image; small classes one per image
        let per = if count >= 1000 { 100 } else { 1 };
        let mut left = count;
        let mut k = 0;
        while left > 0 {
            let n = left.min(per);
            images.push(ImageRecord {
                id: format!("c{c}_{k}"),
                path: PathBuf::from("c.jpg"),
                width: w,
                height: h,
                annotations: (0..n).map(|_| ann(c)).collect(),
            });
            left -= n;
            k += 1;
        }
    }
    let captions: Vec<Value> =
        images.iter().map(|i| json!({ "image_id": i.id, "caption": format!("A photo numbered {}.", i.id) })).collect();
    write_records(&root.join("curate_images.jsonl"), &images);
    write_records(&root.join("captions.jsonl"), &captions);
}

fn write_gallery_inputs(root: &Path, rng: &mut ChaCha8Rng) {
    let mut images = Vec::new();
    let mut sketches = Vec::new();
    let mut scores = Vec::new();
    for c in 200..225u32 {
        for k in 0..6 {
            images.push(ImageRecord {
                id: format!("gp{c}_{k}"),
                path: PathBuf::from("g.jpg"),
                width: 64,
                height: 64,
                annotations: vec![annotation(64, 64, [4.0, 4.0, 40.0, 40.0], c)],
            });
        }
        for k in 0..7 {
            sketches.push(sketch(format!("gs{c}_{k}"), c, SketchSource::Sketchy));
        }
        scores.push(json!({ "class_id": c, "score": rng.gen_range(0.0..60.0) }));
    }
    // multi-class photos never enter the gallery; unsupplied classes are skipped
    for k in 0..10u32 {
        images.push(ImageRecord {
            id: format!("gm{k}"),
            path: PathBuf::from("g.jpg"),
            width: 64,
            height: 64,
            annotations: vec![
                annotation(64, 64, [4.0, 4.0, 40.0, 40.0], 200 + k),
                annotation(64, 64, [20.0, 20.0, 60.0, 60.0], 201 + k),
            ],
        });
    }
    for c in 225..230u32 {
        scores.push(json!({ "class_id": c, "score": 99.0 }));
    }
    write_records(&root.join("gallery_images.jsonl"), &images);
    write_records(&root.join("gallery_sketches.jsonl"), &sketches);
    write_records(&root.join("class_map.jsonl"), &scores);
}

fn write_detect_score_inputs(root: &Path, images: &[ImageRecord], rng: &mut ChaCha8Rng) {
    let mut samples = Vec::new();
    let mut preds = Vec::new();
    for (k, img) in images.iter().take(24).enumerate() {
        let class_id = img.annotations[0].class_id;
        let gts: Vec<BoundingBox> = img.boxes_of(class_id).map(|a| a.bbox).collect();
        let id = format!("det-{k:03}");
        samples.push(InstructionSample {
            sample_id: id.clone(),
            task: TaskKind::Detect,
            image_id: img.id.clone(),
            sketch_id: Some(format!("k{class_id}_0")),
            rounds: vec![Round { prompt: "BBOX <sketch>".into(), response: format_box_list(&gts, 2).unwrap() }],
            target_class: Some(class_id),
        });
        let text = match k % 4 {
            0 => format_box_list(&gts, 2).unwrap(),
            1 => {
                let shifted: Vec<BoundingBox> = gts
                    .iter()
                    .map(|b| {
                        let d = rng.gen_range(0.0..0.3) * b.width();
                        BoundingBox::new((b.x1 + d).min(0.99), b.y1, (b.x2 + d).min(1.0), b.y2).unwrap_or(*b)
                    })
                    .collect();
                format!("Found: {}", format_box_list(&shifted, 3).unwrap())
            }
            2 => "I cannot see it.".into(),
            _ => continue,
        };
        preds.push(PredictionRecord::text(id, text));
    }
    write_records(&root.join("det_samples.jsonl"), &samples);
    write_records(&root.join("det_predictions.jsonl"), &preds);
}

fn write_vqa_score_inputs(root: &Path) {
    let mut samples = Vec::new();
    let mut preds = Vec::new();
    for k in 0..10u32 {
        let id = format!("vqa-{k:03}");
        let with_sketch = k % 2 == 0;
        samples.push(InstructionSample {
            sample_id: id.clone(),
            task: TaskKind::Vqa,
            image_id: format!("m{k}"),
            sketch_id: with_sketch.then(|| format!("k{}_0", k % 6)),
            rounds: vec![Round {
                prompt: if with_sketch { "VQA <sketch> What is here?".into() } else { "VQA What is here?".into() },
                response: "Something.".into(),
            }],
            target_class: with_sketch.then_some(k % 6),
        });
        let text = if k == 3 { "   " } else { "A thing." };
        preds.push(PredictionRecord::text(id, text));
    }
    write_records(&root.join("vqa_samples.jsonl"), &samples);
    write_records(&root.join("vqa_predictions.jsonl"), &preds);
}

/// A 20-class gallery with five photos and five sketches per class, and two
/// scorers: a perfect one, and one that ranks only three of the five
/// same-class photos above the rest.
fn write_sbir_score_inputs(root: &Path) -> GallerySpec {
    let classes: Vec<u32> = (0..SBIR_CLASSES).map(|i| 100 + 7 * i).collect();
    let items = |p: &str| -> Vec<LabeledItem> {
        classes.iter().flat_map(|&c| (0..5).map(move |k| LabeledItem { id: format!("{p}{c}_{k}"), class_id: c })).collect()
    };
    let spec = GallerySpec { classes: classes.clone(), gallery: items("g"), queries: items("q") };
    let entry = |q: &LabeledItem, g: &LabeledItem, p: f64| {
        json!({ "query_id": q.id, "gallery_id": g.id, "yes_logprob": p.ln(), "no_logprob": (1.0 - p).ln() })
    };
    let mut perfect = Vec::new();
    let mut partial = Vec::new();
    for q in &spec.queries {
        for (gi, g) in spec.gallery.iter().enumerate() {
            let same = q.class_id == g.class_id;
            perfect.push(entry(q, g, if same { 0.95 } else { 0.05 }));
            let p = match (same, gi % 5 < 3) {
                (true, true) => 0.9,
                (true, false) => 0.1,
                (false, _) => 0.5,
            };
            partial.push(entry(q, g, p));
        }
    }
    fs::write(root.join("sbir_gallery.json"), serde_json::to_vec_pretty(&spec).unwrap()).unwrap();
    write_records(&root.join("sbir_scores_perfect.jsonl"), &perfect);
    write_records(&root.join("sbir_scores_3of5.jsonl"), &partial);
    spec
}

fn write_report_inputs(root: &Path) {
    let row = |d: &str, s: &str, v: Option<f64>| {
        json!({ "image_dataset": d, "sketch_source": s, "metrics": [{ "name": "Acc", "value": v }], "n": 10 })
    };
    let a = json!({ "task": "Count", "model": "alpha", "rows": [
        row("PixMo", "Sketchy", Some(40.0)),
        row("PixMo", "QuickDraw", Some(50.0)),
        row("CountBench", "Sketchy", Some(30.0)),
    ]});
    let b = json!({ "task": "Count", "model": "beta", "rows": [
        row("PixMo", "Sketchy", Some(20.0)),
        row("PixMo", "QuickDraw", None),
    ]});
    fs::write(root.join("report_alpha.json"), serde_json::to_vec_pretty(&a).unwrap()).unwrap();
    fs::write(root.join("report_beta.json"), serde_json::to_vec_pretty(&b).unwrap()).unwrap();
}

const MAIN_CONFIG: &str = r#"seed = 7
out_dir = "out"

[sketch_gen]
images = "sg_images.jsonl"
masks_dir = "masks"

[sketch_gen.params]
canvas = 128

[curate_pretrain]
images = "curate_images.jsonl"
n_head = 20
n_tail = 60
tail_threshold = 5000
captions = "captions.jsonl"
class_names = "class_names.txt"
pools = "pools_fixture.jsonl"

[mix]
sketches = "supply.jsonl"
taxonomy = "taxonomy.txt"

[instr]
detect_images = "images.jsonl"
vqa_items = "vqa.jsonl"
sbir_images = "sbir_images.jsonl"
pools = "pools_fixture.jsonl"
class_names = "class_names.txt"
scale = 0.001

[gallery]
class_map = "class_map.jsonl"
images = "gallery_images.jsonl"
sketches = "gallery_sketches.jsonl"

[score]
model = "fixture"
task = "detect"
images = "images.jsonl"

[[score.entries]]
image_dataset = "Synthetic"
sketch_source = "Mixed"
samples = "det_samples.jsonl"
predictions = "det_predictions.jsonl"

[report]
inputs = ["report_alpha.json", "report_beta.json"]
name = "count_table"
"#;

const INSTR_SBIR_CONFIG: &str = r#"seed = 7

[instr]
detect_images = "images.jsonl"
vqa_items = "vqa.jsonl"
sbir_images = "sbir_images.jsonl"
pools = "pools_fixture.jsonl"

[instr.composition]
detect_n = 0
vqa_n = 0
count_n = 0
sbir_n = 25000
"#;

const SCORE_VQA_CONFIG: &str = r#"seed = 7

[score]
model = "fixture"
task = "vqa"

[[score.entries]]
image_dataset = "Synthetic"
sketch_source = "Mixed"
samples = "vqa_samples.jsonl"
predictions = "vqa_predictions.jsonl"
"#;

const SCORE_SBIR_CONFIG: &str = r#"seed = 7

[score]
model = "oracle"
task = "sbir"
ks = [1, 5, 10]

[[score.entries]]
image_dataset = "Gallery"
sketch_source = "perfect"
gallery = "sbir_gallery.json"
scores = "sbir_scores_perfect.jsonl"

[[score.entries]]
image_dataset = "Gallery"
sketch_source = "three-of-five"
gallery = "sbir_gallery.json"
scores = "sbir_scores_3of5.jsonl"
"#;

const REPORT_CONFIG: &str = r#"[report]
inputs = ["report_alpha.json", "report_beta.json"]
"#;

/// Metric value named `name` in row `row` of a score report.
pub fn metric(report: &Value, row: usize, name: &str) -> Option<f64> {
    report["rows"][row]["metrics"]
        .as_array()
        .unwrap()
        .iter()
        .find(|m| m["name"] == name)
        .and_then(|m| m["value"].as_f64())
}
