use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::generators::{
    gen_counting_sample, gen_detection_sample, gen_sbir_pairs, gen_vqa_sample, QaItem, SkippedImage,
};
use super::prompts::PromptPool;
use super::SketchPool;
use crate::curation::Shortfall;
use crate::datamodel::{ImageRecord, InstructionSample, SketchSource, TaskKind};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompositionSpec {
    pub detect_n: usize,
    pub vqa_n: usize,
    pub count_n: usize,
    pub sbir_n: usize,
    pub vqa_sketch_fraction: f64,
    pub sbir_positive_fraction: f64,
}

impl Default for CompositionSpec {
    fn default() -> Self {
        Self {
            detect_n: 110_000,
            vqa_n: 50_000,
            count_n: 30_000,
            sbir_n: 25_000,
            vqa_sketch_fraction: 0.5,
            sbir_positive_fraction: 0.5,
        }
    }
}

impl CompositionSpec {
    /// Default composition with every size multiplied by `factor` and rounded.
    pub fn scaled(factor: f64) -> Self {
        let d = Self::default();
        let s = |n: usize| (n as f64 * factor).round() as usize;
        Self {
            detect_n: s(d.detect_n),
            vqa_n: s(d.vqa_n),
            count_n: s(d.count_n),
            sbir_n: s(d.sbir_n),
            ..d
        }
    }

    pub fn requested(&self, task: TaskKind) -> usize {
        match task {
            TaskKind::Count => self.count_n,
            TaskKind::Detect => self.detect_n,
            TaskKind::Vqa => self.vqa_n,
            TaskKind::Sbir => self.sbir_n,
        }
    }

    pub fn total(&self) -> usize {
        TaskKind::ALL.iter().map(|t| self.requested(*t)).sum()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, f) in [
            ("vqa_sketch_fraction", self.vqa_sketch_fraction),
            ("sbir_positive_fraction", self.sbir_positive_fraction),
        ] {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::InvalidParameter(format!("{name} = {f} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Raw material for the four subsets.
#[derive(Debug, Clone, Copy)]
pub struct CorpusSources<'a> {
    pub detect_images: &'a [ImageRecord],
    pub count_images: &'a [ImageRecord],
    /// Externally supplied single counts keyed by (image id, class id).
    pub count_truth: &'a BTreeMap<(String, u32), u64>,
    pub vqa_items: &'a [QaItem],
    /// Images the QA items refer to, used to pick a sketch class.
    pub vqa_images: &'a [ImageRecord],
    pub sbir_images: &'a [ImageRecord],
    pub sketch_pool: &'a SketchPool,
    pub prompts: &'a PromptPool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CompositionReport {
    pub requested: BTreeMap<TaskKind, usize>,
    pub realized: BTreeMap<TaskKind, usize>,
    pub per_source: BTreeMap<TaskKind, BTreeMap<SketchSource, usize>>,
    pub vqa_with_sketch: usize,
    pub vqa_without_sketch: usize,
    pub sbir_positive: usize,
    pub sbir_negative: usize,
    /// Candidate counts dropped per reason.
    pub skipped: BTreeMap<String, usize>,
    pub sbir_skipped_images: Vec<SkippedImage>,
    pub shortfalls: Vec<Shortfall>,
}

impl CompositionReport {
    /// One row per task: requested, realized and a column per sketch source.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("task,requested,realized");
        for s in SketchSource::ALL {
            out.push(',');
            out.push_str(s.as_str());
        }
        out.push('\n');
        for task in TaskKind::ALL {
            out.push_str(&format!(
                "{},{},{}",
                task.descriptor(),
                self.requested.get(&task).copied().unwrap_or(0),
                self.realized.get(&task).copied().unwrap_or(0)
            ));
            for s in SketchSource::ALL {
                let n = self.per_source.get(&task).and_then(|m| m.get(&s)).copied().unwrap_or(0);
                out.push_str(&format!(",{n}"));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub samples: Vec<InstructionSample>,
    pub report: CompositionReport,
}

fn skip(report: &mut CompositionReport, reason: &str, n: usize) {
    if n > 0 {
        *report.skipped.entry(reason.to_string()).or_default() += n;
    }
}

/// Runs `generate` over candidates in order until `n` succeed. Batches are
/// evaluated in parallel; each candidate's seed depends only on its position,
/// so the outcome is independent of the thread count. Errors count as skips.
fn fill_in_order<C, F>(candidates: &[C], n: usize, generate: F) -> (Vec<InstructionSample>, usize)
where
    C: Sync,
    F: Fn(usize, &C) -> Result<InstructionSample> + Sync,
{
    let mut out = Vec::with_capacity(n.min(candidates.len()));
    let mut failed = 0;
    let mut next = 0;
    while out.len() < n && next < candidates.len() {
        let end = (next + n - out.len()).min(candidates.len());
        let batch: Vec<Result<InstructionSample>> = (next..end)
            .into_par_iter()
            .map(|i| generate(i, &candidates[i]))
            .collect();
        for r in batch {
            match r {
                Ok(s) => out.push(s),
                Err(_) => failed += 1,
            }
        }
        next = end;
    }
    (out, failed)
}

fn pooled(pool: &SketchPool, class_id: u32) -> bool {
    pool.get(&class_id).is_some_and(|p| !p.is_empty())
}

fn image_class_pairs<'a>(
    images: &'a [ImageRecord],
    pool: &SketchPool,
    report: &mut CompositionReport,
    reason: &str,
) -> Vec<(&'a ImageRecord, u32)> {
    let mut pairs = Vec::new();
    let mut missing = 0;
    for image in images {
        for class_id in image.classes() {
            if pooled(pool, class_id) {
                pairs.push((image, class_id));
            } else {
                missing += 1;
            }
        }
    }
    skip(report, reason, missing);
    pairs
}

fn relabel(samples: &mut [InstructionSample], task: TaskKind) {
    let prefix = task.descriptor().to_ascii_lowercase();
    for (k, s) in samples.iter_mut().enumerate() {
        s.sample_id = format!("{prefix}-{:07}", k + 1);
    }
}

fn note_shortfall(report: &mut CompositionReport, stage: &str, requested: usize, realized: usize) {
    if realized < requested {
        report.shortfalls.push(Shortfall {
            stage: stage.to_string(),
            requested,
            realized,
        });
    }
}

/// Builds the mixed instruction corpus. Each subset is drawn from a seeded
/// permutation of its candidates; the concatenation is shuffled once at the
/// end. Shortfalls produce a partial subset and a report entry.
pub fn build_finetune_corpus(
    spec: &CompositionSpec,
    sources: &CorpusSources<'_>,
    seed_value: u64,
) -> Result<Corpus> {
    spec.validate()?;
    sources.prompts.validate()?;
    let pool = sources.sketch_pool;
    let prompts = sources.prompts;
    let mut report = CompositionReport::default();
    for task in TaskKind::ALL {
        report.requested.insert(task, spec.requested(task));
    }
    let sub_seed = |name: &str| seed::derive_seed(seed_value, &[seed::str_key(name)]);

    // Detection: one sample per unique (image, class) pair.
    let mut pairs = image_class_pairs(sources.detect_images, pool, &mut report, "detect: class without sketches");
    pairs.shuffle(&mut seed::rng(sub_seed("detect-order")));
    let s = sub_seed("detect");
    let (mut detect, failed) = fill_in_order(&pairs, spec.detect_n, |i, (img, c)| {
        gen_detection_sample("", img, *c, prompts, pool, seed::derive_seed(s, &[i as u64]))
    });
    skip(&mut report, "detect: generation failed", failed);
    relabel(&mut detect, TaskKind::Detect);
    note_shortfall(&mut report, "detect", spec.detect_n, detect.len());

    // Counting.
    let mut pairs = image_class_pairs(sources.count_images, pool, &mut report, "count: class without sketches");
    pairs.shuffle(&mut seed::rng(sub_seed("count-order")));
    let s = sub_seed("count");
    let truth = sources.count_truth;
    let (mut count, failed) = fill_in_order(&pairs, spec.count_n, |i, (img, c)| {
        let over = truth.get(&(img.id.clone(), *c)).copied();
        gen_counting_sample("", img, *c, over, prompts, pool, seed::derive_seed(s, &[i as u64]))
    });
    skip(&mut report, "count: generation failed", failed);
    relabel(&mut count, TaskKind::Count);
    note_shortfall(&mut report, "count", spec.count_n, count.len());

    // VQA: plan sketch attachment sequentially, then generate.
    let images: BTreeMap<&str, &ImageRecord> =
        sources.vqa_images.iter().map(|i| (i.id.as_str(), i)).collect();
    let mut items: Vec<&QaItem> = sources.vqa_items.iter().filter(|q| !q.rounds.is_empty()).collect();
    skip(&mut report, "vqa: empty rounds", sources.vqa_items.len() - items.len());
    let mut plan_rng = seed::rng(sub_seed("vqa-order"));
    items.shuffle(&mut plan_rng);
    let want_sketch = ((spec.vqa_n as f64) * spec.vqa_sketch_fraction).round() as usize;
    let want_plain = spec.vqa_n - want_sketch;
    let mut plan: Vec<(&QaItem, Option<u32>)> = Vec::with_capacity(items.len());
    let (mut with, mut without) = (0usize, 0usize);
    for item in items {
        if with + without == spec.vqa_n {
            break;
        }
        let class = item.class_id.filter(|c| pooled(pool, *c)).or_else(|| {
            let img = images.get(item.image_id.as_str())?;
            let cands: Vec<u32> = img.classes().into_iter().filter(|c| pooled(pool, *c)).collect();
            cands.choose(&mut plan_rng).copied()
        });
        let attach = match class {
            Some(_) if with < want_sketch && (without >= want_plain || plan_rng.gen_bool(0.5)) => true,
            _ if without < want_plain => false,
            Some(_) if with < want_sketch => true,
            _ => continue,
        };
        if attach {
            with += 1;
            plan.push((item, class));
        } else {
            without += 1;
            plan.push((item, None));
        }
    }
    let s = sub_seed("vqa");
    let (mut vqa, failed) = fill_in_order(&plan, plan.len(), |i, (item, class)| {
        gen_vqa_sample("", &item.image_id, &item.rounds, *class, prompts, pool, seed::derive_seed(s, &[i as u64]))
    });
    skip(&mut report, "vqa: generation failed", failed);
    relabel(&mut vqa, TaskKind::Vqa);
    report.vqa_with_sketch = vqa.iter().filter(|s| s.sketch_id.is_some()).count();
    report.vqa_without_sketch = vqa.len() - report.vqa_with_sketch;
    let (w, wo) = (report.vqa_with_sketch, report.vqa_without_sketch);
    note_shortfall(&mut report, "vqa-with-sketch", want_sketch, w);
    note_shortfall(&mut report, "vqa-without-sketch", want_plain, wo);

    // SBIR.
    let mut sbir = gen_sbir_pairs(
        sources.sbir_images,
        pool,
        spec.sbir_n,
        spec.sbir_positive_fraction,
        prompts,
        sub_seed("sbir"),
        "",
    )?;
    report.sbir_positive = sbir.positives();
    report.sbir_negative = sbir.negatives();
    report.shortfalls.append(&mut sbir.shortfalls);
    report.sbir_skipped_images = sbir.skipped;
    let mut sbir = sbir.samples;
    relabel(&mut sbir, TaskKind::Sbir);

    let source_of: BTreeMap<&str, SketchSource> = pool
        .values()
        .flatten()
        .map(|s| (s.id.as_str(), s.source))
        .collect();
    let mut samples = Vec::with_capacity(spec.total());
    for (task, subset) in [
        (TaskKind::Detect, detect),
        (TaskKind::Vqa, vqa),
        (TaskKind::Count, count),
        (TaskKind::Sbir, sbir),
    ] {
        report.realized.insert(task, subset.len());
        let per = report.per_source.entry(task).or_default();
        for s in &subset {
            if let Some(src) = s.sketch_id.as_deref().and_then(|id| source_of.get(id)) {
                *per.entry(*src).or_default() += 1;
            }
        }
        samples.extend(subset);
    }
    samples.shuffle(&mut seed::rng(sub_seed("final-shuffle")));
    Ok(Corpus { samples, report })
}
