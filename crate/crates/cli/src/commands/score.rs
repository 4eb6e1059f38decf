use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use serde_json::json;
use sketchforge_core::datamodel::{ImageRecord, InstructionSample, PredictionRecord, TaskKind};
use sketchforge_core::evalmetrics::{
    detection_accuracy, detection_cases, emit_report, iou_thresholds, mean_average_precision, score_counting,
    score_sbir, vqa_conformance, GallerySpec, Metric, MetricReport, ReportRow, ScoreEntry,
};

use super::{read_images, read_records, section, Ctx, Outcome};
use crate::config::{ScoreInput, ScoreSection};

fn metrics(named: impl IntoIterator<Item = (String, Option<f64>)>) -> Vec<Metric> {
    named.into_iter().map(|(name, value)| Metric { name, value }).collect()
}

fn required(ctx: &mut Ctx, p: &Option<PathBuf>, what: &str, entry: &ScoreInput) -> anyhow::Result<PathBuf> {
    let p = p
        .as_ref()
        .ok_or_else(|| anyhow!("score entry {}/{} needs `{what}`", entry.image_dataset, entry.sketch_source))?;
    ctx.input(p)
}

fn predictions(path: &Path) -> anyhow::Result<BTreeMap<String, PredictionRecord>> {
    let mut out = BTreeMap::new();
    for p in read_records::<PredictionRecord>(path)? {
        p.validate().with_context(|| format!("{}: prediction {}", path.display(), p.sample_id))?;
        if out.contains_key(&p.sample_id) {
            bail!("{}: duplicate prediction for {}", path.display(), p.sample_id);
        }
        out.insert(p.sample_id.clone(), p);
    }
    Ok(out)
}

fn score_entry(ctx: &mut Ctx, sec: &ScoreSection, task: TaskKind, entry: &ScoreInput) -> anyhow::Result<ReportRow> {
    let mut row = ReportRow {
        image_dataset: entry.image_dataset.clone(),
        sketch_source: entry.sketch_source.clone(),
        metrics: Vec::new(),
        n: 0,
        unparseable: 0,
        missing: 0,
    };
    if task == TaskKind::Sbir {
        let gallery_path = required(ctx, &entry.gallery, "gallery", entry)?;
        let scores_path = required(ctx, &entry.scores, "scores", entry)?;
        let spec: GallerySpec = serde_json::from_str(&std::fs::read_to_string(&gallery_path)?)
            .with_context(|| format!("parsing {}", gallery_path.display()))?;
        let entries: Vec<ScoreEntry> = read_records(&scores_path)?;
        row.unparseable = entries.iter().filter(|e| e.yes_probability().is_err()).count();
        let acc = score_sbir(&spec, &entries, &sec.ks)?;
        row.metrics = metrics(acc.into_iter().map(|(k, v)| (format!("Acc@{k}"), Some(v))));
        row.n = spec.queries.len();
        return Ok(row);
    }
    let samples_path = required(ctx, &entry.samples, "samples", entry)?;
    let preds_path = required(ctx, &entry.predictions, "predictions", entry)?;
    let samples: Vec<InstructionSample> = read_records(&samples_path)?;
    let preds = predictions(&preds_path)?;
    match task {
        TaskKind::Count => {
            let s = score_counting(&samples, &preds)?;
            row.metrics = metrics([("Acc".to_string(), s.accuracy)]);
            (row.n, row.unparseable, row.missing) = (s.n, s.unparseable, s.missing);
        }
        TaskKind::Detect => {
            let images_path = match entry.images.as_ref().or(sec.images.as_ref()) {
                Some(p) => ctx.input(p)?,
                None => bail!("detection scoring needs an image manifest (`images`)"),
            };
            let images: BTreeMap<String, ImageRecord> =
                read_images(&images_path)?.into_iter().map(|i| (i.id.clone(), i)).collect();
            let input = detection_cases(&samples, &images, &preds)?;
            let t = iou_thresholds();
            let acc = detection_accuracy(&input.cases, &t, sec.averaging)?;
            let map = mean_average_precision(&input.cases, &t)?;
            row.metrics = metrics(acc.named("Acc").into_iter().chain(map.named("mAP")));
            (row.n, row.unparseable, row.missing) = (input.cases.len(), input.unparseable, input.missing);
        }
        TaskKind::Vqa => {
            let c = vqa_conformance(&samples, &preds);
            row.metrics = metrics([("Conformance".to_string(), c.conformance)]);
            (row.n, row.unparseable, row.missing) = (c.n, c.malformed + c.empty, c.missing);
        }
        TaskKind::Sbir => unreachable!("handled above"),
    }
    Ok(row)
}

/// Scores prediction files for one task into a metric report.
pub fn score(ctx: &mut Ctx, task_flag: Option<TaskKind>) -> anyhow::Result<Outcome> {
    let sec = section(&ctx.cfg.config.score, "score")?.clone();
    let task = match (task_flag, &sec.task) {
        (Some(t), _) => t,
        (None, Some(s)) => s.parse()?,
        (None, None) => bail!("no task: pass --task or set [score] task"),
    };
    if sec.entries.is_empty() {
        bail!("[score] has no entries");
    }
    let mut rows = Vec::new();
    for entry in &sec.entries {
        rows.push(score_entry(ctx, &sec, task, entry)?);
    }
    let report = MetricReport { task, model: sec.model.clone(), rows };
    let rendered = emit_report(std::slice::from_ref(&report))?;
    let stem = format!("score_{}", task.descriptor().to_ascii_lowercase());
    ctx.write_json(&format!("{stem}.json"), &report)?;
    ctx.out.write(&format!("{stem}.csv"), rendered.csv.as_bytes())?;
    ctx.out.write(&format!("{stem}.md"), rendered.markdown.as_bytes())?;
    let cells: Vec<_> = report
        .rows
        .iter()
        .map(|r| json!({ "image_dataset": r.image_dataset, "sketch_source": r.sketch_source, "metrics": r.metrics, "n": r.n, "unparseable": r.unparseable, "missing": r.missing }))
        .collect();
    Ok(Outcome {
        summary: json!({ "task": task, "rows": cells }),
        ..Outcome::default()
    })
}
