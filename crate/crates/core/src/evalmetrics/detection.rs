use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::matching::{greedy_match, iou};
use crate::datamodel::{parse_box_list, BoundingBox, ImageRecord, InstructionSample, PredictionRecord, TaskKind};
use crate::error::{Error, Result};

/// Upper bound of the small stratum, in square pixels.
pub const SMALL_AREA: f64 = 32.0 * 32.0;
/// Upper bound (inclusive) of the medium stratum, in square pixels.
pub const MEDIUM_AREA: f64 = 96.0 * 96.0;

/// Size strata by ground-truth pixel area.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stratum {
    All,
    Small,
    Medium,
    Large,
}

impl Stratum {
    pub const ALL: [Stratum; 4] = [Stratum::All, Stratum::Small, Stratum::Medium, Stratum::Large];

    pub fn contains(&self, area_px: f64) -> bool {
        match self {
            Stratum::All => true,
            Stratum::Small => area_px < SMALL_AREA,
            Stratum::Medium => (SMALL_AREA..=MEDIUM_AREA).contains(&area_px),
            Stratum::Large => area_px > MEDIUM_AREA,
        }
    }

    fn suffix(&self) -> &'static str {
        match self {
            Stratum::All => "",
            Stratum::Small => "_S",
            Stratum::Medium => "_M",
            Stratum::Large => "_L",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GtBox {
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub area_px: f64,
}

/// Predictions and ground truth of one (image, class) sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetCase {
    pub class_id: u32,
    pub width: u32,
    pub height: u32,
    pub gts: Vec<GtBox>,
    pub preds: Vec<BoundingBox>,
    /// Explicit confidences aligned with `preds`. Without them the j-th
    /// emitted box gets pseudo-confidence 1/(j+1).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<f64>>,
}

impl DetCase {
    pub fn score(&self, j: usize) -> f64 {
        match &self.scores {
            Some(s) if s.len() == self.preds.len() => s[j],
            _ => 1.0 / (j as f64 + 1.0),
        }
    }

    pub fn pred_area_px(&self, j: usize) -> f64 {
        self.preds[j].area() * self.width as f64 * self.height as f64
    }

    fn gt_boxes(&self) -> Vec<BoundingBox> {
        self.gts.iter().map(|g| g.bbox).collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    /// Matched ground truth over all ground truth of the split.
    #[default]
    Micro,
    /// Mean of per-sample recall over samples with ground truth.
    Macro,
}

/// Scores in percent. A stratum without ground truth is `None`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectionScores {
    /// Mean over all thresholds.
    pub mean: BTreeMap<Stratum, Option<f64>>,
    /// Per threshold, unstratified.
    pub at: Vec<(f64, Option<f64>)>,
}

impl DetectionScores {
    pub fn overall(&self) -> Option<f64> {
        self.mean.get(&Stratum::All).copied().flatten()
    }

    pub fn at_threshold(&self, t: f64) -> Option<f64> {
        self.at.iter().find(|(x, _)| (x - t).abs() < 1e-12).and_then(|(_, v)| *v)
    }

    /// Named columns: `{prefix}`, `{prefix}@0.5`, `{prefix}_S`, `{prefix}_M`, `{prefix}_L`.
    pub fn named(&self, prefix: &str) -> Vec<(String, Option<f64>)> {
        let mut out = vec![(prefix.to_string(), self.overall())];
        if let Some(v) = self.at.iter().find(|(t, _)| (t - 0.5).abs() < 1e-12) {
            out.push((format!("{prefix}@0.5"), v.1));
        }
        for s in [Stratum::Small, Stratum::Medium, Stratum::Large] {
            out.push((format!("{prefix}{}", s.suffix()), self.mean.get(&s).copied().flatten()));
        }
        out
    }
}

fn check_thresholds(thresholds: &[f64]) -> Result<()> {
    if thresholds.is_empty() || thresholds.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) {
        return Err(Error::InvalidParameter(format!(
            "IoU thresholds must be non-empty and in (0, 1]: {thresholds:?}"
        )));
    }
    Ok(())
}

fn mean_defined(values: &[Option<f64>]) -> Option<f64> {
    if values.iter().any(Option::is_none) || values.is_empty() {
        return None;
    }
    Some(values.iter().flatten().sum::<f64>() / values.len() as f64)
}

/// Ground-truth recall under greedy one-to-one matching, averaged over the
/// thresholds. Matching always uses every box of a sample; strata restrict
/// which ground truth (and which of its matches) are counted.
pub fn detection_accuracy(cases: &[DetCase], thresholds: &[f64], averaging: Averaging) -> Result<DetectionScores> {
    check_thresholds(thresholds)?;
    let mut per_t: BTreeMap<Stratum, Vec<Option<f64>>> = BTreeMap::new();
    let mut at = Vec::with_capacity(thresholds.len());
    for &t in thresholds {
        let mut matched = [0usize; 4];
        let mut total = [0usize; 4];
        let mut recall_sum = [0.0f64; 4];
        let mut with_gt = [0usize; 4];
        for case in cases {
            let m = greedy_match(&case.preds, &case.gt_boxes(), t).matched_gt();
            for (si, s) in Stratum::ALL.iter().enumerate() {
                let (mut hit, mut n) = (0, 0);
                for (g, gt) in case.gts.iter().enumerate() {
                    if s.contains(gt.area_px) {
                        n += 1;
                        hit += m[g] as usize;
                    }
                }
                matched[si] += hit;
                total[si] += n;
                if n > 0 {
                    with_gt[si] += 1;
                    recall_sum[si] += hit as f64 / n as f64;
                }
            }
        }
        for (si, s) in Stratum::ALL.iter().enumerate() {
            let v = match averaging {
                _ if total[si] == 0 => None,
                Averaging::Micro => Some(100.0 * matched[si] as f64 / total[si] as f64),
                Averaging::Macro => Some(100.0 * recall_sum[si] / with_gt[si] as f64),
            };
            per_t.entry(*s).or_default().push(v);
            if *s == Stratum::All {
                at.push((t, v));
            }
        }
    }
    let mean = per_t.iter().map(|(s, v)| (*s, mean_defined(v))).collect();
    Ok(DetectionScores { mean, at })
}

/// Number of points on the interpolated precision/recall grid.
pub const RECALL_POINTS: usize = 101;

/// Score-ordered matching of one case for one class, threshold and stratum.
/// Returns (score, true positive) for every prediction that is not ignored,
/// in the case's score order, plus the number of counted ground truths.
fn score_case(case: &DetCase, t: f64, stratum: Stratum) -> (Vec<(f64, bool)>, usize) {
    let ignore: Vec<bool> = case.gts.iter().map(|g| !stratum.contains(g.area_px)).collect();
    let counted = ignore.iter().filter(|i| !**i).count();
    let mut order: Vec<usize> = (0..case.preds.len()).collect();
    order.sort_by(|&a, &b| case.score(b).partial_cmp(&case.score(a)).unwrap_or(Ordering::Equal));
    let mut used = vec![false; case.gts.len()];
    let mut out = Vec::with_capacity(order.len());
    for j in order {
        // Best free ground truth at or above t; counted boxes win over
        // ignored ones, then higher IoU, then lower index.
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in case.gts.iter().enumerate() {
            if used[g] {
                continue;
            }
            let v = iou(&case.preds[j], &gt.bbox);
            if v < t || v <= 0.0 {
                continue;
            }
            let better = match best {
                None => true,
                Some((bg, bv)) => (ignore[bg], -bv) > (ignore[g], -v),
            };
            if better {
                best = Some((g, v));
            }
        }
        match best {
            Some((g, _)) => {
                used[g] = true;
                if !ignore[g] {
                    out.push((case.score(j), true));
                }
            }
            None => {
                if stratum.contains(case.pred_area_px(j)) {
                    out.push((case.score(j), false));
                }
            }
        }
    }
    (out, counted)
}

/// Interpolated average precision from (score, tp) detections and the number
/// of ground truths. `None` when there is no ground truth.
pub fn average_precision(mut dets: Vec<(f64, bool)>, n_gt: usize) -> Option<f64> {
    if n_gt == 0 {
        return None;
    }
    dets.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal));
    let mut recall = Vec::with_capacity(dets.len());
    let mut precision = Vec::with_capacity(dets.len());
    let (mut tp, mut fp) = (0usize, 0usize);
    for (_, hit) in dets {
        if hit {
            tp += 1;
        } else {
            fp += 1;
        }
        recall.push(tp as f64 / n_gt as f64);
        precision.push(tp as f64 / (tp + fp) as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut sum = 0.0;
    for r in 0..RECALL_POINTS {
        let r = r as f64 / (RECALL_POINTS - 1) as f64;
        let idx = recall.partition_point(|&x| x < r);
        if idx < precision.len() {
            sum += precision[idx];
        }
    }
    Some(sum / RECALL_POINTS as f64)
}

/// Per-class interpolated AP averaged over classes with ground truth, then
/// over thresholds. Predictions are ranked by explicit confidence or by
/// emission order; equal scores keep sample order.
pub fn mean_average_precision(cases: &[DetCase], thresholds: &[f64]) -> Result<DetectionScores> {
    check_thresholds(thresholds)?;
    let mut by_class: BTreeMap<u32, Vec<&DetCase>> = BTreeMap::new();
    for c in cases {
        by_class.entry(c.class_id).or_default().push(c);
    }
    let mut per_t: BTreeMap<Stratum, Vec<Option<f64>>> = BTreeMap::new();
    let mut at = Vec::with_capacity(thresholds.len());
    for &t in thresholds {
        for s in Stratum::ALL {
            let mut aps = Vec::new();
            for group in by_class.values() {
                let mut dets = Vec::new();
                let mut n_gt = 0;
                for case in group {
                    let (d, n) = score_case(case, t, s);
                    dets.extend(d);
                    n_gt += n;
                }
                if let Some(ap) = average_precision(dets, n_gt) {
                    aps.push(ap);
                }
            }
            let v = (!aps.is_empty()).then(|| 100.0 * aps.iter().sum::<f64>() / aps.len() as f64);
            per_t.entry(s).or_default().push(v);
            if s == Stratum::All {
                at.push((t, v));
            }
        }
    }
    let mean = per_t.iter().map(|(s, v)| (*s, mean_defined(v))).collect();
    Ok(DetectionScores { mean, at })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectionInput {
    pub cases: Vec<DetCase>,
    /// Predictions from which no box could be read.
    pub unparseable: usize,
    /// Samples without a prediction record; scored as empty.
    pub missing: usize,
}

/// Joins detection samples with predictions. Ground truth is every box of the
/// sample's class in the image manifest.
pub fn detection_cases(
    samples: &[InstructionSample],
    images: &BTreeMap<String, ImageRecord>,
    preds: &BTreeMap<String, PredictionRecord>,
) -> Result<DetectionInput> {
    let mut input = DetectionInput::default();
    for s in samples.iter().filter(|s| s.task == TaskKind::Detect) {
        let image = images
            .get(&s.image_id)
            .ok_or_else(|| Error::InvalidRecord(format!("{}: unknown image {}", s.sample_id, s.image_id)))?;
        let class_id = s
            .target_class
            .ok_or_else(|| Error::InvalidRecord(format!("{}: detection sample without class", s.sample_id)))?;
        let gts = image
            .boxes_of(class_id)
            .map(|a| GtBox { bbox: a.bbox, area_px: a.area_px })
            .collect();
        let (boxes, scores) = match preds.get(&s.sample_id) {
            None => {
                input.missing += 1;
                (Vec::new(), None)
            }
            Some(p) => {
                let (boxes, dropped) = parse_box_list(&p.raw_text).resolve(image.width, image.height);
                if boxes.is_empty() {
                    input.unparseable += 1;
                }
                let scores = p.box_scores.clone().filter(|v| dropped == 0 && v.len() == boxes.len());
                (boxes, scores)
            }
        };
        input.cases.push(DetCase {
            class_id,
            width: image.width,
            height: image.height,
            gts,
            preds: boxes,
            scores,
        });
    }
    Ok(input)
}
