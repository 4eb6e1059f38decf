use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::datamodel::BoundingBox;

/// Intersection over union of two boxes.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn iou_thresholds() -> Vec<f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    /// (prediction index, ground-truth index, iou), in acceptance order.
    pub pairs: Vec<(usize, usize, f64)>,
    pub unmatched_preds: Vec<usize>,
    pub unmatched_gts: Vec<usize>,
}

impl MatchResult {
    pub fn matched_gt(&self) -> Vec<bool> {
        let n = self.pairs.len() + self.unmatched_gts.len();
        let mut out = vec![false; n];
        for &(_, g, _) in &self.pairs {
            out[g] = true;
        }
        out
    }
}

/// One-to-one matching that accepts candidate pairs with `iou >= t` in
/// descending IoU order. Ties go to the lower prediction index, then the lower
/// ground-truth index.
pub fn greedy_match(preds: &[BoundingBox], gts: &[BoundingBox], t: f64) -> MatchResult {
    let mut cands: Vec<(usize, usize, f64)> = Vec::new();
    for (p, pb) in preds.iter().enumerate() {
        for (g, gb) in gts.iter().enumerate() {
            let v = iou(pb, gb);
            if v >= t && v > 0.0 {
                cands.push((p, g, v));
            }
        }
    }
    cands.sort_by(|a, b| {
        b.2.partial_cmp(&a.2)
            .unwrap_or(Ordering::Equal)
            .then(a.0.cmp(&b.0))
            .then(a.1.cmp(&b.1))
    });
    let mut pred_used = vec![false; preds.len()];
    let mut gt_used = vec![false; gts.len()];
    let mut pairs = Vec::new();
    for (p, g, v) in cands {
        if !pred_used[p] && !gt_used[g] {
            pred_used[p] = true;
            gt_used[g] = true;
            pairs.push((p, g, v));
        }
    }
    MatchResult {
        pairs,
        unmatched_preds: (0..preds.len()).filter(|&p| !pred_used[p]).collect(),
        unmatched_gts: (0..gts.len()).filter(|&g| !gt_used[g]).collect(),
    }
}
