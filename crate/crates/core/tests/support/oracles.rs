//! Brute-force reference implementations of the detection metrics and a
//! generator of small random detection instances.
#![allow(dead_code)]

use rand::Rng;
use sketchforge_core::datamodel::BoundingBox;
use sketchforge_core::evalmetrics::{iou, DetCase, GtBox, Stratum};

/// Greedy matching by repeatedly taking the best remaining pair.
pub fn greedy_pairs(preds: &[BoundingBox], gts: &[BoundingBox], t: f64) -> Vec<(usize, usize)> {
    let mut pu = vec![false; preds.len()];
    let mut gu = vec![false; gts.len()];
    let mut out = Vec::new();
    loop {
        let mut best: Option<(usize, usize, f64)> = None;
        for p in 0..preds.len() {
            for g in 0..gts.len() {
                if pu[p] || gu[g] {
                    continue;
                }
                let v = iou(&preds[p], &gts[g]);
                if v < t || v <= 0.0 {
                    continue;
                }
                // Strictly greater keeps the earliest (lowest pred, then gt) on ties.
                if best.is_none_or(|b| v > b.2) {
                    best = Some((p, g, v));
                }
            }
        }
        match best {
            Some((p, g, _)) => {
                pu[p] = true;
                gu[g] = true;
                out.push((p, g));
            }
            None => return out,
        }
    }
}

/// Largest one-to-one matching with every pair at or above `t`, by
/// enumerating assignments.
pub fn max_matching(preds: &[BoundingBox], gts: &[BoundingBox], t: f64) -> usize {
    fn go(p: usize, preds: &[BoundingBox], gts: &[BoundingBox], used: &mut Vec<bool>, t: f64) -> usize {
        if p == preds.len() {
            return 0;
        }
        let mut best = go(p + 1, preds, gts, used, t);
        for g in 0..gts.len() {
            let v = iou(&preds[p], &gts[g]);
            if !used[g] && v >= t && v > 0.0 {
                used[g] = true;
                best = best.max(1 + go(p + 1, preds, gts, used, t));
                used[g] = false;
            }
        }
        best
    }
    go(0, preds, gts, &mut vec![false; gts.len()], t)
}

/// Micro-averaged GT recall per stratum, in percent, averaged over thresholds.
pub fn accuracy(cases: &[DetCase], thresholds: &[f64], stratum: Stratum) -> Option<f64> {
    let mut per_t = Vec::new();
    for &t in thresholds {
        let (mut hit, mut total) = (0usize, 0usize);
        for c in cases {
            let gts: Vec<BoundingBox> = c.gts.iter().map(|g| g.bbox).collect();
            let pairs = greedy_pairs(&c.preds, &gts, t);
            for (g, gt) in c.gts.iter().enumerate() {
                if stratum.contains(gt.area_px) {
                    total += 1;
                    hit += pairs.iter().any(|&(_, pg)| pg == g) as usize;
                }
            }
        }
        if total == 0 {
            return None;
        }
        per_t.push(100.0 * hit as f64 / total as f64);
    }
    Some(per_t.iter().sum::<f64>() / per_t.len() as f64)
}

fn score(c: &DetCase, j: usize) -> f64 {
    match &c.scores {
        Some(s) if s.len() == c.preds.len() => s[j],
        _ => 1.0 / (j as f64 + 1.0),
    }
}

/// Outcome of a prediction: `Some(true)` true positive, `Some(false)` false
/// positive, `None` ignored.
fn replay(c: &DetCase, kept: &[usize], t: f64, stratum: Stratum) -> Vec<Option<bool>> {
    let ignored: Vec<bool> = c.gts.iter().map(|g| !stratum.contains(g.area_px)).collect();
    let mut used = vec![false; c.gts.len()];
    let mut out = Vec::new();
    for &j in kept {
        let mut cands: Vec<(bool, f64, usize)> = Vec::new();
        for (g, gt) in c.gts.iter().enumerate() {
            let v = iou(&c.preds[j], &gt.bbox);
            if !used[g] && v >= t && v > 0.0 {
                cands.push((ignored[g], v, g));
            }
        }
        // Counted before ignored, then higher IoU, then lower index.
        cands.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.partial_cmp(&a.1).unwrap()).then(a.2.cmp(&b.2)));
        out.push(match cands.first() {
            Some(&(ign, _, g)) => {
                used[g] = true;
                if ign { None } else { Some(true) }
            }
            None => {
                let area = c.preds[j].area() * c.width as f64 * c.height as f64;
                if stratum.contains(area) { Some(false) } else { None }
            }
        });
    }
    out
}

/// AP of one class: every prefix of the global ranking is re-matched from
/// scratch and the interpolated precision is the best precision among
/// prefixes reaching each recall level.
fn class_ap(cases: &[&DetCase], t: f64, stratum: Stratum) -> Option<f64> {
    let n_gt: usize = cases.iter().flat_map(|c| &c.gts).filter(|g| stratum.contains(g.area_px)).count();
    if n_gt == 0 {
        return None;
    }
    let mut ranking: Vec<(usize, usize)> = Vec::new();
    for (ci, c) in cases.iter().enumerate() {
        for j in 0..c.preds.len() {
            ranking.push((ci, j));
        }
    }
    ranking.sort_by(|a, b| {
        score(cases[b.0], b.1)
            .partial_cmp(&score(cases[a.0], a.1))
            .unwrap()
            .then(a.0.cmp(&b.0))
            .then(a.1.cmp(&b.1))
    });
    let mut points: Vec<(f64, f64)> = Vec::new();
    for k in 1..=ranking.len() {
        let (mut tp, mut fp) = (0usize, 0usize);
        for (ci, c) in cases.iter().enumerate() {
            let kept: Vec<usize> = ranking[..k].iter().filter(|r| r.0 == ci).map(|r| r.1).collect();
            for o in replay(c, &kept, t, stratum) {
                match o {
                    Some(true) => tp += 1,
                    Some(false) => fp += 1,
                    None => {}
                }
            }
        }
        if tp + fp > 0 {
            points.push((tp as f64 / n_gt as f64, tp as f64 / (tp + fp) as f64));
        }
    }
    let mut sum = 0.0;
    for i in 0..101 {
        let r = i as f64 / 100.0;
        sum += points.iter().filter(|p| p.0 >= r).map(|p| p.1).fold(0.0, f64::max);
    }
    Some(sum / 101.0)
}

/// Class-averaged AP per stratum, in percent, averaged over thresholds.
pub fn mean_ap(cases: &[DetCase], thresholds: &[f64], stratum: Stratum) -> Option<f64> {
    let mut classes: Vec<u32> = cases.iter().map(|c| c.class_id).collect();
    classes.sort_unstable();
    classes.dedup();
    let mut per_t = Vec::new();
    for &t in thresholds {
        let aps: Vec<f64> = classes
            .iter()
            .filter_map(|cl| {
                let group: Vec<&DetCase> = cases.iter().filter(|c| c.class_id == *cl).collect();
                class_ap(&group, t, stratum)
            })
            .collect();
        if aps.is_empty() {
            return None;
        }
        per_t.push(100.0 * aps.iter().sum::<f64>() / aps.len() as f64);
    }
    Some(per_t.iter().sum::<f64>() / per_t.len() as f64)
}

fn random_box<R: Rng>(rng: &mut R) -> BoundingBox {
    let x = rng.gen_range(0.0..0.7);
    let y = rng.gen_range(0.0..0.7);
    let w = rng.gen_range(0.02..0.3);
    let h = rng.gen_range(0.02..0.3);
    BoundingBox::new(x, y, x + w, y + h).unwrap()
}

fn jitter<R: Rng>(rng: &mut R, b: &BoundingBox) -> BoundingBox {
    let s = 0.25 * b.width().min(b.height());
    let mut c = b.coords();
    for v in &mut c {
        *v = (*v + rng.gen_range(-s..=s)).clamp(0.0, 1.0);
    }
    BoundingBox::new(c[0].min(c[2]), c[1].min(c[3]), c[0].max(c[2]) + 1e-3, c[1].max(c[3]) + 1e-3)
        .unwrap_or(*b)
}

/// A split of one to three cases with at most four predictions and four
/// ground truths each. Image sizes span all three size strata.
pub fn random_instance<R: Rng>(rng: &mut R) -> Vec<DetCase> {
    let n_cases = rng.gen_range(1..=3);
    (0..n_cases)
        .map(|_| {
            let side = [40u32, 120, 300, 640][rng.gen_range(0..4)];
            let (width, height) = (side, rng.gen_range(side / 2..=side));
            let gts: Vec<GtBox> = (0..rng.gen_range(0..=4))
                .map(|_| {
                    let bbox = random_box(rng);
                    GtBox { bbox, area_px: bbox.area() * width as f64 * height as f64 }
                })
                .collect();
            let preds: Vec<BoundingBox> = (0..rng.gen_range(0..=4))
                .map(|_| match gts.len() {
                    n if n > 0 && rng.gen_bool(0.4) => gts[rng.gen_range(0..n)].bbox,
                    n if n > 0 && rng.gen_bool(0.6) => {
                        let src = gts[rng.gen_range(0..n)].bbox;
                        jitter(rng, &src)
                    }
                    _ => random_box(rng),
                })
                .collect();
            let scored = rng.gen_bool(0.3);
            let scores = scored.then(|| preds.iter().map(|_| (rng.gen_range(0..4) as f64) / 4.0).collect());
            DetCase { class_id: rng.gen_range(0..3), width, height, gts, preds, scores }
        })
        .collect()
}
