use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::datamodel::{parse_yes_probability, ImageRecord, PredictionRecord, SketchRecord};
use crate::error::{Error, Result};
use crate::seed;

pub const GALLERY_CLASSES: usize = 20;
pub const PER_CLASS: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledItem {
    pub id: String,
    pub class_id: u32,
}

/// Retrieval benchmark: gallery photos ranked for each query sketch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GallerySpec {
    pub classes: Vec<u32>,
    pub gallery: Vec<LabeledItem>,
    pub queries: Vec<LabeledItem>,
}

impl GallerySpec {
    pub fn validate(&self) -> Result<()> {
        let classes: BTreeSet<u32> = self.classes.iter().copied().collect();
        if classes.len() != self.classes.len() {
            return Err(Error::InvalidRecord("duplicate gallery classes".into()));
        }
        for (what, items) in [("gallery", &self.gallery), ("queries", &self.queries)] {
            let ids: BTreeSet<&str> = items.iter().map(|i| i.id.as_str()).collect();
            if ids.len() != items.len() {
                return Err(Error::InvalidRecord(format!("duplicate ids in {what}")));
            }
            if let Some(i) = items.iter().find(|i| !classes.contains(&i.class_id)) {
                return Err(Error::InvalidRecord(format!("{what} item {} has foreign class {}", i.id, i.class_id)));
            }
        }
        Ok(())
    }

    pub fn matrix_size(&self) -> usize {
        self.queries.len() * self.gallery.len()
    }
}

/// Ranks `floor(i (C - 1) / (n - 1))` for i in 0..n.
pub fn evenly_spaced_ranks(c: usize, n: usize) -> Vec<usize> {
    if n == 1 {
        return vec![0];
    }
    (0..n).map(|i| i * (c - 1) / (n - 1)).collect()
}

/// Selects 20 classes at evenly spaced ranks of the detection-mAP ordering
/// and samples 5 single-class photos and 5 sketches for each.
pub fn build_sbir_gallery(
    class_map: &BTreeMap<u32, f64>,
    images: &[ImageRecord],
    sketches: &[SketchRecord],
    seed_value: u64,
) -> Result<GallerySpec> {
    let mut photos: BTreeMap<u32, Vec<&str>> = BTreeMap::new();
    for image in images {
        if let [c] = image.classes().as_slice() {
            photos.entry(*c).or_default().push(&image.id);
        }
    }
    let mut drawings: BTreeMap<u32, Vec<&str>> = BTreeMap::new();
    for s in sketches {
        drawings.entry(s.class_id).or_default().push(&s.id);
    }
    for list in photos.values_mut().chain(drawings.values_mut()) {
        list.sort_unstable();
        list.dedup();
    }
    let supply = |m: &BTreeMap<u32, Vec<&str>>, c: u32| m.get(&c).map_or(0, Vec::len);
    let mut eligible: Vec<(u32, f64)> = class_map
        .iter()
        .filter(|(c, v)| v.is_finite() && supply(&photos, **c) >= PER_CLASS && supply(&drawings, **c) >= PER_CLASS)
        .map(|(c, v)| (*c, *v))
        .collect();
    if eligible.len() < GALLERY_CLASSES {
        return Err(Error::InsufficientSupply(format!(
            "{} classes have a score, {PER_CLASS} single-class photos and {PER_CLASS} sketches; {GALLERY_CLASSES} needed",
            eligible.len()
        )));
    }
    eligible.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)));
    let classes: Vec<u32> = evenly_spaced_ranks(eligible.len(), GALLERY_CLASSES)
        .into_iter()
        .map(|r| eligible[r].0)
        .collect();
    let draw = |pool: &[&str], class_id: u32, salt: &str| -> Vec<LabeledItem> {
        let mut rng = seed::derived_rng(seed_value, &[seed::str_key(salt), class_id as u64]);
        let mut picked = index::sample(&mut rng, pool.len(), PER_CLASS).into_vec();
        picked.sort_unstable();
        picked
            .into_iter()
            .map(|i| LabeledItem { id: pool[i].to_string(), class_id })
            .collect()
    };
    let mut gallery = Vec::with_capacity(GALLERY_CLASSES * PER_CLASS);
    let mut queries = Vec::with_capacity(GALLERY_CLASSES * PER_CLASS);
    for &c in &classes {
        gallery.extend(draw(&photos[&c], c, "gallery"));
        queries.extend(draw(&drawings[&c], c, "queries"));
    }
    Ok(GallerySpec { classes, gallery, queries })
}

/// One scored (query, gallery) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreEntry {
    pub query_id: String,
    pub gallery_id: String,
    #[serde(default)]
    pub yes_logprob: Option<f64>,
    #[serde(default)]
    pub no_logprob: Option<f64>,
    /// Answer text, used when log-probabilities are absent.
    #[serde(default)]
    pub raw_text: String,
}

impl ScoreEntry {
    pub fn yes_probability(&self) -> Result<f64> {
        parse_yes_probability(&PredictionRecord {
            sample_id: format!("{}|{}", self.query_id, self.gallery_id),
            raw_text: self.raw_text.clone(),
            yes_logprob: self.yes_logprob,
            no_logprob: self.no_logprob,
            box_scores: None,
        })
    }
}

/// Yes-probabilities, rows are queries and columns gallery items.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    pub probs: Vec<Vec<f64>>,
}

impl ScoreMatrix {
    /// Fails with the full list of absent pairs when any entry is missing.
    /// Unparseable answers score zero.
    pub fn from_entries(spec: &GallerySpec, entries: &[ScoreEntry]) -> Result<Self> {
        let q_index: BTreeMap<&str, usize> = spec.queries.iter().enumerate().map(|(i, q)| (q.id.as_str(), i)).collect();
        let g_index: BTreeMap<&str, usize> = spec.gallery.iter().enumerate().map(|(i, g)| (g.id.as_str(), i)).collect();
        let mut probs = vec![vec![f64::NAN; spec.gallery.len()]; spec.queries.len()];
        for e in entries {
            let (Some(&q), Some(&g)) = (q_index.get(e.query_id.as_str()), g_index.get(e.gallery_id.as_str())) else {
                continue;
            };
            if !probs[q][g].is_nan() {
                return Err(Error::InvalidRecord(format!(
                    "duplicate score for ({}, {})",
                    e.query_id, e.gallery_id
                )));
            }
            probs[q][g] = e.yes_probability().unwrap_or(0.0);
        }
        let mut absent = Vec::new();
        for (q, row) in probs.iter().enumerate() {
            for (g, v) in row.iter().enumerate() {
                if v.is_nan() {
                    absent.push((spec.queries[q].id.clone(), spec.gallery[g].id.clone()));
                }
            }
        }
        if !absent.is_empty() {
            return Err(Error::MissingScores(absent));
        }
        Ok(Self { probs })
    }
}

/// Gallery indices per query, by probability descending; ties keep the lower
/// gallery index first.
pub fn rank_gallery(matrix: &ScoreMatrix) -> Vec<Vec<usize>> {
    matrix
        .probs
        .iter()
        .map(|row| {
            let mut idx: Vec<usize> = (0..row.len()).collect();
            idx.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).unwrap_or(Ordering::Equal));
            idx
        })
        .collect()
}

/// Mean over queries of the fraction of same-class items among the top `k`,
/// in percent.
pub fn sbir_acc_at_k(
    rankings: &[Vec<usize>],
    query_labels: &[u32],
    gallery_labels: &[u32],
    k: usize,
) -> Result<f64> {
    if k == 0 || k > gallery_labels.len() {
        return Err(Error::InvalidParameter(format!(
            "k = {k} outside 1..={}",
            gallery_labels.len()
        )));
    }
    if rankings.len() != query_labels.len() || rankings.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "{} rankings for {} queries",
            rankings.len(),
            query_labels.len()
        )));
    }
    let mut total = 0.0;
    for (ranking, &label) in rankings.iter().zip(query_labels) {
        let hits = ranking.iter().take(k).filter(|&&g| gallery_labels[g] == label).count();
        total += hits as f64 / k as f64;
    }
    Ok(100.0 * total / rankings.len() as f64)
}

/// Acc@k for each k over a full score matrix.
pub fn score_sbir(spec: &GallerySpec, entries: &[ScoreEntry], ks: &[usize]) -> Result<Vec<(usize, f64)>> {
    spec.validate()?;
    let matrix = ScoreMatrix::from_entries(spec, entries)?;
    let rankings = rank_gallery(&matrix);
    let ql: Vec<u32> = spec.queries.iter().map(|q| q.class_id).collect();
    let gl: Vec<u32> = spec.gallery.iter().map(|g| g.class_id).collect();
    ks.iter().map(|&k| Ok((k, sbir_acc_at_k(&rankings, &ql, &gl, k)?))).collect()
}
