//! Mapping source-dataset class names onto the parent class list.

use std::collections::{BTreeMap, BTreeSet};

use crate::datamodel::SketchSource;
use crate::error::{Error, Result};

pub const DEFAULT_SIM_THRESHOLD: f64 = 0.85;

const JACCARD_FLOOR: f64 = 0.5;

/// Class-name embeddings, stored at unit norm.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Embeddings {
    vectors: BTreeMap<String, Vec<f64>>,
    dim: usize,
}

impl Embeddings {
    pub fn new(entries: impl IntoIterator<Item = (String, Vec<f64>)>) -> Result<Self> {
        let mut out = Embeddings::default();
        for (name, mut v) in entries {
            if out.dim == 0 {
                out.dim = v.len();
            }
            if v.is_empty() || v.len() != out.dim {
                return Err(Error::InvalidRecord(format!(
                    "embedding for {name:?} has dimension {} (expected {})",
                    v.len(),
                    out.dim
                )));
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !(norm > 0.0 && norm.is_finite()) {
                return Err(Error::InvalidRecord(format!("embedding for {name:?} has zero norm")));
            }
            v.iter_mut().for_each(|x| *x /= norm);
            out.vectors.insert(name, v);
        }
        Ok(out)
    }

    /// Sidecar format: class name followed by whitespace-separated floats.
    /// The name is everything before the trailing run of numeric tokens.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let tokens: Vec<&str> = line.split_whitespace().collect();
            let mut split = tokens.len();
            while split > 1 && tokens[split - 1].parse::<f64>().is_ok() {
                split -= 1;
            }
            if split == tokens.len() {
                return Err(Error::InvalidRecord(format!(
                    "embedding line {} has no vector",
                    n + 1
                )));
            }
            let name = tokens[..split].join(" ");
            let v = tokens[split..].iter().map(|t| t.parse().unwrap()).collect();
            entries.push((name, v));
        }
        Self::new(entries)
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.vectors
            .get(name)
            .or_else(|| self.vectors.get(&name.to_lowercase()))
            .map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Taxonomy {
    pub parent_classes: Vec<String>,
    pub source_maps: BTreeMap<SketchSource, BTreeMap<String, Option<u32>>>,
    pub embeddings: Option<Embeddings>,
}

impl Taxonomy {
    pub fn new(parent_classes: Vec<String>) -> Self {
        Self {
            parent_classes,
            ..Default::default()
        }
    }

    /// One parent class per line; blank lines and `#` comments skipped.
    pub fn parse(text: &str) -> Self {
        Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(String::from)
                .collect(),
        )
    }

    pub fn with_embeddings(mut self, embeddings: Embeddings) -> Self {
        self.embeddings = Some(embeddings);
        self
    }

    pub fn len(&self) -> usize {
        self.parent_classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent_classes.is_empty()
    }

    pub fn name(&self, class_id: u32) -> Option<&str> {
        self.parent_classes.get(class_id as usize).map(String::as_str)
    }

    pub fn index_of(&self, name: &str) -> Option<u32> {
        let key = name.trim().to_lowercase();
        self.parent_classes
            .iter()
            .position(|p| p.to_lowercase() == key)
            .map(|i| i as u32)
    }

    /// Parent for `name` under `source`, if mapped.
    pub fn parent_of(&self, source: SketchSource, name: &str) -> Option<u32> {
        self.source_maps.get(&source)?.get(name).copied().flatten()
    }
}

fn tokens(s: &str) -> BTreeSet<String> {
    s.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        0.0
    } else {
        a.intersection(b).count() as f64 / union as f64
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Index and score of the best candidate; ties go to the lower index.
fn argmax(scores: impl Iterator<Item = f64>) -> Option<(usize, f64)> {
    scores.enumerate().fold(None, |best, (i, s)| match best {
        Some((_, b)) if s <= b => best,
        _ => Some((i, s)),
    })
}

/// Maps each source class name to a parent class.
///
/// With embeddings for the name and every parent, the parent of highest
/// cosine similarity is taken when the similarity reaches `sim_threshold`; a
/// threshold of zero or below always takes it. Without embeddings, an exact
/// case-insensitive name match wins, then the best token-set Jaccard overlap
/// of at least 0.5.
pub fn map_taxonomy(
    source_names: &[String],
    taxonomy: &Taxonomy,
    sim_threshold: f64,
) -> BTreeMap<String, Option<u32>> {
    let parent_vectors: Option<Vec<&[f64]>> = taxonomy.embeddings.as_ref().and_then(|emb| {
        taxonomy
            .parent_classes
            .iter()
            .map(|p| emb.get(p))
            .collect()
    });
    let parent_tokens: Vec<BTreeSet<String>> =
        taxonomy.parent_classes.iter().map(|p| tokens(p)).collect();

    let mut out = BTreeMap::new();
    for name in source_names {
        let by_embedding = parent_vectors.as_ref().and_then(|parents| {
            let v = taxonomy.embeddings.as_ref()?.get(name)?;
            Some(argmax(parents.iter().map(|p| dot(v, p))))
        });
        let mapped = match by_embedding {
            Some(best) => best
                .filter(|&(_, s)| sim_threshold <= 0.0 || s >= sim_threshold)
                .map(|(i, _)| i as u32),
            None => taxonomy.index_of(name).or_else(|| {
                let t = tokens(name);
                argmax(parent_tokens.iter().map(|p| jaccard(&t, p)))
                    .filter(|&(_, s)| s >= JACCARD_FLOOR)
                    .map(|(i, _)| i as u32)
            }),
        };
        out.insert(name.clone(), mapped);
    }
    out
}
