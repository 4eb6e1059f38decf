use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::datamodel::ImageRecord;
use crate::error::{Error, Result};

pub const DEFAULT_TAIL_THRESHOLD: u64 = 5000;

/// Instance counts per class. Classes never seen are implicitly zero.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassHistogram {
    pub counts: BTreeMap<u32, u64>,
}

impl ClassHistogram {
    pub fn count(&self, class_id: u32) -> u64 {
        self.counts.get(&class_id).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }
}

impl FromIterator<(u32, u64)> for ClassHistogram {
    fn from_iter<I: IntoIterator<Item = (u32, u64)>>(iter: I) -> Self {
        Self {
            counts: iter.into_iter().collect(),
        }
    }
}

pub fn class_histogram(manifest: &[ImageRecord]) -> ClassHistogram {
    let mut counts = BTreeMap::new();
    for ann in manifest.iter().flat_map(|img| &img.annotations) {
        *counts.entry(ann.class_id).or_insert(0) += 1;
    }
    ClassHistogram { counts }
}

/// Classes present in the histogram with fewer than `threshold` instances.
pub fn identify_tail_classes(hist: &ClassHistogram, threshold: u64) -> Result<BTreeSet<u32>> {
    if threshold < 1 {
        return Err(Error::InvalidParameter("tail threshold must be >= 1".into()));
    }
    Ok(hist
        .counts
        .iter()
        .filter(|(_, &n)| n > 0 && n < threshold)
        .map(|(&c, _)| c)
        .collect())
}
