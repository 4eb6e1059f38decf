//! Per-class sketch pools drawn from several sources.
//!
//! A class held only by the primary generated source takes its whole quota
//! from it. A class shared with other sources takes a small primary quota and
//! spreads the rest evenly over the other sources, backfilling from the
//! primary source (then the others) whenever supply runs short of the
//! per-class minimum.

use std::collections::{BTreeMap, HashSet};

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::datamodel::{SketchRecord, SketchSource};
use crate::error::{Error, Result};
use crate::seed;

const PRIMARY: SketchSource = SketchSource::SketchVclO365;

/// Pool sizes outside this range are flagged (not rejected).
const EXPECTED_RANGE: (usize, usize) = (200, 350);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoolSpec {
    pub min_per_class: usize,
    pub exclusive_quota: usize,
    pub shared_primary_quota: usize,
    pub shared_other_quota: usize,
}

impl Default for PoolSpec {
    fn default() -> Self {
        Self {
            min_per_class: 200,
            exclusive_quota: 200,
            shared_primary_quota: 50,
            shared_other_quota: 150,
        }
    }
}

impl PoolSpec {
    pub fn validate(&self) -> Result<()> {
        if self.exclusive_quota != self.min_per_class
            || self.shared_primary_quota + self.shared_other_quota != self.min_per_class
        {
            return Err(Error::InvalidParameter(format!(
                "pool quotas {self:?} must add up to min_per_class"
            )));
        }
        Ok(())
    }
}

/// Spreads `quota` over `caps` as evenly as capacity allows; leftover units go
/// to the earliest entries.
fn water_fill(caps: &[(SketchSource, usize)], quota: usize) -> Vec<usize> {
    let mut alloc = vec![0usize; caps.len()];
    let mut remaining = quota.min(caps.iter().map(|c| c.1).sum());
    while remaining > 0 {
        let active: Vec<usize> = (0..caps.len()).filter(|&i| alloc[i] < caps[i].1).collect();
        let share = remaining / active.len();
        if share == 0 {
            for &i in active.iter().take(remaining) {
                alloc[i] += 1;
            }
            break;
        }
        for &i in &active {
            let give = share.min(caps[i].1 - alloc[i]);
            alloc[i] += give;
            remaining -= give;
        }
    }
    alloc
}

/// How many sketches to draw from each source, given per-source supply.
pub fn allocate_pool(
    supply: &BTreeMap<SketchSource, usize>,
    spec: &PoolSpec,
) -> BTreeMap<SketchSource, usize> {
    let primary_supply = supply.get(&PRIMARY).copied().unwrap_or(0);
    let others: Vec<(SketchSource, usize)> = supply
        .iter()
        .filter(|(s, &n)| **s != PRIMARY && n > 0)
        .map(|(&s, &n)| (s, n))
        .collect();

    let mut out = BTreeMap::new();
    if others.is_empty() {
        let take = spec.exclusive_quota.min(primary_supply);
        if take > 0 {
            out.insert(PRIMARY, take);
        }
        return out;
    }

    let mut primary = spec.shared_primary_quota.min(primary_supply);
    let mut other_quota = spec.shared_other_quota;
    let mut other_alloc = water_fill(&others, other_quota);
    let filled = primary + other_alloc.iter().sum::<usize>();
    if filled < spec.min_per_class {
        let mut deficit = spec.min_per_class - filled;
        let extra = deficit.min(primary_supply - primary);
        primary += extra;
        deficit -= extra;
        if deficit > 0 {
            other_quota = other_alloc.iter().sum::<usize>() + deficit;
            other_alloc = water_fill(&others, other_quota);
        }
    }
    if primary > 0 {
        out.insert(PRIMARY, primary);
    }
    for ((s, _), n) in others.iter().zip(other_alloc) {
        if n > 0 {
            out.insert(*s, n);
        }
    }
    out
}

/// Samples the pool for `class_id` without replacement. The RNG for each
/// source is derived from `(seed, class_id, source)`, so pools can be built in
/// any order or in parallel.
pub fn assemble_class_pool(
    class_id: u32,
    availability: &BTreeMap<SketchSource, Vec<SketchRecord>>,
    spec: &PoolSpec,
    seed_value: u64,
) -> Result<Vec<SketchRecord>> {
    spec.validate()?;
    let mut seen = HashSet::new();
    for rec in availability.values().flatten() {
        if rec.class_id != class_id {
            return Err(Error::InvalidRecord(format!(
                "sketch {} has class {} in the pool for class {class_id}",
                rec.id, rec.class_id
            )));
        }
        if !seen.insert(rec.id.as_str()) {
            return Err(Error::InvalidRecord(format!("duplicate sketch id {}", rec.id)));
        }
    }
    let supply: BTreeMap<SketchSource, usize> =
        availability.iter().map(|(&s, v)| (s, v.len())).collect();
    if supply.values().sum::<usize>() == 0 {
        return Err(Error::EmptyPool(class_id));
    }

    let mut pool = Vec::new();
    for (source, take) in allocate_pool(&supply, spec) {
        let records = &availability[&source];
        let mut rng = seed::derived_rng(seed_value, &[u64::from(class_id), source as u64]);
        let mut picked = index::sample(&mut rng, records.len(), take).into_vec();
        picked.sort_unstable();
        pool.extend(picked.into_iter().map(|i| records[i].clone()));
    }
    Ok(pool)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassAudit {
    pub class_id: u32,
    pub size: usize,
    pub shared: bool,
    pub composition: BTreeMap<SketchSource, usize>,
    pub in_expected_range: bool,
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditReport {
    pub classes: Vec<ClassAudit>,
}

impl AuditReport {
    pub fn violation_count(&self) -> usize {
        self.classes.iter().map(|c| c.violations.len()).sum()
    }

    pub fn range_flag_count(&self) -> usize {
        self.classes.iter().filter(|c| !c.in_expected_range).count()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("class_id,size,shared");
        for s in SketchSource::ALL {
            out.push(',');
            out.push_str(s.as_str());
        }
        out.push_str(",in_expected_range,violations\n");
        for c in &self.classes {
            out.push_str(&format!("{},{},{}", c.class_id, c.size, c.shared));
            for s in SketchSource::ALL {
                out.push_str(&format!(",{}", c.composition.get(&s).copied().unwrap_or(0)));
            }
            out.push_str(&format!(
                ",{},\"{}\"\n",
                c.in_expected_range,
                c.violations.join("; ").replace('"', "'")
            ));
        }
        out
    }
}

/// Checks each pool against the sampling rules given the per-source supply
/// the pool was drawn from.
pub fn audit_pool(
    pools: &BTreeMap<u32, Vec<SketchRecord>>,
    supply: &BTreeMap<u32, BTreeMap<SketchSource, usize>>,
    spec: &PoolSpec,
) -> AuditReport {
    let empty = BTreeMap::new();
    let mut report = AuditReport::default();
    for (&class_id, pool) in pools {
        let mut violations = Vec::new();
        let avail = supply.get(&class_id).unwrap_or_else(|| {
            violations.push("class has no recorded supply".to_string());
            &empty
        });
        let mut composition: BTreeMap<SketchSource, usize> = BTreeMap::new();
        let mut ids = HashSet::new();
        for rec in pool {
            *composition.entry(rec.source).or_insert(0) += 1;
            if !ids.insert(rec.id.as_str()) {
                violations.push(format!("duplicate sketch {}", rec.id));
            }
            if rec.class_id != class_id {
                violations.push(format!("sketch {} belongs to class {}", rec.id, rec.class_id));
            }
        }
        for (src, &n) in &composition {
            let have = avail.get(src).copied().unwrap_or(0);
            if n > have {
                violations.push(format!("{n} sketches from {src} exceed its supply of {have}"));
            }
        }

        let size = pool.len();
        let avail_primary = avail.get(&PRIMARY).copied().unwrap_or(0);
        let avail_others: usize = avail.iter().filter(|(s, _)| **s != PRIMARY).map(|(_, n)| n).sum();
        let total = avail_primary + avail_others;
        let shared = avail_others > 0;
        if size < spec.min_per_class.min(total) {
            violations.push(format!(
                "size {size} below minimum {}",
                spec.min_per_class.min(total)
            ));
        }

        let primary = composition.get(&PRIMARY).copied().unwrap_or(0);
        let other = size - primary;
        if !shared {
            let want = spec.exclusive_quota.min(avail_primary);
            if size != want {
                violations.push(format!("exclusive class holds {size}, expected {want}"));
            }
        } else {
            if primary < spec.shared_primary_quota.min(avail_primary) {
                violations.push(format!("split: {primary} primary sketches below quota"));
            }
            if other < spec.shared_other_quota.min(avail_others) {
                violations.push(format!("split: {other} other-source sketches below quota"));
            }
            if primary > spec.shared_primary_quota && other < avail_others {
                violations.push(format!(
                    "split: {primary} primary sketches while other sources had supply left"
                ));
            }
            if other > spec.shared_other_quota && primary < avail_primary {
                violations.push(format!(
                    "split: {other} other-source sketches while the primary source had supply left"
                ));
            }
            if size > spec.min_per_class
                && (primary > spec.shared_primary_quota || other > spec.shared_other_quota)
            {
                violations.push(format!("backfill beyond the minimum ({size})"));
            }
            let drawn: Vec<(usize, usize)> = avail
                .iter()
                .filter(|(s, &n)| **s != PRIMARY && n > 0)
                .map(|(s, &n)| (composition.get(s).copied().unwrap_or(0), n))
                .collect();
            let top = drawn.iter().map(|d| d.0).max().unwrap_or(0);
            if drawn.iter().any(|&(got, have)| got + 1 < top && got < have) {
                violations.push("uneven split across other sources".to_string());
            }
        }

        report.classes.push(ClassAudit {
            class_id,
            size,
            shared,
            composition,
            in_expected_range: (EXPECTED_RANGE.0..=EXPECTED_RANGE.1).contains(&size),
            violations,
        });
    }
    report
}
