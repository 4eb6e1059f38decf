use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use anyhow::bail;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sketchforge_core::curation::{assemble_class_pool, audit_pool, map_taxonomy, AuditReport, Embeddings, Taxonomy};
use sketchforge_core::datamodel::{SketchRecord, SketchSource};

use super::{read_records, section, Ctx, Outcome};
use crate::config::MixSection;

/// An available sketch, labelled either with a parent class id or with the
/// class name used by its source dataset.
#[derive(Debug, Clone, Deserialize)]
struct SketchEntry {
    id: String,
    source: SketchSource,
    path: PathBuf,
    #[serde(default)]
    class_id: Option<u32>,
    #[serde(default)]
    label: Option<String>,
    #[serde(default)]
    origin_image_id: Option<String>,
}

#[derive(Debug, Serialize)]
struct MappingRow {
    source: SketchSource,
    label: String,
    class_id: Option<u32>,
}

type Availability = BTreeMap<u32, BTreeMap<SketchSource, Vec<SketchRecord>>>;

struct Supply {
    availability: Availability,
    mapping: Vec<MappingRow>,
    unmapped: usize,
}

fn load_supply(ctx: &mut Ctx, sec: &MixSection) -> anyhow::Result<Supply> {
    let sketches_path = ctx.input(&sec.sketches)?;
    let taxonomy_path = ctx.opt_input(sec.taxonomy.as_ref())?;
    let embeddings_path = ctx.opt_input(sec.embeddings.as_ref())?;
    let entries: Vec<SketchEntry> = read_records(&sketches_path)?;

    let mut labels: BTreeMap<SketchSource, BTreeSet<String>> = BTreeMap::new();
    for e in entries.iter().filter(|e| e.class_id.is_none()) {
        match &e.label {
            Some(l) => {
                labels.entry(e.source).or_default().insert(l.clone());
            }
            None => bail!("sketch {} has neither class_id nor label", e.id),
        }
    }
    let mut maps: BTreeMap<SketchSource, BTreeMap<String, Option<u32>>> = BTreeMap::new();
    let mut mapping = Vec::new();
    if !labels.is_empty() {
        let Some(tp) = taxonomy_path else {
            bail!("labelled sketches need [mix] taxonomy");
        };
        let mut taxonomy = Taxonomy::parse(&std::fs::read_to_string(&tp)?);
        if let Some(ep) = embeddings_path {
            taxonomy = taxonomy.with_embeddings(Embeddings::parse(&std::fs::read_to_string(&ep)?)?);
        }
        for (source, names) in labels {
            let names: Vec<String> = names.into_iter().collect();
            let m = map_taxonomy(&names, &taxonomy, sec.sim_threshold);
            for (label, class_id) in &m {
                mapping.push(MappingRow { source, label: label.clone(), class_id: *class_id });
            }
            maps.insert(source, m);
        }
    }

    let mut availability = Availability::new();
    let mut unmapped = 0;
    for e in entries {
        let class_id = match (e.class_id, &e.label) {
            (Some(c), _) => Some(c),
            (None, Some(l)) => maps.get(&e.source).and_then(|m| m.get(l).copied().flatten()),
            (None, None) => None,
        };
        let Some(class_id) = class_id else {
            unmapped += 1;
            continue;
        };
        availability.entry(class_id).or_default().entry(e.source).or_default().push(SketchRecord {
            id: e.id,
            class_id,
            source: e.source,
            path: e.path,
            origin_image_id: e.origin_image_id,
        });
    }
    for per_source in availability.values_mut() {
        for list in per_source.values_mut() {
            list.sort_by(|a, b| a.id.cmp(&b.id));
        }
    }
    Ok(Supply { availability, mapping, unmapped })
}

fn supply_counts(a: &Availability) -> BTreeMap<u32, BTreeMap<SketchSource, usize>> {
    a.iter()
        .map(|(c, m)| (*c, m.iter().map(|(s, v)| (*s, v.len())).collect()))
        .collect()
}

fn audit_outcome(audit: &AuditReport, extra: serde_json::Value) -> Outcome {
    let violations = audit.violation_count();
    Outcome {
        violations,
        summary: json!({
            "classes": audit.classes.len(),
            "violations": violations,
            "outside_expected_range": audit.range_flag_count(),
            "detail": extra,
        }),
        ..Outcome::default()
    }
}

/// Assembles one pool per parent class and audits it.
pub fn mix_build(ctx: &mut Ctx) -> anyhow::Result<Outcome> {
    let sec = section(&ctx.cfg.config.mix, "mix")?.clone();
    sec.spec.validate()?;
    let supply = load_supply(ctx, &sec)?;
    let seed = ctx.seed();
    let pools: Vec<(u32, Vec<SketchRecord>)> = supply
        .availability
        .par_iter()
        .map(|(c, avail)| Ok((*c, assemble_class_pool(*c, avail, &sec.spec, seed)?)))
        .collect::<anyhow::Result<_>>()?;
    let pools: BTreeMap<u32, Vec<SketchRecord>> = pools.into_iter().collect();
    let audit = audit_pool(&pools, &supply_counts(&supply.availability), &sec.spec);

    let flat: Vec<&SketchRecord> = pools.values().flatten().collect();
    ctx.write_jsonl("pools.jsonl", &sec, &flat)?;
    ctx.out.write("audit.csv", audit.to_csv().as_bytes())?;
    if !supply.mapping.is_empty() {
        ctx.write_jsonl("taxonomy_map.jsonl", &sec, &supply.mapping)?;
    }
    Ok(audit_outcome(
        &audit,
        json!({ "pooled_sketches": flat.len(), "unmapped_sketches": supply.unmapped }),
    ))
}

/// Re-checks existing pools against the supply they were drawn from.
pub fn mix_audit(ctx: &mut Ctx) -> anyhow::Result<Outcome> {
    let sec = section(&ctx.cfg.config.mix, "mix")?.clone();
    sec.spec.validate()?;
    let pools_path = match &sec.pools {
        Some(p) => ctx.input(p)?,
        None => ctx.input(&ctx.cfg.out_dir().join("pools.jsonl"))?,
    };
    let supply = load_supply(ctx, &sec)?;
    let mut pools: BTreeMap<u32, Vec<SketchRecord>> = BTreeMap::new();
    for rec in read_records::<SketchRecord>(&pools_path)? {
        pools.entry(rec.class_id).or_default().push(rec);
    }
    let audit = audit_pool(&pools, &supply_counts(&supply.availability), &sec.spec);
    ctx.out.write("mix_audit.csv", audit.to_csv().as_bytes())?;
    let listed: Vec<_> = audit
        .classes
        .iter()
        .filter(|c| !c.violations.is_empty())
        .map(|c| json!({ "class_id": c.class_id, "violations": c.violations }))
        .collect();
    Ok(audit_outcome(&audit, json!({ "failing_classes": listed })))
}
