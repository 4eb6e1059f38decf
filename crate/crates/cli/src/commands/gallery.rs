use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sketchforge_core::datamodel::SketchRecord;
use sketchforge_core::evalmetrics::build_sbir_gallery;

use super::{read_images, read_records, section, Ctx, Outcome};

#[derive(Debug, Deserialize)]
struct ClassScore {
    class_id: u32,
    score: f64,
}

#[derive(Debug, Serialize)]
struct Pair<'a> {
    query_id: &'a str,
    gallery_id: &'a str,
}

/// Builds the retrieval benchmark and lists every (query, gallery) pair to score.
pub fn gallery_build(ctx: &mut Ctx) -> anyhow::Result<Outcome> {
    let sec = section(&ctx.cfg.config.gallery, "gallery")?.clone();
    let map_path = ctx.input(&sec.class_map)?;
    let images_path = ctx.input(&sec.images)?;
    let sketches_path = ctx.input(&sec.sketches)?;
    let class_map: BTreeMap<u32, f64> = read_records::<ClassScore>(&map_path)?
        .into_iter()
        .map(|c| (c.class_id, c.score))
        .collect();
    let images = read_images(&images_path)?;
    let sketches: Vec<SketchRecord> = read_records(&sketches_path)?;
    let spec = build_sbir_gallery(&class_map, &images, &sketches, ctx.seed())?;
    let pairs: Vec<Pair> = spec
        .queries
        .iter()
        .flat_map(|q| spec.gallery.iter().map(move |g| Pair { query_id: &q.id, gallery_id: &g.id }))
        .collect();
    ctx.write_json("gallery.json", &spec)?;
    ctx.write_jsonl("sbir_pairs.jsonl", &sec, &pairs)?;
    Ok(Outcome {
        summary: json!({
            "classes": spec.classes,
            "gallery": spec.gallery.len(),
            "queries": spec.queries.len(),
            "pairs": pairs.len(),
        }),
        ..Outcome::default()
    })
}
