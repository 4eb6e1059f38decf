use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Deserialize;
use serde_json::json;
use sketchforge_core::curation::{
    class_histogram, compose_pretrain_sample, identify_tail_classes, sample_pretrain_set, PretrainContext,
};
use sketchforge_core::datamodel::InstructionSample;
use sketchforge_core::instructions::{pick_sketch, PromptPool};
use sketchforge_core::seed;

use super::{count_map, read_images, read_lines, read_pool, read_records, section, Ctx, Outcome};

#[derive(Debug, Deserialize)]
struct Caption {
    image_id: String,
    caption: String,
}

/// Head plus tail-balanced pretraining selection, optionally composed into
/// pretraining records.
pub fn curate_pretrain(ctx: &mut Ctx) -> anyhow::Result<Outcome> {
    let sec = section(&ctx.cfg.config.curate_pretrain, "curate_pretrain")?.clone();
    let images_path = ctx.input(&sec.images)?;
    let captions_path = ctx.opt_input(sec.captions.as_ref())?;
    let names_path = ctx.opt_input(sec.class_names.as_ref())?;
    let pools_path = ctx.opt_input(sec.pools.as_ref())?;
    let prompts_path = ctx.opt_input(sec.prompts.as_ref())?;

    let images = read_images(&images_path)?;
    let hist = class_histogram(&images);
    let tail = identify_tail_classes(&hist, sec.tail_threshold)?;
    let selection = sample_pretrain_set(&images, &hist, sec.n_head, sec.n_tail, sec.tail_threshold, ctx.seed())?;

    let mut csv = String::from("class_id,count,tail\n");
    for (c, n) in &hist.counts {
        csv.push_str(&format!("{c},{n},{}\n", tail.contains(c)));
    }
    ctx.out.write("histogram.csv", csv.as_bytes())?;
    ctx.write_jsonl("pretrain_picks.jsonl", &sec, &selection.picks)?;

    let mut composed = None;
    if let (Some(cp), Some(np), Some(pp)) = (&captions_path, &names_path, &pools_path) {
        let captions: BTreeMap<String, String> = read_records::<Caption>(cp)?
            .into_iter()
            .map(|c| (c.image_id, c.caption))
            .collect();
        let names = read_lines(np)?;
        let pool = read_pool(pp)?;
        let prompts = match &prompts_path {
            Some(p) => PromptPool::parse(&std::fs::read_to_string(p)?)?,
            None => PromptPool::default(),
        };
        prompts.check_class_free(&names)?;
        let by_id: BTreeMap<&str, _> = images.iter().map(|i| (i.id.as_str(), i)).collect();
        let results: Vec<Result<InstructionSample, String>> = selection
            .picks
            .par_iter()
            .enumerate()
            .map(|(k, pick)| {
                let mut rng = seed::derived_rng(ctx.seed(), &[seed::str_key("pretrain"), k as u64]);
                let caption = captions.get(&pick.image_id).ok_or("no caption")?;
                let name = names.get(pick.target_class as usize).ok_or("class has no name")?;
                let sketch = pick_sketch(&pool, pick.target_class, &mut rng).map_err(|_| "class has no pooled sketch")?;
                let image = by_id[pick.image_id.as_str()];
                let boxes: Vec<_> = image.boxes_of(pick.target_class).map(|a| a.bbox).collect();
                let pctx = PretrainContext {
                    sample_id: format!("pretrain-{:07}", k + 1),
                    image_id: pick.image_id.clone(),
                    sketch_id: Some(sketch.id.clone()),
                    class_id: pick.target_class,
                };
                compose_pretrain_sample(&pctx, caption, name, &boxes, prompts.pretrain_templates(), &mut rng)
                    .map_err(|e| e.to_string())
            })
            .collect();
        let mut samples = Vec::new();
        let mut reasons = Vec::new();
        for r in results {
            match r {
                Ok(s) => samples.push(s),
                Err(e) => reasons.push(e),
            }
        }
        ctx.write_jsonl("pretrain_samples.jsonl", &sec, &samples)?;
        composed = Some(json!({ "samples": samples.len(), "skipped": count_map(reasons) }));
    }

    let tail_counts = selection.tail_counts();
    Ok(Outcome {
        partial: !selection.shortfalls.is_empty(),
        summary: json!({
            "picks": selection.picks.len(),
            "tail_classes": tail.len(),
            "tail_picks_per_class": tail_counts,
            "shortfalls": selection.shortfalls,
            "composed": composed,
        }),
        ..Outcome::default()
    })
}
