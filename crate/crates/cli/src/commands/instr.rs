use std::collections::BTreeMap;

use serde::Deserialize;
use serde_json::json;
use sketchforge_core::instructions::{build_finetune_corpus, CorpusSources, PromptPool, QaItem};

use super::{read_images, read_lines, read_pool, read_records, section, Ctx, Outcome};

#[derive(Debug, Deserialize)]
struct CountTruth {
    image_id: String,
    class_id: u32,
    count: u64,
}

/// Builds the four-task instruction corpus at the configured composition.
pub fn instr_build(ctx: &mut Ctx) -> anyhow::Result<Outcome> {
    let sec = section(&ctx.cfg.config.instr, "instr")?.clone();
    let spec = sec.effective_composition();
    spec.validate()?;
    let detect_path = ctx.input(&sec.detect_images)?;
    let count_path = ctx.opt_input(sec.count_images.as_ref())?;
    let truth_path = ctx.opt_input(sec.count_truth.as_ref())?;
    let vqa_path = ctx.input(&sec.vqa_items)?;
    let vqa_images_path = ctx.opt_input(sec.vqa_images.as_ref())?;
    let sbir_path = ctx.input(&sec.sbir_images)?;
    let pools_path = ctx.input(&sec.pools)?;
    let prompts_path = ctx.opt_input(sec.prompts.as_ref())?;
    let names_path = ctx.opt_input(sec.class_names.as_ref())?;

    let detect_images = read_images(&detect_path)?;
    let count_images = match &count_path {
        Some(p) => read_images(p)?,
        None => detect_images.clone(),
    };
    let vqa_images = match &vqa_images_path {
        Some(p) => read_images(p)?,
        None => detect_images.clone(),
    };
    let count_truth: BTreeMap<(String, u32), u64> = match &truth_path {
        Some(p) => read_records::<CountTruth>(p)?
            .into_iter()
            .map(|t| ((t.image_id, t.class_id), t.count))
            .collect(),
        None => BTreeMap::new(),
    };
    let vqa_items: Vec<QaItem> = read_records(&vqa_path)?;
    let sbir_images = read_images(&sbir_path)?;
    let pool = read_pool(&pools_path)?;
    let prompts = match &prompts_path {
        Some(p) => PromptPool::parse(&std::fs::read_to_string(p)?)?,
        None => PromptPool::default(),
    };
    if let Some(p) = &names_path {
        prompts.check_class_free(&read_lines(p)?)?;
    }

    let sources = CorpusSources {
        detect_images: &detect_images,
        count_images: &count_images,
        count_truth: &count_truth,
        vqa_items: &vqa_items,
        vqa_images: &vqa_images,
        sbir_images: &sbir_images,
        sketch_pool: &pool,
        prompts: &prompts,
    };
    let corpus = build_finetune_corpus(&spec, &sources, ctx.seed())?;
    ctx.write_jsonl("instructions.jsonl", &sec, &corpus.samples)?;
    ctx.out.write("composition.csv", corpus.report.to_csv().as_bytes())?;
    ctx.write_json("composition.json", &corpus.report)?;
    let r = &corpus.report;
    Ok(Outcome {
        partial: !r.shortfalls.is_empty(),
        summary: json!({
            "realized": r.realized,
            "requested": r.requested,
            "vqa_with_sketch": r.vqa_with_sketch,
            "vqa_without_sketch": r.vqa_without_sketch,
            "sbir_positive": r.sbir_positive,
            "sbir_negative": r.sbir_negative,
            "shortfalls": r.shortfalls,
            "skipped": r.skipped,
        }),
        ..Outcome::default()
    })
}
