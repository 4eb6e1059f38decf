use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::prompts::PromptPool;
use super::SketchPool;
use crate::curation::Shortfall;
use crate::datamodel::{
    format_box_list, ImageRecord, InstructionSample, Round, SketchRecord, TaskKind,
    DEFAULT_DECIMALS,
};
use crate::error::{Error, Result};
use crate::seed;

/// One supplied question/answer turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaRound {
    pub question: String,
    pub answer: String,
}

/// QA ingestion record. `class_id` names the object the questions are about;
/// when absent a class is drawn from the image annotations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaItem {
    pub image_id: String,
    pub rounds: Vec<QaRound>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_id: Option<u32>,
}

/// Uniform draw from the pool of `class_id`.
pub fn pick_sketch<'a, R: Rng>(
    pool: &'a SketchPool,
    class_id: u32,
    rng: &mut R,
) -> Result<&'a SketchRecord> {
    pool.get(&class_id)
        .and_then(|p| p.choose(rng))
        .ok_or_else(|| Error::InvalidParameter(format!("no sketches pooled for class {class_id}")))
}

fn pick_template<'a, R: Rng>(prompts: &'a PromptPool, task: TaskKind, rng: &mut R) -> Result<&'a str> {
    prompts
        .templates(task)
        .choose(rng)
        .map(String::as_str)
        .ok_or_else(|| Error::InvalidParameter(format!("no {task} templates")))
}

fn require_class(image: &ImageRecord, class_id: u32) -> Result<()> {
    if image.count_of(class_id) == 0 {
        return Err(Error::InvalidParameter(format!(
            "image {} has no annotation of class {class_id}",
            image.id
        )));
    }
    Ok(())
}

fn single_round(
    sample_id: &str,
    task: TaskKind,
    image_id: &str,
    sketch: &SketchRecord,
    prompt: String,
    response: String,
) -> InstructionSample {
    InstructionSample {
        sample_id: sample_id.to_string(),
        task,
        image_id: image_id.to_string(),
        sketch_id: Some(sketch.id.clone()),
        rounds: vec![Round { prompt, response }],
        target_class: Some(sketch.class_id),
    }
}

/// Counting sample. `count_override` carries an externally supplied single
/// count; otherwise the answer is the number of class annotations.
pub fn gen_counting_sample(
    sample_id: &str,
    image: &ImageRecord,
    class_id: u32,
    count_override: Option<u64>,
    prompts: &PromptPool,
    sketch_pool: &SketchPool,
    seed_value: u64,
) -> Result<InstructionSample> {
    let count = match count_override {
        Some(n) => n,
        None => {
            require_class(image, class_id)?;
            image.count_of(class_id) as u64
        }
    };
    let mut rng = seed::rng(seed_value);
    let sketch = pick_sketch(sketch_pool, class_id, &mut rng)?;
    let template = pick_template(prompts, TaskKind::Count, &mut rng)?;
    Ok(single_round(
        sample_id,
        TaskKind::Count,
        &image.id,
        sketch,
        PromptPool::render(TaskKind::Count, template),
        count.to_string(),
    ))
}

/// Detection sample answering with every box of `class_id` in the image.
pub fn gen_detection_sample(
    sample_id: &str,
    image: &ImageRecord,
    class_id: u32,
    prompts: &PromptPool,
    sketch_pool: &SketchPool,
    seed_value: u64,
) -> Result<InstructionSample> {
    require_class(image, class_id)?;
    let boxes: Vec<_> = image.boxes_of(class_id).map(|a| a.bbox).collect();
    let response = format_box_list(&boxes, DEFAULT_DECIMALS)?;
    let mut rng = seed::rng(seed_value);
    let sketch = pick_sketch(sketch_pool, class_id, &mut rng)?;
    let template = pick_template(prompts, TaskKind::Detect, &mut rng)?;
    Ok(single_round(
        sample_id,
        TaskKind::Detect,
        &image.id,
        sketch,
        PromptPool::render(TaskKind::Detect, template),
        response,
    ))
}

/// VQA sample. With a sketch (`sketch_class` set) the first question is
/// wrapped in a sketch template; without one it is asked verbatim. Only the
/// first prompt carries the descriptor.
pub fn gen_vqa_sample(
    sample_id: &str,
    image_id: &str,
    qa_rounds: &[QaRound],
    sketch_class: Option<u32>,
    prompts: &PromptPool,
    sketch_pool: &SketchPool,
    seed_value: u64,
) -> Result<InstructionSample> {
    let (first, rest) = qa_rounds
        .split_first()
        .ok_or_else(|| Error::InvalidParameter(format!("{sample_id}: empty QA rounds")))?;
    let mut rng = seed::rng(seed_value);
    let (sketch_id, first_prompt) = match sketch_class {
        Some(class_id) => {
            let sketch = pick_sketch(sketch_pool, class_id, &mut rng)?;
            let template = pick_template(prompts, TaskKind::Vqa, &mut rng)?;
            let body = PromptPool::render_question(template, &first.question);
            (Some(sketch.id.clone()), PromptPool::render(TaskKind::Vqa, &body))
        }
        None => (None, PromptPool::render(TaskKind::Vqa, first.question.trim())),
    };
    let mut rounds = vec![Round {
        prompt: first_prompt,
        response: first.answer.clone(),
    }];
    rounds.extend(rest.iter().map(|r| Round {
        prompt: r.question.clone(),
        response: r.answer.clone(),
    }));
    Ok(InstructionSample {
        sample_id: sample_id.to_string(),
        task: TaskKind::Vqa,
        image_id: image_id.to_string(),
        sketch_id,
        rounds,
        target_class: sketch_class,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedImage {
    pub image_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SbirBatch {
    pub samples: Vec<InstructionSample>,
    pub skipped: Vec<SkippedImage>,
    pub shortfalls: Vec<Shortfall>,
}

impl SbirBatch {
    pub fn positives(&self) -> usize {
        self.samples
            .iter()
            .filter(|s| s.rounds[0].response == "yes")
            .count()
    }

    pub fn negatives(&self) -> usize {
        self.samples.len() - self.positives()
    }
}

/// Positive and negative sketch/image pairs over single-class images. Images
/// are cycled in a seeded order so that every usable image is used before any
/// repeats. Sample ids are `{id_prefix}{k}` in emission order.
pub fn gen_sbir_pairs(
    images: &[ImageRecord],
    sketch_pool: &SketchPool,
    n_pairs: usize,
    positive_fraction: f64,
    prompts: &PromptPool,
    seed_value: u64,
    id_prefix: &str,
) -> Result<SbirBatch> {
    if !(0.0..=1.0).contains(&positive_fraction) {
        return Err(Error::InvalidParameter(format!(
            "positive fraction {positive_fraction} outside [0, 1]"
        )));
    }
    let mut batch = SbirBatch::default();
    let mut usable: Vec<(&ImageRecord, u32)> = Vec::new();
    for image in images {
        let classes = image.classes();
        match classes.as_slice() {
            [c] if sketch_pool.get(c).is_some_and(|p| !p.is_empty()) => usable.push((image, *c)),
            [c] => batch.skipped.push(SkippedImage {
                image_id: image.id.clone(),
                reason: format!("class {c} has no pooled sketches"),
            }),
            _ => batch.skipped.push(SkippedImage {
                image_id: image.id.clone(),
                reason: format!("{} object classes, expected one", classes.len()),
            }),
        }
    }
    let pooled: Vec<u32> = sketch_pool
        .iter()
        .filter(|(_, p)| !p.is_empty())
        .map(|(c, _)| *c)
        .collect();

    let n_pos = (n_pairs as f64 * positive_fraction).round() as usize;
    let n_neg = n_pairs - n_pos;
    let mut order_rng = seed::derived_rng(seed_value, &[seed::str_key("sbir-order")]);
    let mut labels: Vec<bool> = std::iter::repeat_n(true, n_pos)
        .chain(std::iter::repeat_n(false, n_neg))
        .collect();
    labels.shuffle(&mut order_rng);

    let mut cycle: Vec<usize> = Vec::new();
    let mut realized: BTreeMap<bool, usize> = BTreeMap::new();
    for (slot, positive) in labels.into_iter().enumerate() {
        if usable.is_empty() {
            break;
        }
        if cycle.is_empty() {
            cycle = (0..usable.len()).collect();
            cycle.shuffle(&mut order_rng);
            cycle.reverse();
        }
        let (image, class_id) = usable[cycle.pop().expect("refilled above")];
        let mut rng = seed::derived_rng(seed_value, &[seed::str_key("sbir"), slot as u64]);
        let sketch_class = if positive {
            class_id
        } else {
            let others: Vec<u32> = pooled.iter().copied().filter(|c| *c != class_id).collect();
            match others.choose(&mut rng) {
                Some(c) => *c,
                None => continue,
            }
        };
        let sketch = pick_sketch(sketch_pool, sketch_class, &mut rng)?;
        let template = pick_template(prompts, TaskKind::Sbir, &mut rng)?;
        let id = format!("{id_prefix}{:07}", batch.samples.len() + 1);
        batch.samples.push(single_round(
            &id,
            TaskKind::Sbir,
            &image.id,
            sketch,
            PromptPool::render(TaskKind::Sbir, template),
            if positive { "yes" } else { "no" }.to_string(),
        ));
        *realized.entry(positive).or_default() += 1;
    }
    for (positive, requested, stage) in [(true, n_pos, "sbir-positive"), (false, n_neg, "sbir-negative")] {
        let got = realized.get(&positive).copied().unwrap_or(0);
        if got < requested {
            batch.shortfalls.push(Shortfall {
                stage: stage.to_string(),
                requested,
                realized: got,
            });
        }
    }
    Ok(batch)
}
