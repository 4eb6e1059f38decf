//! Pretraining selection: uniform head sampling plus round-robin tail-class
//! balancing, and the pretraining response format.

use std::collections::{BTreeMap, HashSet};

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::histogram::{identify_tail_classes, ClassHistogram};
use crate::datamodel::{
    format_box_list, BoundingBox, ImageRecord, InstructionSample, Round, TaskKind,
    DEFAULT_DECIMALS,
};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PretrainPick {
    pub image_id: String,
    pub target_class: u32,
    /// Picked by tail balancing rather than the uniform head draw.
    pub tail: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shortfall {
    pub stage: String,
    pub requested: usize,
    pub realized: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PretrainSelection {
    pub picks: Vec<PretrainPick>,
    pub shortfalls: Vec<Shortfall>,
}

impl PretrainSelection {
    pub fn tail_counts(&self) -> BTreeMap<u32, usize> {
        let mut out = BTreeMap::new();
        for p in self.picks.iter().filter(|p| p.tail) {
            *out.entry(p.target_class).or_insert(0) += 1;
        }
        out
    }
}

/// Selects `n_head` images uniformly without replacement (one annotated class
/// drawn uniformly per image), then up to `n_tail` further images by cycling
/// over the tail classes in ascending order and taking an unused image that
/// contains the class on each turn. Deterministic in `seed_value`.
pub fn sample_pretrain_set(
    manifest: &[ImageRecord],
    hist: &ClassHistogram,
    n_head: usize,
    n_tail: usize,
    threshold: u64,
    seed_value: u64,
) -> Result<PretrainSelection> {
    let tail_classes = identify_tail_classes(hist, threshold)?;
    let mut rng = seed::derived_rng(seed_value, &[0x7072_6574]);
    let mut sel = PretrainSelection::default();
    let mut used: HashSet<usize> = HashSet::new();

    let eligible: Vec<usize> = (0..manifest.len())
        .filter(|&i| !manifest[i].annotations.is_empty())
        .collect();
    let head = n_head.min(eligible.len());
    for pos in index::sample(&mut rng, eligible.len(), head) {
        let i = eligible[pos];
        let classes = manifest[i].classes();
        let class = classes[rng.gen_range(0..classes.len())];
        used.insert(i);
        sel.picks.push(PretrainPick {
            image_id: manifest[i].id.clone(),
            target_class: class,
            tail: false,
        });
    }
    if head < n_head {
        sel.shortfalls.push(Shortfall {
            stage: "head".into(),
            requested: n_head,
            realized: head,
        });
    }

    // per tail class: candidate images in a seeded random order
    let mut queues: Vec<(u32, Vec<usize>)> = tail_classes
        .iter()
        .map(|&c| {
            let mut imgs: Vec<usize> = (0..manifest.len())
                .filter(|&i| !used.contains(&i) && manifest[i].count_of(c) > 0)
                .collect();
            imgs.shuffle(&mut rng);
            imgs.reverse(); // pop from the back in shuffled order
            (c, imgs)
        })
        .collect();

    let mut taken = 0;
    while taken < n_tail {
        let mut progressed = false;
        for (class, queue) in queues.iter_mut() {
            if taken == n_tail {
                break;
            }
            while let Some(i) = queue.pop() {
                if used.insert(i) {
                    sel.picks.push(PretrainPick {
                        image_id: manifest[i].id.clone(),
                        target_class: *class,
                        tail: true,
                    });
                    taken += 1;
                    progressed = true;
                    break;
                }
            }
        }
        if !progressed {
            break;
        }
    }
    if taken < n_tail {
        sel.shortfalls.push(Shortfall {
            stage: "tail".into(),
            requested: n_tail,
            realized: taken,
        });
    }
    Ok(sel)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PretrainContext {
    pub sample_id: String,
    pub image_id: String,
    pub sketch_id: Option<String>,
    pub class_id: u32,
}

fn article(word: &str) -> &'static str {
    match word.chars().next().map(|c| c.to_ascii_lowercase()) {
        Some('a' | 'e' | 'i' | 'o' | 'u') => "an",
        _ => "a",
    }
}

/// Pretraining record: the response names the sketched class, continues with
/// the supplied caption and ends with the boxes of every instance of the
/// class. Pretraining reuses the VQA descriptor.
pub fn compose_pretrain_sample<R: Rng>(
    ctx: &PretrainContext,
    caption: &str,
    class_name: &str,
    boxes: &[BoundingBox],
    templates: &[String],
    rng: &mut R,
) -> Result<InstructionSample> {
    let caption = caption.trim();
    if caption.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "empty caption for {}",
            ctx.sample_id
        )));
    }
    if class_name.trim().is_empty() {
        return Err(Error::InvalidParameter("empty class name".into()));
    }
    let box_text = format_box_list(boxes, DEFAULT_DECIMALS)?;
    let template = templates
        .choose(rng)
        .ok_or_else(|| Error::InvalidParameter("no pretraining prompt templates".into()))?;
    let name = class_name.trim();
    let response = format!(
        "The sketch shows {} {name}. {caption} {box_text}",
        article(name)
    );
    Ok(InstructionSample {
        sample_id: ctx.sample_id.clone(),
        task: TaskKind::Vqa,
        image_id: ctx.image_id.clone(),
        sketch_id: ctx.sketch_id.clone(),
        rounds: vec![Round {
            prompt: format!("{} {template}", TaskKind::Vqa.descriptor()),
            response,
        }],
        target_class: Some(ctx.class_id),
    })
}
