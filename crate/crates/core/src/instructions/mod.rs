//! Instruction-tuning samples for the four sketch-conditioned tasks and the
//! assembly of a mixed corpus at a requested composition.

mod corpus;
mod generators;
mod prompts;

use std::collections::BTreeMap;

use crate::datamodel::SketchRecord;

pub use corpus::{build_finetune_corpus, CompositionReport, CompositionSpec, Corpus, CorpusSources};
pub use generators::{
    gen_counting_sample, gen_detection_sample, gen_sbir_pairs, gen_vqa_sample, pick_sketch,
    QaItem, QaRound, SbirBatch, SkippedImage,
};
pub use prompts::{PromptPool, SKETCH_TOKEN};

/// Sketch pools keyed by parent class id.
pub type SketchPool = BTreeMap<u32, Vec<SketchRecord>>;
