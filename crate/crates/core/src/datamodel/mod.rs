//! Shared record types and the answer grammars used by every stage.

mod boxes;
mod grammar;
mod records;

pub use boxes::{denormalize_box, normalize_box, BoundingBox};
pub use grammar::{
    format_box_list, parse_box_list, parse_count_answer, parse_yes_probability, ParsedBox,
    ParsedBoxes, DEFAULT_DECIMALS,
};
pub use records::{
    Annotation, ImageRecord, InstructionSample, PredictionRecord, Round, SketchRecord,
    SketchSource, TaskKind,
};
