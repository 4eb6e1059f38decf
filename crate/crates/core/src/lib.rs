//! Curation and evaluation toolkit for sketch-conditioned vision-language tasks.
//!
//! The crate is organised around the pipeline stages:
//!
//! - [`datamodel`]: shared record types and the answer grammars (box lists,
//!   counts, yes/no probabilities).
//! - [`sketchgen`]: instance-level sketch synthesis from a photo and a
//!   segmentation mask (masking, stylization, morphological edges, stroke
//!   aggregation, canvas rendering).
//! - [`curation`]: class histograms, tail-class balanced pretraining
//!   selection, taxonomy mapping and multi-source sketch pools.
//! - [`instructions`]: the four instruction-tuning tasks and corpus assembly.
//! - [`evalmetrics`]: counting accuracy, detection accuracy / mAP and the
//!   sketch-based retrieval protocol.

pub mod curation;
pub mod datamodel;
pub mod error;
pub mod evalmetrics;
pub mod instructions;
pub mod jsonl;
pub mod seed;
pub mod sketchgen;

pub use error::{Error, Result};
