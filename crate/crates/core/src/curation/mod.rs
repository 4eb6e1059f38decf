//! Pretraining selection and multi-source sketch pool curation.

mod coco;
mod histogram;
mod pool;
mod pretrain;
mod taxonomy;

pub use coco::{import_coco, CocoImport};
pub use histogram::{class_histogram, identify_tail_classes, ClassHistogram, DEFAULT_TAIL_THRESHOLD};
pub use pool::{
    allocate_pool, assemble_class_pool, audit_pool, AuditReport, ClassAudit, PoolSpec,
};
pub use pretrain::{
    compose_pretrain_sample, sample_pretrain_set, PretrainContext, PretrainPick,
    PretrainSelection, Shortfall,
};
pub use taxonomy::{map_taxonomy, Embeddings, Taxonomy, DEFAULT_SIM_THRESHOLD};
