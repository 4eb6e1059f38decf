use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::datamodel::{InstructionSample, PredictionRecord, TaskKind};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct VqaConformance {
    /// Percentage of samples that are well formed and have a non-empty answer.
    pub conformance: Option<f64>,
    pub n: usize,
    pub malformed: usize,
    pub empty: usize,
    pub missing: usize,
}

/// Structural check only: descriptor prefix, round layout and presence of a
/// non-empty answer. Answer quality is not judged.
pub fn vqa_conformance(samples: &[InstructionSample], preds: &BTreeMap<String, PredictionRecord>) -> VqaConformance {
    let mut out = VqaConformance::default();
    let mut ok = 0;
    for s in samples.iter().filter(|s| s.task == TaskKind::Vqa) {
        out.n += 1;
        let well_formed = s.validate().is_ok() && (s.sketch_id.is_some() == s.target_class.is_some());
        let answered = match preds.get(&s.sample_id) {
            None => {
                out.missing += 1;
                false
            }
            Some(p) if p.raw_text.trim().is_empty() => {
                out.empty += 1;
                false
            }
            Some(_) => true,
        };
        if !well_formed {
            out.malformed += 1;
        }
        ok += (well_formed && answered) as usize;
    }
    if out.n > 0 {
        out.conformance = Some(100.0 * ok as f64 / out.n as f64);
    }
    out
}
