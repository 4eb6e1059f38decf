use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::boxes::{denormalize_box, BoundingBox};
use crate::error::{Error, Result};

/// Ground-truth instance: class, normalized box and absolute pixel area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub class_id: u32,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub area_px: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: String,
    pub path: PathBuf,
    pub width: u32,
    pub height: u32,
    #[serde(default)]
    pub annotations: Vec<Annotation>,
}

impl ImageRecord {
    pub fn validate(&self, num_classes: Option<u32>) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidRecord(format!(
                "image {} has size {}x{}",
                self.id, self.width, self.height
            )));
        }
        for (i, ann) in self.annotations.iter().enumerate() {
            if let Some(n) = num_classes {
                if ann.class_id >= n {
                    return Err(Error::InvalidRecord(format!(
                        "image {} annotation {i}: class {} outside taxonomy of {n}",
                        self.id, ann.class_id
                    )));
                }
            }
            let [x1, y1, x2, y2] = denormalize_box(&ann.bbox, self.width, self.height);
            let box_area = (x2 - x1) * (y2 - y1);
            if ann.area_px.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) || (ann.area_px - box_area).abs() > 1.0 {
                return Err(Error::InvalidRecord(format!(
                    "image {} annotation {i}: area_px {} inconsistent with box area {box_area}",
                    self.id, ann.area_px
                )));
            }
        }
        Ok(())
    }

    pub fn boxes_of(&self, class_id: u32) -> impl Iterator<Item = &Annotation> {
        self.annotations
            .iter()
            .filter(move |a| a.class_id == class_id)
    }

    pub fn count_of(&self, class_id: u32) -> usize {
        self.boxes_of(class_id).count()
    }

    /// Distinct annotated classes, ascending.
    pub fn classes(&self) -> Vec<u32> {
        let mut c: Vec<u32> = self.annotations.iter().map(|a| a.class_id).collect();
        c.sort_unstable();
        c.dedup();
        c
    }
}

/// Where a sketch comes from. Declaration order is the fixed order used for
/// quota remainders.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub enum SketchSource {
    #[serde(rename = "SketchVCL-O365")]
    SketchVclO365,
    #[serde(rename = "SketchVCL-OI")]
    SketchVclOi,
    #[serde(rename = "SketchVCL-C")]
    SketchVclC,
    Sketchy,
    QuickDraw,
    External,
}

impl SketchSource {
    pub const ALL: [SketchSource; 6] = [
        SketchSource::SketchVclO365,
        SketchSource::SketchVclOi,
        SketchSource::SketchVclC,
        SketchSource::Sketchy,
        SketchSource::QuickDraw,
        SketchSource::External,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SketchSource::SketchVclO365 => "SketchVCL-O365",
            SketchSource::SketchVclOi => "SketchVCL-OI",
            SketchSource::SketchVclC => "SketchVCL-C",
            SketchSource::Sketchy => "Sketchy",
            SketchSource::QuickDraw => "QuickDraw",
            SketchSource::External => "External",
        }
    }
}

impl fmt::Display for SketchSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SketchSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SketchSource::ALL
            .into_iter()
            .find(|src| src.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown sketch source {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SketchRecord {
    pub id: String,
    pub class_id: u32,
    pub source: SketchSource,
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin_image_id: Option<String>,
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub enum TaskKind {
    Count,
    Detect,
    Vqa,
    Sbir,
}

impl TaskKind {
    pub const ALL: [TaskKind; 4] = [TaskKind::Count, TaskKind::Detect, TaskKind::Vqa, TaskKind::Sbir];

    /// Literal prefix that opens the first prompt of every sample of this task.
    pub fn descriptor(&self) -> &'static str {
        match self {
            TaskKind::Count => "COUNT",
            TaskKind::Detect => "BBOX",
            TaskKind::Vqa => "VQA",
            TaskKind::Sbir => "SBIR",
        }
    }

    pub fn from_descriptor(s: &str) -> Option<TaskKind> {
        TaskKind::ALL.into_iter().find(|t| t.descriptor() == s)
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.descriptor())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "count" => Ok(TaskKind::Count),
            "detect" | "bbox" | "detection" => Ok(TaskKind::Detect),
            "vqa" => Ok(TaskKind::Vqa),
            "sbir" => Ok(TaskKind::Sbir),
            _ => Err(Error::InvalidParameter(format!("unknown task {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Round {
    pub prompt: String,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionSample {
    pub sample_id: String,
    pub task: TaskKind,
    pub image_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sketch_id: Option<String>,
    pub rounds: Vec<Round>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_class: Option<u32>,
}

impl InstructionSample {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidRecord(format!("sample {}: {msg}", self.sample_id)));
        let Some(first) = self.rounds.first() else {
            return bad("no rounds");
        };
        if !first.prompt.starts_with(self.task.descriptor()) {
            return bad("first prompt does not start with the task descriptor");
        }
        if self.task != TaskKind::Vqa && self.rounds.len() != 1 {
            return bad("single-round task with several rounds");
        }
        Ok(())
    }
}

/// One raw model answer, optionally with the log-probabilities of the
/// `yes`/`no` answer tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub sample_id: String,
    pub raw_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub yes_logprob: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub no_logprob: Option<f64>,
    /// Optional per-box confidences for detection answers, in emission order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub box_scores: Option<Vec<f64>>,
}

impl PredictionRecord {
    pub fn text(sample_id: impl Into<String>, raw_text: impl Into<String>) -> Self {
        Self {
            sample_id: sample_id.into(),
            raw_text: raw_text.into(),
            yes_logprob: None,
            no_logprob: None,
            box_scores: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.yes_logprob, self.no_logprob) {
            (None, None) => Ok(()),
            (Some(y), Some(n)) if y <= 0.0 && n <= 0.0 => Ok(()),
            (Some(_), Some(_)) => Err(Error::InvalidRecord(format!(
                "prediction {}: log-probabilities must be <= 0",
                self.sample_id
            ))),
            _ => Err(Error::InvalidRecord(format!(
                "prediction {}: yes_logprob and no_logprob must be given together",
                self.sample_id
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn descriptors_are_a_bijection() {
        for t in TaskKind::ALL {
            assert_eq!(TaskKind::from_descriptor(t.descriptor()), Some(t));
        }
        let mut d: Vec<_> = TaskKind::ALL.iter().map(|t| t.descriptor()).collect();
        d.sort();
        d.dedup();
        assert_eq!(d.len(), 4);
        assert_eq!(TaskKind::from_descriptor("COUNTING"), None);
    }

    #[test]
    fn source_names_round_trip_through_json() {
        for s in SketchSource::ALL {
            let j = serde_json::to_string(&s).unwrap();
            assert_eq!(j, format!("\"{}\"", s.as_str()));
            assert_eq!(serde_json::from_str::<SketchSource>(&j).unwrap(), s);
            assert_eq!(s.as_str().parse::<SketchSource>().unwrap(), s);
        }
    }

    #[test]
    fn image_record_area_must_match_box() {
        let mut rec = ImageRecord {
            id: "a".into(),
            path: "a.png".into(),
            width: 100,
            height: 50,
            annotations: vec![Annotation {
                class_id: 2,
                bbox: BoundingBox::new(0.0, 0.0, 0.5, 0.5).unwrap(),
                area_px: 1250.0,
            }],
        };
        rec.validate(Some(3)).unwrap();
        assert!(rec.validate(Some(2)).is_err());
        rec.annotations[0].area_px = 1252.0;
        assert!(rec.validate(None).is_err());
    }

    #[test]
    fn annotation_uses_box_field_name() {
        let a = Annotation {
            class_id: 1,
            bbox: BoundingBox::unit(),
            area_px: 4.0,
        };
        let j = serde_json::to_value(&a).unwrap();
        assert!(j.get("box").is_some());
    }

    #[test]
    fn prediction_logprobs_come_in_pairs() {
        let mut p = PredictionRecord::text("s", "yes");
        p.validate().unwrap();
        p.yes_logprob = Some(-0.1);
        assert!(p.validate().is_err());
        p.no_logprob = Some(-2.0);
        p.validate().unwrap();
        p.no_logprob = Some(0.5);
        assert!(p.validate().is_err());
    }

    #[test]
    fn sample_validation_checks_prefix_and_rounds() {
        let mut s = InstructionSample {
            sample_id: "x".into(),
            task: TaskKind::Count,
            image_id: "i".into(),
            sketch_id: None,
            rounds: vec![Round {
                prompt: "COUNT how many?".into(),
                response: "3".into(),
            }],
            target_class: Some(1),
        };
        s.validate().unwrap();
        s.rounds.push(s.rounds[0].clone());
        assert!(s.validate().is_err());
        s.rounds.pop();
        s.rounds[0].prompt = "how many?".into();
        assert!(s.validate().is_err());
    }
}
