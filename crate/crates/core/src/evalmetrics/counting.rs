use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::datamodel::{parse_count_answer, InstructionSample, PredictionRecord, TaskKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CountScore {
    /// Exact-match accuracy in percent; `None` for an empty split.
    pub accuracy: Option<f64>,
    pub n: usize,
    pub correct: usize,
    pub unparseable: usize,
    pub missing: usize,
}

/// Exact-match accuracy of parsed counts. `None` entries (unparseable or
/// missing answers) count as wrong.
pub fn counting_accuracy(predicted: &[Option<u64>], truth: &[u64]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::InvalidParameter(format!(
            "{} predictions for {} ground-truth counts",
            predicted.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::InvalidParameter("no counting samples".into()));
    }
    let correct = predicted.iter().zip(truth).filter(|(p, t)| **p == Some(**t)).count();
    Ok(100.0 * correct as f64 / truth.len() as f64)
}

/// Scores counting samples against predictions joined on sample id. The
/// ground truth is the sample's own answer.
pub fn score_counting(
    samples: &[InstructionSample],
    preds: &BTreeMap<String, PredictionRecord>,
) -> Result<CountScore> {
    let mut score = CountScore::default();
    let mut predicted = Vec::new();
    let mut truth = Vec::new();
    for s in samples.iter().filter(|s| s.task == TaskKind::Count) {
        let gt = s
            .rounds
            .first()
            .map(|r| parse_count_answer(&r.response))
            .transpose()?
            .ok_or_else(|| Error::InvalidRecord(format!("{}: no rounds", s.sample_id)))?;
        let p = match preds.get(&s.sample_id) {
            None => {
                score.missing += 1;
                None
            }
            Some(rec) => {
                let v = parse_count_answer(&rec.raw_text).ok();
                score.unparseable += v.is_none() as usize;
                v
            }
        };
        score.correct += (p == Some(gt)) as usize;
        predicted.push(p);
        truth.push(gt);
    }
    score.n = truth.len();
    if score.n > 0 {
        score.accuracy = Some(counting_accuracy(&predicted, &truth)?);
    }
    Ok(score)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::Round;

    #[test]
    fn accuracy_examples() {
        assert_eq!(counting_accuracy(&[Some(1), Some(2)], &[1, 2]).unwrap(), 100.0);
        let v = counting_accuracy(&[Some(3), Some(5), Some(7)], &[3, 5, 8]).unwrap();
        assert!((v - 200.0 / 3.0).abs() < 1e-9);
        assert_eq!(format!("{v:.1}"), "66.7");
        assert_eq!(counting_accuracy(&[None, None], &[1, 2]).unwrap(), 0.0);
        assert!(counting_accuracy(&[None], &[1, 2]).is_err());
    }

    #[test]
    fn joins_on_sample_id() {
        let sample = |id: &str, n: u64| InstructionSample {
            sample_id: id.into(),
            task: TaskKind::Count,
            image_id: "im".into(),
            sketch_id: Some("k".into()),
            rounds: vec![Round { prompt: "COUNT x".into(), response: n.to_string() }],
            target_class: Some(1),
        };
        let samples = vec![sample("a", 3), sample("b", 5), sample("c", 7), sample("d", 2)];
        let preds: BTreeMap<_, _> = [("a", "There are 3."), ("b", "five"), ("c", "7")]
            .into_iter()
            .map(|(id, t)| (id.to_string(), PredictionRecord::text(id, t)))
            .collect();
        let s = score_counting(&samples, &preds).unwrap();
        assert_eq!((s.n, s.correct, s.unparseable, s.missing), (4, 2, 1, 1));
        assert_eq!(s.accuracy, Some(50.0));
    }
}
