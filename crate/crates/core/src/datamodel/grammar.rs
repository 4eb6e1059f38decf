//! Answer grammars: how box lists and counts are written into responses and
//! read back out of free-form model output.

use std::sync::LazyLock;

use regex::Regex;

use super::boxes::{normalize_box, BoundingBox};
use super::records::PredictionRecord;
use crate::error::{Error, Result};

pub const DEFAULT_DECIMALS: usize = 2;

/// Values above this are read as absolute pixel coordinates.
const PIXEL_CUTOFF: f64 = 1.5;

const NUM: &str = r"[-+]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][-+]?\d+)?";

static TUPLE_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(
        r"\[\s*({NUM})\s*,\s*({NUM})\s*,\s*({NUM})\s*,\s*({NUM})\s*\]"
    ))
    .unwrap()
});

static INT_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"-?\d+(?:\.\d+)?").unwrap());

fn quantize(v: f64, decimals: usize) -> String {
    format!("{v:.decimals$}")
}

/// Writes boxes as `{[x1, y1, x2, y2], [...]}` with fixed precision, in input
/// order. Boxes that would collapse to zero extent once rounded are rejected,
/// since the answer would not parse back.
pub fn format_box_list(boxes: &[BoundingBox], decimals: usize) -> Result<String> {
    if boxes.is_empty() {
        return Err(Error::EmptyAnswer);
    }
    let mut parts = Vec::with_capacity(boxes.len());
    for b in boxes {
        let q: Vec<String> = b.coords().iter().map(|&c| quantize(c, decimals)).collect();
        let v: Vec<f64> = q.iter().map(|s| s.parse().unwrap()).collect();
        if v[0] >= v[2] || v[1] >= v[3] {
            return Err(Error::UnrepresentableBox(b.coords(), decimals));
        }
        parts.push(format!("[{}]", q.join(", ")));
    }
    Ok(format!("{{{}}}", parts.join(", ")))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParsedBox {
    Normalized(BoundingBox),
    /// Absolute pixel coordinates; needs the image size to normalize.
    Pixel([f64; 4]),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedBoxes {
    pub entries: Vec<ParsedBox>,
    /// Tuples found but rejected for inverted or out-of-range coordinates.
    pub dropped: usize,
}

impl ParsedBoxes {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The boxes already in normalized form, in order.
    pub fn normalized(&self) -> Vec<BoundingBox> {
        self.entries
            .iter()
            .filter_map(|e| match e {
                ParsedBox::Normalized(b) => Some(*b),
                ParsedBox::Pixel(_) => None,
            })
            .collect()
    }

    /// Normalizes pixel boxes against the image size. Returns the boxes in
    /// emission order and the total number dropped (parse-time drops plus
    /// pixel boxes falling outside the image).
    pub fn resolve(&self, width: u32, height: u32) -> (Vec<BoundingBox>, usize) {
        let mut dropped = self.dropped;
        let mut out = Vec::with_capacity(self.entries.len());
        for e in &self.entries {
            match e {
                ParsedBox::Normalized(b) => out.push(*b),
                ParsedBox::Pixel(abs) => match normalize_box(*abs, width, height) {
                    Ok(b) => out.push(b),
                    Err(_) => dropped += 1,
                },
            }
        }
        (out, dropped)
    }
}

/// Extracts every bracketed 4-tuple from `text`, in order. Never fails: text
/// with no tuples yields an empty result.
pub fn parse_box_list(text: &str) -> ParsedBoxes {
    let mut parsed = ParsedBoxes::default();
    for cap in TUPLE_RE.captures_iter(text) {
        let v: Vec<f64> = (1..=4).map(|i| cap[i].parse::<f64>().unwrap()).collect();
        let [x1, y1, x2, y2] = [v[0], v[1], v[2], v[3]];
        if v.iter().any(|c| *c > PIXEL_CUTOFF) {
            let ok = v.iter().all(|c| c.is_finite() && *c >= 0.0) && x1 < x2 && y1 < y2;
            if ok {
                parsed.entries.push(ParsedBox::Pixel([x1, y1, x2, y2]));
            } else {
                parsed.dropped += 1;
            }
        } else {
            match BoundingBox::new(x1, y1, x2, y2) {
                Ok(b) => parsed.entries.push(ParsedBox::Normalized(b)),
                Err(_) => parsed.dropped += 1,
            }
        }
    }
    parsed
}

/// First non-negative integer token in `text`.
pub fn parse_count_answer(text: &str) -> Result<u64> {
    INT_RE
        .find_iter(text)
        .map(|m| m.as_str())
        .filter(|tok| !tok.starts_with('-') && !tok.contains('.'))
        .find_map(|tok| tok.parse::<u64>().ok())
        .ok_or_else(|| Error::UnparseableCount(text.to_string()))
}

/// Probability of `yes`, renormalized over the two answer tokens when
/// log-probabilities are present, else read from the leading word.
pub fn parse_yes_probability(rec: &PredictionRecord) -> Result<f64> {
    if let (Some(ly), Some(ln)) = (rec.yes_logprob, rec.no_logprob) {
        if ly.is_finite() || ln.is_finite() {
            // exp(ly) / (exp(ly) + exp(ln)) written in a form that cannot overflow
            let d = ln - ly;
            return Ok(if d.is_nan() { 0.5 } else { 1.0 / (1.0 + d.exp()) });
        }
    }
    let word: String = rec
        .raw_text
        .trim_start_matches(|c: char| !c.is_alphanumeric())
        .chars()
        .take_while(|c| c.is_alphabetic())
        .collect::<String>()
        .to_lowercase();
    match word.as_str() {
        "yes" => Ok(1.0),
        "no" => Ok(0.0),
        _ => Err(Error::UnparseableSbir(rec.raw_text.clone())),
    }
}
