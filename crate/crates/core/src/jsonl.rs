//! Line-delimited JSON manifests.
//!
//! Manifests written by the pipeline start with a header line of the form
//! `{"sketchforge_header": {...}}` carrying the run seed and configuration.
//! Readers skip such lines, so hand-written manifests without a header are
//! accepted too.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub const HEADER_KEY: &str = "sketchforge_header";

fn is_header(line: &str) -> bool {
    line.trim_start()
        .strip_prefix('{')
        .map(|rest| rest.trim_start().starts_with(&format!("\"{HEADER_KEY}\"")))
        .unwrap_or(false)
}

pub fn parse_jsonl<T: DeserializeOwned>(text: &str, origin: &Path) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || is_header(line) {
            continue;
        }
        let value = serde_json::from_str(line).map_err(|source| Error::Json {
            path: origin.to_path_buf(),
            line: i + 1,
            source,
        })?;
        out.push(value);
    }
    Ok(out)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut text = String::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        text.push_str(&line);
        text.push('\n');
    }
    parse_jsonl(&text, path)
}

/// Serializes `records` one per line, optionally preceded by a header line.
pub fn to_jsonl_bytes<T: Serialize>(
    header: Option<&serde_json::Value>,
    records: &[T],
) -> Vec<u8> {
    let mut buf = Vec::new();
    if let Some(h) = header {
        let line = serde_json::json!({ HEADER_KEY: h });
        serde_json::to_writer(&mut buf, &line).expect("header serializes");
        buf.push(b'\n');
    }
    for r in records {
        serde_json::to_writer(&mut buf, r).expect("record serializes");
        buf.push(b'\n');
    }
    buf
}

pub fn write_jsonl<T: Serialize>(
    path: &Path,
    header: Option<&serde_json::Value>,
    records: &[T],
) -> Result<()> {
    let bytes = to_jsonl_bytes(header, records);
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}
