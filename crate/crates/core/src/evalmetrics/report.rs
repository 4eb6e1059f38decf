use serde::{Deserialize, Serialize};

use crate::datamodel::TaskKind;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub name: String,
    pub value: Option<f64>,
}

/// Scores of one (image dataset, sketch source) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub image_dataset: String,
    pub sketch_source: String,
    pub metrics: Vec<Metric>,
    pub n: usize,
    #[serde(default)]
    pub unparseable: usize,
    #[serde(default)]
    pub missing: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub task: TaskKind,
    pub model: String,
    pub rows: Vec<ReportRow>,
}

impl MetricReport {
    pub fn validate(&self) -> Result<()> {
        for row in &self.rows {
            for m in &row.metrics {
                if let Some(v) = m.value {
                    if !(0.0..=100.0).contains(&v) {
                        return Err(Error::InvalidRecord(format!(
                            "{} {}/{}: {} = {v} outside [0, 100]",
                            self.model, row.image_dataset, row.sketch_source, m.name
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

pub const AVG_COLUMN: &str = "Avg.";

/// Rendered tables for a set of reports on one task.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedReport {
    pub csv: String,
    pub markdown: String,
}

fn push_unique(list: &mut Vec<String>, item: &str) {
    if !list.iter().any(|x| x == item) {
        list.push(item.to_string());
    }
}

fn fmt_value(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.1}"))
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One row per (model, metric); one column per (image dataset, sketch
/// source) followed by an average column per image dataset. The average is
/// the mean of the defined cells of the group.
pub fn emit_report(reports: &[MetricReport]) -> Result<RenderedReport> {
    let task = reports
        .first()
        .ok_or_else(|| Error::InvalidParameter("no reports to render".into()))?
        .task;
    if let Some(r) = reports.iter().find(|r| r.task != task) {
        return Err(Error::InvalidParameter(format!(
            "mixed tasks: {task} and {} ({})",
            r.task, r.model
        )));
    }
    let mut datasets: Vec<String> = Vec::new();
    let mut sources: Vec<(String, Vec<String>)> = Vec::new();
    let mut metric_names: Vec<String> = Vec::new();
    for r in reports {
        r.validate()?;
        for row in &r.rows {
            if !datasets.contains(&row.image_dataset) {
                datasets.push(row.image_dataset.clone());
                sources.push((row.image_dataset.clone(), Vec::new()));
            }
            let entry = sources.iter_mut().find(|(d, _)| *d == row.image_dataset).expect("inserted above");
            push_unique(&mut entry.1, &row.sketch_source);
            for m in &row.metrics {
                push_unique(&mut metric_names, &m.name);
            }
        }
    }

    let mut header = vec!["model".to_string(), "metric".to_string()];
    for (d, srcs) in &sources {
        for s in srcs {
            header.push(format!("{d}: {s}"));
        }
        header.push(format!("{d}: {AVG_COLUMN}"));
    }
    let mut table: Vec<Vec<String>> = Vec::new();
    for r in reports {
        for name in &metric_names {
            let mut cells = vec![r.model.clone(), name.clone()];
            for (d, srcs) in &sources {
                let mut defined = Vec::new();
                for s in srcs {
                    let mut hits = r.rows.iter().filter(|row| row.image_dataset == *d && row.sketch_source == *s);
                    let row = hits.next();
                    if hits.next().is_some() {
                        return Err(Error::InvalidRecord(format!("{}: duplicate row {d}/{s}", r.model)));
                    }
                    let v = row.and_then(|row| row.metrics.iter().find(|m| m.name == *name)).and_then(|m| m.value);
                    defined.extend(v);
                    cells.push(fmt_value(v));
                }
                let avg = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
                cells.push(fmt_value(avg));
            }
            table.push(cells);
        }
    }

    let mut csv = String::new();
    for line in std::iter::once(&header).chain(&table) {
        let fields: Vec<String> = line.iter().map(|f| csv_field(f)).collect();
        csv.push_str(&fields.join(","));
        csv.push('\n');
    }

    let widths: Vec<usize> = (0..header.len())
        .map(|c| std::iter::once(&header).chain(&table).map(|r| r[c].chars().count()).max().unwrap_or(0).max(3))
        .collect();
    let render = |cells: &[String]| -> String {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i < 2 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        format!("| {} |\n", padded.join(" | "))
    };
    let mut markdown = format!("Task: {task}\n\n");
    markdown.push_str(&render(&header));
    let rule: Vec<String> = widths
        .iter()
        .enumerate()
        .map(|(i, w)| if i < 2 { "-".repeat(*w) } else { format!("{}:", "-".repeat(w - 1)) })
        .collect();
    markdown.push_str(&format!("| {} |\n", rule.join(" | ")));
    for row in &table {
        markdown.push_str(&render(row));
    }
    Ok(RenderedReport { csv, markdown })
}
