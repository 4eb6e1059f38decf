use anyhow::{bail, Context};
use serde_json::json;
use sketchforge_core::evalmetrics::{emit_report, MetricReport};

use super::{section, Ctx, Outcome};

/// Merges metric reports of one task into a single table.
pub fn report(ctx: &mut Ctx) -> anyhow::Result<Outcome> {
    let sec = section(&ctx.cfg.config.report, "report")?.clone();
    if sec.inputs.is_empty() {
        bail!("[report] has no inputs");
    }
    let mut reports = Vec::new();
    for p in &sec.inputs {
        let path = ctx.input(p)?;
        let text = std::fs::read_to_string(&path)?;
        let r: MetricReport = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        reports.push(r);
    }
    let rendered = emit_report(&reports)?;
    ctx.out.write(&format!("{}.csv", sec.name), rendered.csv.as_bytes())?;
    ctx.out.write(&format!("{}.md", sec.name), rendered.markdown.as_bytes())?;
    Ok(Outcome {
        summary: json!({ "reports": reports.len(), "task": reports[0].task }),
        ..Outcome::default()
    })
}
