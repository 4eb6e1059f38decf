//! `sketchforge` command-line driver.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use sketchforge_core::datamodel::TaskKind;

use crate::commands::{Ctx, Outcome};
use crate::config::LoadedConfig;
use crate::manifest::{write_atomic, RunManifest, TOOL, VERSION};

const EXIT_VALIDATION: u8 = 2;
const EXIT_PARTIAL: u8 = 3;
const EXIT_INTERNAL: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "sketchforge", version, about = "Sketch-conditioned dataset curation and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML config, or a run manifest to repeat a previous run.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; does not affect outputs.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Overrides a config field, e.g. `--set mix.spec.min_per_class=150`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw instance sketches from photos and masks.
    SketchGen,
    /// Select pretraining images with tail balancing.
    CuratePretrain,
    /// Assemble per-class multi-source sketch pools.
    MixBuild,
    /// Audit sketch pools against the sampling rules.
    MixAudit,
    /// Build the instruction-tuning corpus.
    InstrBuild,
    /// Build the retrieval gallery and query set.
    GalleryBuild,
    /// Score predictions for one task.
    Score {
        #[arg(long, value_parser = parse_task)]
        task: Option<TaskKind>,
    },
    /// Merge metric reports into tables.
    Report,
}

fn parse_task(s: &str) -> Result<TaskKind, String> {
    s.parse().map_err(|e: sketchforge_core::Error| e.to_string())
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::SketchGen => "sketch-gen",
            Command::CuratePretrain => "curate-pretrain",
            Command::MixBuild => "mix-build",
            Command::MixAudit => "mix-audit",
            Command::InstrBuild => "instr-build",
            Command::GalleryBuild => "gallery-build",
            Command::Score { .. } => "score",
            Command::Report => "report",
        }
    }
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<sketchforge_core::Error>() {
            return match e {
                sketchforge_core::Error::Io { .. } => EXIT_INTERNAL,
                _ => EXIT_VALIDATION,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return EXIT_INTERNAL;
        }
    }
    EXIT_VALIDATION
}

fn report_error(kind: &str, code: u8, err: &anyhow::Error) -> ExitCode {
    let causes: Vec<String> = err.chain().skip(1).map(|c| c.to_string()).collect();
    let body = json!({
        "status": "error",
        "kind": kind,
        "exit_code": code,
        "message": err.to_string(),
        "causes": causes,
    });
    eprintln!("{body}");
    ExitCode::from(code)
}

fn dispatch(cmd: &Command, ctx: &mut Ctx) -> anyhow::Result<Outcome> {
    match cmd {
        Command::SketchGen => commands::sketch_gen(ctx),
        Command::CuratePretrain => commands::curate_pretrain(ctx),
        Command::MixBuild => commands::mix_build(ctx),
        Command::MixAudit => commands::mix_audit(ctx),
        Command::InstrBuild => commands::instr_build(ctx),
        Command::GalleryBuild => commands::gallery_build(ctx),
        Command::Score { task } => commands::score(ctx, *task),
        Command::Report => commands::report(ctx),
    }
}

fn execute(cmd: &Command, cfg: &LoadedConfig) -> anyhow::Result<(Outcome, PathBuf)> {
    let name = cmd.name();
    let mut ctx = Ctx::new(cfg, name)?;
    let outcome = dispatch(cmd, &mut ctx)?;
    if outcome.partial {
        ctx.out.mark_partial()?;
    }
    let status = if outcome.violations > 0 {
        "violations"
    } else if outcome.partial {
        "partial"
    } else {
        "ok"
    };
    let out_dir = ctx.out.dir().to_path_buf();
    let manifest = RunManifest {
        tool: TOOL.into(),
        version: VERSION.into(),
        subcommand: name.into(),
        base_dir: cfg.base_dir.clone(),
        config: serde_json::to_value(&cfg.config)?,
        status: status.into(),
        inputs: ctx.inputs,
        outputs: ctx.out.into_entries(),
        summary: outcome.summary.clone(),
    };
    let path = out_dir.join(RunManifest::file_name(name));
    let mut bytes = serde_json::to_vec_pretty(&manifest)?;
    bytes.push(b'\n');
    write_atomic(&path, &bytes)?;
    Ok((outcome, path))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let c = &cli.common;
    let loaded = config::locate(c.config.as_deref())
        .and_then(|p| config::load(&p, &c.overrides, c.seed, c.workers));
    let cfg = match loaded {
        Ok(cfg) => cfg,
        Err(e) => return report_error("validation", EXIT_VALIDATION, &e),
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cfg.config.workers {
        builder = builder.num_threads(w);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => return report_error("internal", EXIT_INTERNAL, &e.into()),
    };
    let run = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| pool.install(|| execute(&cli.command, &cfg))));
    match run {
        Ok(Ok((outcome, manifest))) => {
            let line = json!({
                "status": if outcome.violations > 0 { "violations" } else if outcome.partial { "partial" } else { "ok" },
                "manifest": manifest,
                "summary": outcome.summary,
            });
            if outcome.violations > 0 {
                eprintln!(
                    "{}",
                    json!({
                        "status": "error",
                        "kind": "validation",
                        "exit_code": EXIT_VALIDATION,
                        "message": format!("{} violation(s)", outcome.violations),
                        "manifest": manifest,
                    })
                );
                return ExitCode::from(EXIT_VALIDATION);
            }
            println!("{line}");
            if outcome.partial {
                ExitCode::from(EXIT_PARTIAL)
            } else {
                ExitCode::SUCCESS
            }
        }
        Ok(Err(e)) => {
            let code = exit_code_for(&e);
            report_error(if code == EXIT_INTERNAL { "internal" } else { "validation" }, code, &e)
        }
        Err(_) => report_error("internal", EXIT_INTERNAL, &anyhow::anyhow!("internal panic")),
    }
}
