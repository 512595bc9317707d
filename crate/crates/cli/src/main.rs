//! `owns`: run spectra, parameter selection, error studies and marches from a
//! config file.
//!
//! Settings resolve as flag > environment (`OWNS_CONFIG`, `OWNS_OUT`,
//! `OWNS_SEED`, `OWNS_THREADS`, `OWNS_TIMING`) > config file.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::commands::{cmd_march, cmd_select, cmd_spectrum, cmd_study, ensure_dir, Outcome, Run};
use crate::config::{StudyConfig, SCHEMA_VERSION};
use crate::error::{CliError, ErrorReport};

#[derive(Parser)]
#[command(name = "owns", version, about = "One-way marching filter studies")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Classified spectrum at the inlet station.
    Spectrum(Common),
    /// Recursion parameters and their objectives over the Nβ grid.
    Select(Common),
    /// Error study over (Nβ, selector, method).
    Study(Common),
    /// Spatial march with parameter tracking.
    March(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long, env = "OWNS_CONFIG")]
    config: PathBuf,
    #[arg(long, env = "OWNS_OUT")]
    out: Option<PathBuf>,
    #[arg(long, env = "OWNS_SEED")]
    seed: Option<u64>,
    #[arg(long, env = "OWNS_THREADS")]
    threads: Option<usize>,
    /// Fill wall-clock columns (makes CSV bodies run-dependent).
    #[arg(long, env = "OWNS_TIMING")]
    timing: bool,
}

impl Cmd {
    fn parts(&self) -> (&'static str, &Common) {
        match self {
            Cmd::Spectrum(c) => ("spectrum", c),
            Cmd::Select(c) => ("select", c),
            Cmd::Study(c) => ("study", c),
            Cmd::March(c) => ("march", c),
        }
    }
}

fn execute(cmd: &Cmd) -> Result<(), CliError> {
    let (name, common) = cmd.parts();
    let cfg = StudyConfig::load(&common.config)?;
    let out = common
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .ok_or_else(|| CliError::Config("no output directory (use --out, OWNS_OUT or output_dir)".into()))?;
    let seed = common.seed.or(cfg.selector.seed).unwrap_or(0);
    let threads = common.threads.or(cfg.threads);
    if threads == Some(0) {
        return Err(CliError::Config("threads must be at least 1".into()));
    }
    if let Some(n) = threads {
        // fails only if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    ensure_dir(&out)?;
    let run = Run { cfg, out, seed, timing: common.timing };
    let t0 = Instant::now();
    log::info!("{name}: config {}, seed {seed}", common.config.display());
    let Outcome { files, summary } = match cmd {
        Cmd::Spectrum(_) => cmd_spectrum(&run)?,
        Cmd::Select(_) => cmd_select(&run)?,
        Cmd::Study(_) => cmd_study(&run)?,
        Cmd::March(_) => cmd_march(&run)?,
    };
    let meta = json!({
        "tool": "owns",
        "version": env!("CARGO_PKG_VERSION"),
        "command": name,
        "schema_version": SCHEMA_VERSION,
        "config_path": common.config,
        "seed": seed,
        "threads": rayon::current_num_threads(),
        "timing": run.timing,
        "created": chrono::Utc::now().to_rfc3339(),
        "wall_ms": t0.elapsed().as_secs_f64() * 1e3,
        "outputs": files.clone(),
        "summary": summary,
        "config": run.cfg,
    });
    std::fs::write(run.out.join("metadata.json"), serde_json::to_string_pretty(&meta)? + "\n")?;
    log::info!("{name}: wrote {} files to {}", files.len(), run.out.display());
    Ok(())
}

fn fail(r: ErrorReport) -> ExitCode {
    eprintln!("{}", serde_json::to_string(&r).unwrap_or_else(|_| r.message.clone()));
    ExitCode::from(r.exit_code as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail(ErrorReport { error: "usage", message: e.to_string(), exit_code: 2 }),
    };
    match execute(&cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.report()),
    }
}
