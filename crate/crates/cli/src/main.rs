//! `conductance-lab`: generate environments, run exact and Monte Carlo
//! experiments, and write reproducible reports.
//!
//! Exit codes: 0 success, 1 operational error, 2 validation failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use conductance_lab::ensemble::with_workers;
use conductance_lab::Result;

use commands::{Outcome, Sink};
use config::{Command, Execution, Manifest, RunConfig, MANIFEST};

const OUT_VAR: &str = "CONDUCTANCE_LAB_OUT";

#[derive(Parser)]
#[command(name = "conductance-lab", version, about = "Random walks among random conductances")]
struct Cli {
    /// Master seed; every random stream is derived from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = one per core). Never changes results.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory; the CONDUCTANCE_LAB_OUT variable takes precedence.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

fn out_dir(flag: Option<PathBuf>, fallback: PathBuf) -> PathBuf {
    match std::env::var_os(OUT_VAR) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => flag.unwrap_or(fallback),
    }
}

fn execute(cli: Cli) -> Result<Outcome> {
    let (cfg, exec) = match cli.command {
        Command::Rerun(r) => {
            let m = Manifest::read(&r.manifest)?;
            let exec = Execution {
                workers: cli.workers.unwrap_or(m.execution.workers),
                out: out_dir(cli.out, m.execution.out),
            };
            (m.config, exec)
        }
        command => {
            let cfg = RunConfig { seed: cli.seed.unwrap_or(1), command };
            let exec = Execution { workers: cli.workers.unwrap_or(0), out: out_dir(cli.out, PathBuf::from("out")) };
            (cfg, exec)
        }
    };
    let mut sink = Sink::new(&exec.out, &cfg)?;
    let (outcome, env_id) = with_workers(exec.workers, || commands::run(&cfg, &mut sink))?;
    let manifest = Manifest {
        tool: "conductance-lab".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: cfg,
        env_id,
        outputs: sink.outputs.clone(),
        execution: exec.clone(),
    };
    let file = std::fs::File::create(exec.out.join(MANIFEST))?;
    conductance_lab::harness::report::write_json(std::io::BufWriter::new(file), &manifest)?;
    Ok(outcome)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let name = cli.command.name();
    match execute(cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::ValidationFailed) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {name}: {e}");
            ExitCode::from(1)
        }
    }
}
