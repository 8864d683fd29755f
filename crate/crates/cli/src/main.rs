//! `asep-lab`: exact duality checks and simulations for the open ASEP.
//!
//! Exit codes: 0 the command ran (whatever the residuals), 1 invalid
//! configuration or failed computation, 2 a resource cap was hit.

mod commands;
mod config;
mod output;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use asep_core::Limits;
use clap::{Parser, Subcommand};

use crate::output::Outputs;

#[derive(Parser, Debug)]
#[command(name = "asep-lab", version, about = "Reverse-duality laboratory for the open ASEP")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON experiment config; the built-in demo (L = 4, N = 1) when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Residual threshold; overrides `experiment.tol`.
    #[arg(long, global = true, value_name = "X")]
    tol: Option<f64>,

    /// Base seed; overrides `experiment.seed`.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_name = "K")]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Manifold residuals, solved boundary parameters and shock rates.
    CheckManifold,
    /// Reverse duality, measure evolution, spectrum and XXZ checks.
    Verify,
    /// Exact evolved density profiles from both sides of the duality.
    Evolve,
    /// Stationary measure as a convex combination of shock measures.
    Invariant,
    /// Closed-form single-shock propagator against the matrix exponential.
    Propagator,
    /// Single-shock relaxation rates inside the spectrum of H.
    Spectrum,
    /// Similarity transform onto the XXZ chain.
    Xxz,
    /// Gillespie ensembles against exact references.
    Simulate,
}

impl Command {
    fn kind(self) -> &'static str {
        match self {
            Command::CheckManifold => "check-manifold",
            Command::Verify => "verify",
            Command::Evolve => "evolve",
            Command::Invariant => "invariant",
            Command::Propagator => "propagator",
            Command::Spectrum => "spectrum",
            Command::Xxz => "xxz",
            Command::Simulate => "simulate",
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => config::load(p)?,
        None => config::demo(),
    };
    if let Some(t) = cli.tol {
        cfg.experiment.tol = t;
    }
    if let Some(s) = cli.seed {
        cfg.experiment.seed = s;
    }
    if let Some(dir) = &cli.out {
        cfg.output.dir = dir.to_string_lossy().into_owned();
    }
    let kind = cli.command.kind();
    let res = config::resolve(cfg, kind)?;
    let limits = Limits::from_env();
    limits.check_sites(res.lattice.len())?;

    let mut out = Outputs::new(&res.config.output.formats);
    let mut body = || match cli.command {
        Command::CheckManifold => commands::check_manifold(&res, &mut out),
        Command::Verify => commands::verify(&res, &limits, &mut out),
        Command::Evolve => commands::evolve(&res, &limits, &mut out),
        Command::Invariant => commands::invariant(&res, &limits, &mut out),
        Command::Propagator => commands::propagator(&res, &limits, &mut out),
        Command::Spectrum => commands::spectrum(&res, &limits, &mut out),
        Command::Xxz => commands::xxz(&res, &limits, &mut out),
        Command::Simulate => commands::simulate(&res, &limits, &mut out),
    };
    let summary = match cli.threads {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .context("building thread pool")?
            .install(body)?,
        None => body()?,
    };
    let dir = PathBuf::from(&res.config.output.dir);
    out.write(&dir)?;
    // a closed stdout (e.g. piped into head) is not an error
    let mut stdout = std::io::stdout().lock();
    let _ = writeln!(stdout, "{kind}: {summary}");
    for name in out.names() {
        let _ = writeln!(stdout, "  wrote {}", dir.join(name).display());
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let capped = err
        .chain()
        .any(|c| c.downcast_ref::<asep_core::Error>().is_some_and(|e| e.is_resource_cap()));
    if capped {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
