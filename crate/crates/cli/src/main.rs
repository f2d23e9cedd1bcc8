//! `gapweaver`: file-based runs of the gap-soliton pipeline.
//!
//! Exit status: 0 on success, 1 when a computation fails, 2 on usage errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;

use config::*;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Run(gapweaver_core::Error),
    Incomplete(String),
}

impl From<gapweaver_core::Error> for CliError {
    fn from(e: gapweaver_core::Error) -> Self {
        match e {
            gapweaver_core::Error::InvalidInput(m) | gapweaver_core::Error::InvalidPotential(m) => CliError::Usage(m),
            other => CliError::Run(other),
        }
    }
}

#[derive(Parser)]
#[command(name = "gapweaver", version, about = "Gap solitons in separable 2D periodic potentials")]
#[command(arg_required_else_help = true)]
struct Cli {
    /// `one-minus-cos`, `zero`, or a JSON potential descriptor file.
    #[arg(long, global = true, default_value = "one-minus-cos")]
    potential: String,
    /// Grid points per period for the 1D Bloch problems.
    #[arg(long, global = true, default_value_t = 512)]
    grid_n: usize,
    /// Residual tolerance of the Newton solves.
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// 1D bands and the 2D diagram along G -> X -> M -> G.
    Bands(BandsArgs),
    /// Locate the coupling where the first gap opens.
    Bifurcate(BifurcateArgs),
    /// The eleven coupled-mode constants.
    Coeffs(CoeffsArgs),
    /// Stationary envelope of one symmetry class.
    Solve(SolveArgs),
    /// Follow a solution in Omega.
    Continue(ContinueArgs),
    /// Small eigenvalues of the linearisation against the box size.
    DiagKernel(DiagKernelArgs),
    /// Convergence of full solutions to the envelope approximation in eps.
    VerifyEps(VerifyEpsArgs),
    /// Envelope time evolution, or tracking of the full equation.
    Evolve(EvolveArgs),
    /// Non-resonance minimum over band tuples.
    Nonres(NonresArgs),
    /// Re-execute a saved run configuration.
    Run {
        config: PathBuf,
    },
}

fn threads_from_env() -> Result<(), CliError> {
    match std::env::var("GAPWEAVER_THREADS") {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("GAPWEAVER_THREADS must be a positive integer, got '{v}'")))?;
            gapweaver_core::linalg::set_threads(n.max(1));
            Ok(())
        }
        Err(_) => {
            gapweaver_core::linalg::set_threads(1);
            Ok(())
        }
    }
}

fn load_config(path: &PathBuf) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = threads_from_env().and_then(|_| {
        let cfg = match cli.command {
            Cmd::Run { config } => load_config(&config)?,
            other => {
                let command = match other {
                    Cmd::Bands(a) => CommandConfig::Bands(a),
                    Cmd::Bifurcate(a) => CommandConfig::Bifurcate(a),
                    Cmd::Coeffs(a) => CommandConfig::Coeffs(a),
                    Cmd::Solve(a) => CommandConfig::Solve(a),
                    Cmd::Continue(a) => CommandConfig::Continue(a),
                    Cmd::DiagKernel(a) => CommandConfig::DiagKernel(a),
                    Cmd::VerifyEps(a) => CommandConfig::VerifyEps(a),
                    Cmd::Evolve(a) => CommandConfig::Evolve(a),
                    Cmd::Nonres(a) => CommandConfig::Nonres(a),
                    Cmd::Run { .. } => unreachable!(),
                };
                RunConfig { potential: cli.potential, grid_n: cli.grid_n, tol: cli.tol, out: cli.out, command }
            }
        };
        commands::run(&cfg)
    });
    match result {
        Ok(_) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(CliError::Incomplete(m)) => {
            eprintln!("incomplete: {m}");
            ExitCode::from(1)
        }
    }
}
