//! Run configuration: everything a subcommand needs, in one serialisable
//! value, so that `gapweaver run <config.json>` repeats a run exactly.

use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// `one-minus-cos`, `zero`, or a path to a JSON potential descriptor.
    pub potential: String,
    pub grid_n: usize,
    pub tol: Option<f64>,
    pub out: PathBuf,
    pub command: CommandConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum CommandConfig {
    Bands(BandsArgs),
    Bifurcate(BifurcateArgs),
    Coeffs(CoeffsArgs),
    Solve(SolveArgs),
    Continue(ContinueArgs),
    DiagKernel(DiagKernelArgs),
    VerifyEps(VerifyEpsArgs),
    Evolve(EvolveArgs),
    Nonres(NonresArgs),
}

impl CommandConfig {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Bands(_) => "bands",
            Self::Bifurcate(_) => "bifurcate",
            Self::Coeffs(_) => "coeffs",
            Self::Solve(_) => "solve",
            Self::Continue(_) => "continue",
            Self::DiagKernel(_) => "diag-kernel",
            Self::VerifyEps(_) => "verify-eps",
            Self::Evolve(_) => "evolve",
            Self::Nonres(_) => "nonres",
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BifurcateArgs {
    /// Bracket `lo:hi` for the bifurcation coupling.
    #[arg(long, default_value = "0.05:0.5")]
    pub bracket: String,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandsArgs {
    /// Coupling; the bifurcation value when omitted.
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long, default_value = "0.05:0.5")]
    pub bracket: String,
    #[arg(long, default_value_t = 6)]
    pub n_eigs: usize,
    /// Points of the k-grid over [-1/2, 1/2].
    #[arg(long, default_value_t = 21)]
    pub k_points: usize,
    /// Richardson extrapolation with the doubled grid.
    #[arg(long)]
    pub extrapolate: bool,
    /// Points per leg of the 2D path G -> X -> M -> G.
    #[arg(long, default_value_t = 21)]
    pub diagram_points: usize,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoeffsArgs {
    /// Use this coupling instead of locating the bifurcation.
    #[arg(long)]
    pub eta0: Option<f64>,
    #[arg(long, default_value = "0.05:0.5")]
    pub bracket: String,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveArgs {
    #[arg(long)]
    pub class: String,
    #[arg(long)]
    pub omega: f64,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Half-width of the envelope box.
    #[arg(long = "D", default_value_t = 20.0)]
    pub d: f64,
    /// Grid spacing; class default when omitted.
    #[arg(long)]
    pub dy: Option<f64>,
    #[arg(long, default_value_t = 10)]
    pub homotopy_steps: usize,
    #[arg(long, default_value_t = 2)]
    pub coarsen: usize,
    /// Coefficient file from `coeffs`; computed when omitted.
    #[arg(long)]
    pub coeffs: Option<PathBuf>,
    #[arg(long, default_value = "0.05:0.5")]
    pub bracket: String,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinueArgs {
    /// Converged field to start from.
    #[arg(long)]
    pub from: PathBuf,
    /// `start:end:step` in Omega.
    #[arg(long)]
    pub omega_range: String,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagKernelArgs {
    #[arg(long)]
    pub field: PathBuf,
    /// Comma-separated box half-widths.
    #[arg(long = "D", default_value = "8,12,16,20")]
    pub d: String,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyEpsArgs {
    #[arg(long)]
    pub class: String,
    #[arg(long)]
    pub omega: f64,
    #[arg(long, default_value = "0.04,0.06,0.08,0.1")]
    pub eps: String,
    /// Resolution before the budget reduction.
    #[arg(long, default_value_t = 100)]
    pub points_per_period: usize,
    #[arg(long, default_value_t = gapweaver_core::elliptic2d::DEFAULT_CELL_BUDGET)]
    pub cell_budget: usize,
    /// Envelope support in y; measured when omitted.
    #[arg(long)]
    pub y_support: Option<f64>,
    #[arg(long, default_value = "0.05:0.5")]
    pub bracket: String,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveArgs {
    /// Envelope field to evolve in the coupled-mode equations.
    #[arg(long)]
    pub field: Option<PathBuf>,
    /// Final time; with `--track-eps` the slow horizon `T0`.
    #[arg(long = "T", default_value_t = 1.0)]
    pub t: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    /// Compare the full time-dependent equation with the envelope ansatz at
    /// this `eps` (needs `--class` and `--omega`).
    #[arg(long)]
    pub track_eps: Option<f64>,
    #[arg(long)]
    pub class: Option<String>,
    #[arg(long)]
    pub omega: Option<f64>,
    #[arg(long, default_value_t = 32)]
    pub points_per_period: usize,
    #[arg(long, default_value_t = 20.0)]
    pub y_support: f64,
    #[arg(long, default_value = "0.05:0.5")]
    pub bracket: String,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonresArgs {
    #[arg(long, default_value_t = 20)]
    pub n_max: usize,
    #[arg(long, default_value = "0.05:0.5")]
    pub bracket: String,
}
