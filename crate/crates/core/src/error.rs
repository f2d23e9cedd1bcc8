use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid potential: {0}")]
    InvalidPotential(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("numerical failure in {what} (residual {residual:.3e})")]
    NumericalFailure { what: String, residual: f64 },
    #[error("degenerate eigenvalue: {0}")]
    Degenerate(String),
    #[error("no sign change of the resonance residual on [{lo}, {hi}] (g = {g_lo:.3e}, {g_hi:.3e})")]
    NoBifurcation { lo: f64, hi: f64, g_lo: f64, g_hi: f64 },
    #[error("normalisation drift {0:.3e} exceeds tolerance")]
    Normalization(f64),
    #[error("no localized solution: {0}")]
    NoLocalizedSolution(String),
    #[error("tail contamination: profile still {residual:.3e} at r_max = {r_max}")]
    TailContamination { r_max: f64, residual: f64 },
    #[error("Newton diverged after {} iterations (last residual {:.3e})", .history.len(), .history.last().copied().unwrap_or(f64::NAN))]
    Divergence { history: Vec<f64> },
    #[error("singular linear system: {0}")]
    Singular(String),
    #[error("homotopy stalled at s = {last_s}")]
    HomotopyStalled { last_s: f64 },
    #[error("{0} exceeds the cell budget")]
    Budget(String),
    #[error("coverage: {0}")]
    Coverage(String),
    #[error("blow-up detected at t = {t}")]
    BlowUp { t: f64 },
    #[error("operator is not block-diagonalizable for this class: {0}")]
    NotBlockDiagonalizable(String),
    #[error("assembly guard: {0}")]
    Assembly(String),
    #[error("format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
