use thiserror::Error;

use crate::bounded::{Regime, SpikeTimeBounds};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model parameters: {0}")]
    InvalidModel(String),

    #[error("{0}")]
    Domain(String),

    #[error("theta neuron models must be reduced to the SNIPER form before design")]
    NeedsReduction,

    #[error("costate {lambda0} is not below the feasibility limit {limit}")]
    InfeasibleCostate { lambda0: f64, limit: f64 },

    #[error("spike time {target} outside attainable range [{lo}, {hi}]")]
    InfeasibleTime { target: f64, lo: f64, hi: f64 },

    #[error("spike time {target} outside feasible window {bounds:?}")]
    OutsideWindow { target: f64, bounds: SpikeTimeBounds },

    #[error("costate {lambda0} does not drive the control past the bound (saturation limit {limit})")]
    NoSaturation { lambda0: f64, limit: f64 },

    #[error("target {target} lies in regime {actual:?}, not {expected:?}")]
    RegimeMismatch {
        target: f64,
        expected: Regime,
        actual: Regime,
    },

    #[error("quadrature did not converge: estimate {estimate}, error bound {error_bound}")]
    Quadrature { estimate: f64, error_bound: f64 },

    #[error("no sign change on [{lo}, {hi}]: residuals {f_lo}, {f_hi}")]
    NoBracket { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    #[error("root finder stopped after {iterations} iterations at {x} (residual {residual})")]
    RootNoConvergence {
        x: f64,
        residual: f64,
        iterations: usize,
    },

    #[error("phase stalled at {theta} by t = {t} before reaching 2π")]
    Timeout { t: f64, theta: f64 },

    #[error("oracle did not meet the terminal tolerance: residual {residual}")]
    OracleNoConvergence { residual: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("malformed trajectory CSV at line {line}: {msg}")]
    Csv { line: usize, msg: String },
}
