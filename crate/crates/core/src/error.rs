use crate::conic::{Residuals, SolverStatus};
use crate::moments::MomentKey;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("polynomial degree {degree} exceeds the cap of {cap}")]
    DegreeCap { degree: u32, cap: u32 },

    #[error("sizing error: {0}")]
    Sizing(String),

    #[error("moment {key} is outside the moment-matrix index set ({context})")]
    Degree { key: MomentKey, context: String },

    #[error(
        "conic solver stopped with status {status} (primal {:.3e}, dual {:.3e}, gap {:.3e})",
        residuals.primal, residuals.dual, residuals.gap
    )]
    Solver {
        status: SolverStatus,
        residuals: Residuals,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("moment {key} required for controller extraction is missing at grid index {time}")]
    MissingMoment { key: MomentKey, time: usize },

    #[error("{diverged} of {trials} trials diverged (first at trial {first_trial})")]
    Divergence {
        diverged: usize,
        trials: usize,
        first_trial: usize,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid problem: {0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable tag used in error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DegreeCap { .. } => "degree_cap",
            Error::Sizing(_) => "sizing",
            Error::Degree { .. } => "degree",
            Error::Solver { .. } => "solver",
            Error::Numerical(_) => "numerical",
            Error::MissingMoment { .. } => "missing_moment",
            Error::Divergence { .. } => "divergence",
            Error::Parse(_) => "parse",
            Error::Validation(_) => "validation",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
        }
    }

    /// Process exit code: 2 parse/validation, 3 sizing, 4 solver, 5 simulation.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse(_) | Error::Validation(_) => 2,
            Error::DegreeCap { .. }
            | Error::Sizing(_)
            | Error::Degree { .. }
            | Error::MissingMoment { .. } => 3,
            Error::Solver { .. } | Error::Numerical(_) => 4,
            Error::Divergence { .. } => 5,
            Error::Io(_) | Error::Csv(_) => 1,
        }
    }
}
