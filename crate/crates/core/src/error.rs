use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library can report.
///
/// Variants split into two families that the CLI maps onto different exit
/// codes: bad input (parameters, files, grids) and numerical failure
/// (truncation bounds, undefined ratios). See [`Error::is_numerical`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("invalid frequency grid: {0}")]
    InvalidGrid(String),

    #[error("grid too coarse: {points_per_sigma:.2} points per sigma, need at least {required}")]
    Resolution {
        points_per_sigma: f64,
        required: f64,
    },

    #[error("spectral objects live on different frequency grids")]
    GridMismatch,

    #[error("invalid spectral state: {0}")]
    InvalidState(String),

    #[error("mixture probabilities sum to {sum}, expected 1")]
    ProbabilitySum { sum: f64 },

    #[error("overlap has imaginary part {imag:e}; inputs are corrupted")]
    ComplexResidue { imag: f64 },

    #[error("undefined visibility: R_C(0)=0")]
    UndefinedVisibility,

    #[error("correction factor undefined at zero probe intensity without dark counts (limit value is 1)")]
    LimitUndefined,

    #[error("small-amplitude expansion requires xi = 1, got xi = {xi}")]
    ExpansionDomain { xi: f64 },

    #[error(
        "coherent-state truncation tail {tail:e} exceeds tolerance {tolerance:e}; use n_max >= {required_n_max}"
    )]
    Truncation {
        tail: f64,
        tolerance: f64,
        required_n_max: usize,
    },

    #[error("cannot normalize visibility: no coincidences recorded in the unmatched setting")]
    CannotNormalize,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),

    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the computation itself rather than of its input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::ComplexResidue { .. }
                | Error::UndefinedVisibility
                | Error::LimitUndefined
                | Error::Truncation { .. }
                | Error::CannotNormalize
                | Error::Numerical(_)
        )
    }

    pub(crate) fn param(name: &'static str, value: f64, reason: &'static str) -> Self {
        Error::InvalidParameter {
            name,
            value,
            reason,
        }
    }
}
