use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("stationary truncation exceeded hard cap of {cap} states")]
    TruncationFailure { cap: usize },

    #[error("state {k} is outside the support of the distribution")]
    OutOfSupport { k: usize },

    #[error("bracket for E K^-_{m} did not reach width {tol} before horizon cap {cap}")]
    BracketTooWide { m: usize, tol: f64, cap: usize },

    #[error("matrix is not square: {rows} rows, row {row} has {cols} columns")]
    NotSquare { rows: usize, row: usize, cols: usize },

    #[error("non-finite cost entry at ({row}, {col})")]
    NonFiniteCost { row: usize, col: usize },

    #[error("mass mismatch: {left} vs {right}")]
    MassMismatch { left: f64, right: f64 },

    #[error("point {point} is not covered by the partition")]
    Uncovered { point: f64 },

    #[error("point {point} is not a site of the carrier space")]
    NotASite { point: f64 },

    #[error("incompatible carrier spaces")]
    IncompatibleSpaces,

    #[error("variance {variance} is below the mean {mean}; the overdispersed fit does not apply")]
    Underdispersed { mean: f64, variance: f64 },

    #[error("variance {variance} is not below the mean {mean}; the underdispersed fit does not apply")]
    Overdispersed { mean: f64, variance: f64 },

    #[error("fitted kill rate beta = {beta} is negative")]
    NegativeKillRate { beta: f64 },

    #[error("site {site} has zero intensity")]
    ZeroIntensity { site: usize },

    #[error("enumeration too large: {size} configurations (limit {limit})")]
    EnumerationTooLarge { size: usize, limit: usize },

    #[error("count cap {cap} leaves tail mass {tail} above {limit}")]
    CapTooSmall { cap: usize, tail: f64, limit: f64 },

    #[error("transport solver did not converge within {0} pivots")]
    TransportNoConvergence(usize),

    #[error("fit regime {fit} does not match the target's {target} regime")]
    RegimeMismatch { fit: &'static str, target: &'static str },

    #[error("unsupported: {0}")]
    Unsupported(String),
}

impl Error {
    /// Short machine-readable tag, used by the CLI error object.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::TruncationFailure { .. } => "truncation_failure",
            Error::OutOfSupport { .. } => "out_of_support",
            Error::BracketTooWide { .. } => "bracket_too_wide",
            Error::NotSquare { .. } => "not_square",
            Error::NonFiniteCost { .. } => "non_finite_cost",
            Error::MassMismatch { .. } => "mass_mismatch",
            Error::Uncovered { .. } => "uncovered_point",
            Error::NotASite { .. } => "not_a_site",
            Error::IncompatibleSpaces => "incompatible_spaces",
            Error::Underdispersed { .. } => "underdispersed",
            Error::Overdispersed { .. } => "overdispersed",
            Error::NegativeKillRate { .. } => "negative_beta",
            Error::ZeroIntensity { .. } => "zero_intensity",
            Error::EnumerationTooLarge { .. } => "enumeration_too_large",
            Error::CapTooSmall { .. } => "cap_too_small",
            Error::RegimeMismatch { .. } => "regime_mismatch",
            Error::TransportNoConvergence(_) => "transport_no_convergence",
            Error::Unsupported(_) => "unsupported",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
