use thiserror::Error;

/// Errors raised across the library.
///
/// Variants are grouped loosely by the layer that raises them; callers that
/// need an exit-code style split use [`Error::is_validation`].
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("cannot parse specification `{spec}`: {reason}")]
    Parse { spec: String, reason: String },

    #[error("lattice window is empty")]
    EmptyWindow,

    #[error("no subsample translate fits inside the region")]
    EmptySubsampleSet,

    #[error("degenerate subsampling: {count} subsample(s), at least 2 required")]
    DegenerateSubsampling { count: usize },

    #[error("sample does not cover site {site:?} of the region")]
    MissingSites { site: Vec<i64> },

    #[error("statistic undefined at {point:?}: {reason}")]
    StatisticDomain { point: Vec<f64>, reason: String },

    #[error("series did not converge before the truncation cap {cap}")]
    NonConvergent { cap: usize },

    #[error("quadrature budget exceeded: {0}")]
    QuadratureBudgetExceeded(String),

    #[error("unsupported shape for this operation: {0}")]
    UnsupportedShape(String),

    #[error("bias constant for nonlinear statistics in d = 1 is not supported")]
    UnsupportedD1Nonlinear,

    #[error("bias constant is zero; optimal scaling is undefined")]
    ZeroBiasConstant,

    #[error("need at least {required} candidate scales, got {got}")]
    InsufficientCandidates { required: usize, got: usize },

    #[error("covariance matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("window of {sites} sites exceeds the factorization cap of {cap}")]
    WindowTooLarge { sites: usize, cap: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{context}: {message}")]
    Io { context: String, message: String },
}

impl Error {
    /// True for errors caused by bad user input rather than a failed computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::DimensionMismatch { .. }
                | Error::InvalidParameter(_)
                | Error::Parse { .. }
                | Error::Config(_)
                | Error::InsufficientCandidates { .. }
        )
    }

    /// Short machine-readable code used in NA rows of study tables.
    pub fn code(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::Parse { .. } => "parse",
            Error::EmptyWindow => "empty_window",
            Error::EmptySubsampleSet => "empty_subsample_set",
            Error::DegenerateSubsampling { .. } => "degenerate_subsampling",
            Error::MissingSites { .. } => "missing_sites",
            Error::StatisticDomain { .. } => "statistic_domain",
            Error::NonConvergent { .. } => "non_convergent",
            Error::QuadratureBudgetExceeded(_) => "quadrature_budget",
            Error::UnsupportedShape(_) => "unsupported_shape",
            Error::UnsupportedD1Nonlinear => "unsupported_d1_nonlinear",
            Error::ZeroBiasConstant => "zero_bias_constant",
            Error::InsufficientCandidates { .. } => "insufficient_candidates",
            Error::NotPositiveDefinite => "not_positive_definite",
            Error::WindowTooLarge { .. } => "window_too_large",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn parse(spec: &str, reason: impl Into<String>) -> Self {
        Error::Parse {
            spec: spec.to_string(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(context: impl Into<String>, err: impl std::fmt::Display) -> Self {
        Error::Io {
            context: context.into(),
            message: err.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
