use thiserror::Error;

/// Errors raised across the toolkit.
///
/// Variants split into two families: validation failures (bad inputs,
/// mismatched domains) and numerical failures (non-convergence, degenerate
/// importance weights). The CLI maps them to distinct exit codes.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain is disconnected under nearest-neighbour adjacency")]
    DisconnectedDomain,
    #[error("domain does not contain the origin")]
    OriginMissing,
    #[error("duplicate site {0:?}")]
    DuplicateSite(Vec<i64>),
    #[error("point {point:?} has dimension {found}, expected {expected}")]
    DimensionMismatch {
        point: Vec<i64>,
        expected: usize,
        found: usize,
    },
    #[error("domain has no sites")]
    EmptyDomain,
    #[error("dimension must be positive")]
    ZeroDimension,
    #[error("invalid law parameters: eta = {eta}, D = {dcoef} (both must be positive and finite)")]
    InvalidLaw { eta: f64, dcoef: f64 },
    #[error("argument must be positive, got {0}")]
    NonPositiveArgument(f64),
    #[error("argument {0} outside the open unit interval")]
    ArgumentOutOfRange(f64),
    #[error("scale factor must be positive and finite, got {0}")]
    NonPositiveScale(f64),
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("invalid field: {0}")]
    InvalidField(String),
    #[error("non-positive conductance {value} on edge {edge}")]
    NonPositiveWeight { edge: usize, value: f64 },
    #[error("objects live on different domains")]
    DomainMismatch,
    #[error("fields live on different domains")]
    FieldMismatch,
    #[error("epsilon {eps} must be below the minimal reference weight {min_weight}")]
    EpsilonTooLarge { eps: f64, min_weight: f64 },
    #[error("unsupported target set: {0}")]
    UnsupportedSetShape(String),
    #[error("domain has {sites} sites; brute force supports at most {max}")]
    DomainTooLarge { sites: usize, max: usize },
    #[error("unsupported domain for this method: {0}")]
    UnsupportedDomain(String),
    #[error("no convergence after {iterations} iterations: {detail}")]
    NonConvergence { iterations: usize, detail: String },
    #[error("degenerate importance weights: effective sample size {ess:.3} < {min}")]
    DegenerateWeights { ess: f64, min: f64 },
    #[error("quadrature failed: {0}")]
    Quadrature(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl Error {
    /// True for failures of a numerical method rather than of its inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. } | Error::DegenerateWeights { .. } | Error::Quadrature(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
