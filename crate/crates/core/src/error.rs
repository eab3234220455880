use thiserror::Error;

use crate::operator::Window;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A potential site sits within the guard tolerance of `tan`'s pole.
    #[error("singularity guard: site {site} is {distance:e} from the pole (tolerance {tolerance:e})")]
    SingularityGuard {
        site: i64,
        distance: f64,
        tolerance: f64,
    },

    #[error("ill-conditioned matrix: condition estimate {condition:e} exceeds cap {cap:e}")]
    IllConditioned { condition: f64, cap: f64 },

    #[error("eigensolver failed to converge after {iterations} iterations")]
    ConvergenceFailure { iterations: usize },

    #[error("potential value {value:e} at site {site} exceeds the diagonal limit {limit:e}")]
    PotentialOverflow { site: i64, value: f64, limit: f64 },

    #[error("kernel coefficient at offset {offset} has modulus {modulus:e}, not below e^(-rho|n|) = {bound:e}")]
    DecayViolation {
        offset: i64,
        modulus: f64,
        bound: f64,
    },

    #[error("kernel is not hermitian at offset {offset}")]
    SymmetryViolation { offset: i64 },

    #[error("kernel table line {line}: {message}")]
    KernelTable { line: usize, message: String },

    #[error("insufficient data: need {needed} distance classes, have {available}")]
    InsufficientData { needed: usize, available: usize },

    #[error("cannot cover an interval of {len} sites with windows of size {size}")]
    InfeasibleCover { len: usize, size: usize },

    #[error("patching hypotheses failed on {} sub-window(s): {windows:?}", windows.len())]
    HypothesisFailed { windows: Vec<Window> },

    #[error("truncation breach at kick {step}: boundary weight {leakage:e}")]
    TruncationBreach { step: usize, leakage: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
