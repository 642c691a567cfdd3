use thiserror::Error;

pub type Result<T> = std::result::Result<T, WittenError>;

#[derive(Debug, Error)]
pub enum WittenError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("degree {q} out of range for a {n}-dimensional torus")]
    DegreeOutOfRange { q: usize, n: usize },

    #[error("non-finite value {value} while sampling component {component}")]
    NonFinite { component: String, value: f64 },

    #[error("invalid Morse function: {0}")]
    InvalidFunction(String),

    #[error("not a Morse function: degenerate critical point at {coords:?} (Hessian eigenvalues {eigenvalues:?})")]
    Degenerate { coords: Vec<f64>, eigenvalues: Vec<f64> },

    #[error("critical point search failed: {0}")]
    CriticalSearch(String),

    #[error("resolution too coarse for this t: t * max|f(facet) - f(cell)| = {exponent:.1} exceeds {limit}")]
    Overflow { exponent: f64, limit: f64 },

    #[error("invalid deformation parameter t = {0}")]
    InvalidT(f64),

    #[error("dimension {dim} exceeds the dense limit {limit}")]
    TooLarge { dim: usize, limit: usize },

    #[error("invalid spectrum request: {0}")]
    InvalidRequest(String),

    #[error("inconclusive count: unconverged eigenvalue {value} within 10% of threshold {threshold}")]
    InconclusiveCount { value: f64, threshold: f64 },

    #[error("eigensolver did not converge: {converged} of {wanted} pairs after {iterations} restarts")]
    NotConverged { converged: usize, wanted: usize, iterations: usize },

    #[error("trial form does not fit: cutoff cube of half-width {half_width} needs period > {needed}, minimal period is {min_period}")]
    TrialFormDoesNotFit { half_width: f64, needed: f64, min_period: f64 },

    #[error("Betti numbers disagree: spectral {spectral:?} vs rank {rank:?}")]
    BettiMismatch { spectral: Vec<usize>, rank: Vec<usize> },

    #[error("spectral window {lambda} is not inside a gap for degree {q} (eigenvalue {eigenvalue} nearby)")]
    NotInGap { lambda: f64, q: usize, eigenvalue: f64 },

    #[error("lost trial form: projector rank {rank} < {forms} trial forms at t = {t}")]
    LostTrialForm { rank: usize, forms: usize, t: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
