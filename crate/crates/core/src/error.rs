use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    Dimension {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix has a negative entry {value} at ({row}, {col})")]
    NegativeEntry { row: usize, col: usize, value: f64 },

    #[error("matrix is not Metzler: off-diagonal entry {value} at ({row}, {col})")]
    NotMetzler { row: usize, col: usize, value: f64 },

    #[error("expected a strictly negative diagonal, found {value} at index {index}")]
    NotNegativeDiagonal { index: usize, value: f64 },

    #[error("eigenvalue computation did not converge")]
    EigenFailure,

    #[error("spectral routes disagree: s = {abscissa}, rho = {rho}")]
    SpectralInconsistency { abscissa: f64, rho: f64 },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("state is outside the domain D: {0}")]
    OutsideDomain(String),

    #[error("ordered pair violates the cone order: {0}")]
    InvalidOrderedPair(String),

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("integrator left the domain at t = {time}: excursion {excursion:e}")]
    LeftDomain { time: f64, excursion: f64 },

    #[error("integrator step size underflow at t = {time} (h = {step:e})")]
    StepUnderflow { time: f64, step: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("unknown builtin scenario '{0}' (expected example1 or example2)")]
    UnknownBuiltin(String),
}

pub type Result<T> = std::result::Result<T, Error>;
