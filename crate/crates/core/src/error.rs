use thiserror::Error;

/// Errors raised across the analysis pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("Pauli product with {count} sigma_y factors is imaginary")]
    OddYCount { count: usize },

    #[error("site {site} out of range 1..={n_sites}")]
    SiteOutOfRange { site: usize, n_sites: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("eigensolver failed to converge: {0}")]
    ConvergenceFailure(String),

    #[error("ground state is degenerate (gap {gap:e} <= threshold {threshold:e})")]
    DegenerateGroundState { gap: f64, threshold: f64 },

    #[error("density matrix trace {trace} deviates from 1")]
    NotAState { trace: f64 },

    #[error("outcome {outcome} has zero reference probability but nonzero probability")]
    SupportMismatch { outcome: usize },

    #[error("orbit {orbit} coefficients differ by {spread:e} in eigenvector {vector}")]
    OrbitMismatch {
        vector: usize,
        orbit: usize,
        spread: f64,
    },

    #[error("group closure exceeded cap of {cap} elements")]
    CapExceeded { cap: usize },

    #[error("generator {generator} is not a symmetry: {reason}")]
    NotASymmetry { generator: usize, reason: String },

    #[error("negative mode energy squared {0:e}")]
    NegativeModeEnergy(f64),

    #[error("numerical instability: {0}")]
    NumericalInstability(String),

    #[error("quadratic form has a degenerate mode spectrum (relative gap {0:e})")]
    DegenerateQuadraticForm(f64),

    #[error("fermion sector dimension {dim} exceeds limit {max}")]
    SectorTooLarge { dim: usize, max: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    /// True for failures that come from the numerics rather than malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::ConvergenceFailure(_)
                | Error::DegenerateGroundState { .. }
                | Error::NotAState { .. }
                | Error::NegativeModeEnergy(_)
                | Error::NumericalInstability(_)
                | Error::DegenerateQuadraticForm(_)
                | Error::SupportMismatch { .. }
                | Error::OrbitMismatch { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
