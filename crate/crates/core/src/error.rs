use thiserror::Error;

/// Errors raised by measures, functionals and the lent-particle machinery.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("quadrature did not converge on [{lo}, {hi}]: estimated error {error:e} after {evaluations} evaluations")]
    Quadrature {
        lo: f64,
        hi: f64,
        error: f64,
        evaluations: usize,
    },

    #[error("non-finite value at atom {atom}: {detail}")]
    NonFinite { atom: usize, detail: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("atom index {index} out of range for configuration with {len} atoms")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("finite-difference step left the mark domain at atom {atom} after {shrinks} shrinks")]
    StepOutsideDomain { atom: usize, shrinks: u32 },

    #[error("carré du champ not positive semidefinite: min eigenvalue {min_eigenvalue:e}, trace {trace:e}")]
    NotPositiveSemidefinite { min_eigenvalue: f64, trace: f64 },

    #[error("combinatorial guard exceeded: {terms} terms requested, limit {limit}")]
    TooManyTerms { terms: u128, limit: u128 },

    #[error("too few samples: got {got}, need at least {need}")]
    TooFewSamples { got: usize, need: usize },

    #[error("{failed} of {total} samples failed (first: {first})")]
    SampleFailures {
        failed: usize,
        total: usize,
        first: String,
    },
}

impl Error {
    /// Attach an atom index to errors that do not already carry one.
    pub(crate) fn at_atom(self, atom: usize) -> Self {
        match self {
            Error::NonFinite { detail, .. } => Error::NonFinite { atom, detail },
            Error::StepOutsideDomain { shrinks, .. } => Error::StepOutsideDomain { atom, shrinks },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
