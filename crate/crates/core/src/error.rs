use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = VfpError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum VfpError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    /// The weighted operator `A_h` has a kernel beyond the equilibrium
    /// direction (typically a checkerboard mode on an even mesh with a flat
    /// potential). The offending vector is returned, normalized in the
    /// weighted L2 norm.
    #[error("degenerate operator: kernel contains a vector orthogonal to sqrt(rho_inf) (first entries {:?})", &kernel[..kernel.len().min(4)])]
    DegenerateOperator { kernel: Vec<f64> },

    #[error("elliptic source violates the compatibility condition (defect {defect:e})")]
    Incompatible { defect: f64 },

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("linear solver did not converge: relative residual {residual:e} after {iterations} iterations")]
    NotConverged { residual: f64, iterations: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl VfpError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        VfpError::InvalidInput(msg.into())
    }

    pub(crate) fn shape(expected: impl ToString, found: impl ToString) -> Self {
        VfpError::ShapeMismatch {
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, action: &str, source: std::io::Error) -> Self {
        VfpError::Io {
            context: format!("{action} {}", path.into().display()),
            source,
        }
    }
}
