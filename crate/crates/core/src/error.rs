use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix {name} is not positive definite (min eigenvalue {min_eigenvalue:e}, tolerance {tolerance:e})")]
    NotPositiveDefinite {
        name: &'static str,
        min_eigenvalue: f64,
        tolerance: f64,
    },

    #[error("matrix {name} is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPositiveSemidefinite { name: &'static str, min_eigenvalue: f64 },

    #[error("Hessian is singular or ill-conditioned (condition estimate {condition:e})")]
    IllConditioned { condition: f64 },

    #[error("F_r * I is rank deficient (sigma_min {sigma_min:e}, tolerance {tolerance:e})")]
    RankDeficient { sigma_min: f64, tolerance: f64 },

    #[error("closed-loop matrix is not Schur stable (spectral radius {spectral_radius})")]
    Unstable { spectral_radius: f64 },

    #[error("QP infeasible at step {step}: {detail}")]
    Infeasible { step: usize, detail: String },

    #[error("QP solver did not converge at step {step} after {iterations} iterations")]
    QpNotConverged { step: usize, iterations: usize },

    #[error("QP solution failed KKT certification (residual {residual:e} > {tolerance:e})")]
    KktCertification { residual: f64, tolerance: f64 },

    #[error("config error [{section}]: {message}")]
    Config { section: String, message: String },

    #[error("I/O error on {path}: {message}")]
    Io { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(context: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        Error::Dimension {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn config(section: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            section: section.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }

    /// True for failures of the numerics rather than of the input description.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. }
                | Error::IllConditioned { .. }
                | Error::RankDeficient { .. }
                | Error::Unstable { .. }
                | Error::Infeasible { .. }
                | Error::QpNotConverged { .. }
                | Error::KktCertification { .. }
        )
    }
}
