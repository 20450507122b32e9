use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("phase space dimension must be even and at least 2, got {0}")]
    OddDimension(usize),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not symmetric; offending entries (row, col, |a_ij - a_ji|): {}", fmt_entries(.entries))]
    NotSymmetric { entries: Vec<(usize, usize, f64)> },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("quadratic form is degenerate: smallest singular value {sigma_min:e} <= {tol:e}")]
    Degenerate { sigma_min: f64, tol: f64 },

    #[error("linear field is not Liouville (residual {0:e})")]
    NotLiouville(f64),

    #[error("matrix is not symplectic (residual {0:e})")]
    NotSymplectic(f64),

    #[error("spectrum of J0*A violates the symmetry lambda -> -lambda, conj: {0}")]
    SpectralSymmetry(String),

    #[error("resonant elliptic spectrum: frequency {mu} occurs {count} times")]
    Resonant { mu: f64, count: usize },

    #[error("unsupported input: {0}")]
    Unsupported(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("unresolved: {0}")]
    Unresolved(String),

    #[error("numerical breakdown: {0}")]
    Numerical(String),

    #[error("Newton iteration did not converge: residual {residual:e} after {iterations} iterations")]
    NoConvergence { residual: f64, iterations: usize },

    #[error("too large: {0}")]
    TooLarge(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for outcomes where the method could not certify an answer.
    pub fn is_unresolved(&self) -> bool {
        matches!(self, Error::Unresolved(_) | Error::Numerical(_) | Error::NoConvergence { .. })
    }
}

fn fmt_entries(entries: &[(usize, usize, f64)]) -> String {
    entries.iter().map(|(i, j, d)| format!("({i}, {j}, {d:e})")).collect::<Vec<_>>().join(", ")
}
