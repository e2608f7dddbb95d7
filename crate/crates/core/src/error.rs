use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parse error at position {position}: {message}")]
    Parse { position: usize, message: String },

    #[error("variable x{index} is out of range for {n_vars} variables")]
    VariableOutOfRange { index: usize, n_vars: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is singular to machine precision")]
    Singular,

    #[error("matrix is not Hermitian (asymmetry {asymmetry:.3e})")]
    NotHermitian { asymmetry: f64 },

    #[error("matrix is not in the upper half-plane (min eigenvalue of imaginary part {min_eig:.3e})")]
    NotInHalfPlane { min_eig: f64 },

    #[error("polynomial is not self-adjoint")]
    NotSelfAdjoint,

    #[error("quadrature did not converge: error estimate {achieved:.3e} after {panels} panels")]
    Quadrature { achieved: f64, panels: usize },

    #[error("fixed point iteration did not converge in {iterations} iterations (last displacement {last_displacement:.3e})")]
    NoConvergence { iterations: usize, last_displacement: f64 },

    #[error("subordination lost half-plane margin (min eigenvalue {min_eig:.3e})")]
    MarginLoss { min_eig: f64 },

    #[error("solver failed at t = {t}, eps = {eps}: {source}")]
    AtPoint {
        t: f64,
        eps: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("enumeration budget exceeded: {0}")]
    Budget(String),
}
