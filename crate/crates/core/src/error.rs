use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input data violates a structural invariant (ragged rows, unobserved animal, ...).
    #[error("invalid data: {0}")]
    Validation(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no finite maximum likelihood estimate: {0}")]
    NoFiniteMle(String),

    /// Tensor-product quadrature disagreed with its refinement by more than the tolerance.
    #[error(
        "quadrature did not converge at N={n}: coarse={coarse:e}, fine={fine:e}, \
         relative change {rel_change:e} exceeds {tolerance:e}"
    )]
    QuadratureNonConvergence {
        n: u64,
        coarse: f64,
        fine: f64,
        rel_change: f64,
        tolerance: f64,
    },

    #[error("non-finite kernel value at N={n}")]
    NonFinite { n: u64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}
