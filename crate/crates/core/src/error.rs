use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("kronecker factor {factor} does not match the input layout")]
    KronFactor { factor: usize },
    #[error("materialized size {rows}x{cols} exceeds cap {cap}")]
    MaterializeCap { rows: usize, cols: usize, cap: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("degenerate cell {cell}: jacobian determinant {det:e} is not positive")]
    DegenerateCell { cell: usize, det: f64 },
    #[error("invalid cell id {0}")]
    InvalidCell(usize),
    #[error("geometry is not separable: {0}")]
    NonSeparable(String),
    #[error("singular pressure mass block on cell {cell}")]
    SingularBlock { cell: usize },
    #[error("dense factorization failed: {0}")]
    Factorization(String),
    #[error("power iteration produced a zero vector after {attempts} attempts")]
    EigenEstimate { attempts: usize },
    #[error("conjugate gradient met non-positive curvature {curvature:e}")]
    NotPositiveDefinite { curvature: f64 },
    #[error("local solve on patch {patch} failed: {source}")]
    LocalSolve {
        patch: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("malformed report: {0}")]
    Report(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
