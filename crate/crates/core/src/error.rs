use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: expected {expected}, got {got}")]
    DimensionMismatch {
        op: &'static str,
        expected: String,
        got: String,
    },

    #[error("index ({row}, {col}) out of range for {nrows}x{ncols} matrix")]
    IndexOutOfRange {
        row: usize,
        col: usize,
        nrows: usize,
        ncols: usize,
    },

    #[error("invalid CSR structure: {0}")]
    InvalidStructure(String),

    #[error("matrix is not {expected} triangular: stored entry at ({row}, {col})")]
    NotTriangular {
        expected: &'static str,
        row: usize,
        col: usize,
    },

    #[error("triangular matrix has a zero or missing diagonal at row {row}")]
    SingularTriangular { row: usize },

    #[error("matrix is singular to working precision at pivot column {col}")]
    Singular { col: usize },

    #[error("dense reference is capped at n <= {cap}, got {n}")]
    SizeCap { n: usize, cap: usize },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("backward requires a scalar root, node {node} holds a {kind}")]
    NonScalarRoot { node: usize, kind: &'static str },

    #[error("{op} expects a {expected} operand, got {got}")]
    WrongKind {
        op: &'static str,
        expected: &'static str,
        got: &'static str,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("matrix market parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn dim_mismatch(op: &'static str, expected: impl ToString, got: impl ToString) -> Error {
    Error::DimensionMismatch {
        op,
        expected: expected.to_string(),
        got: got.to_string(),
    }
}
