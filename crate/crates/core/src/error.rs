use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("bit count {n} outside supported range 1..={limit}; use the lumped analysis for |x|-symmetric landscapes")]
    BitCount { n: u32, limit: u32 },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is singular at pivot column {column}")]
    Singular { column: usize },
    #[error("landscape is not a function of |x|: states {a} and {b} share a level but differ in fitness")]
    NotSymmetric { a: usize, b: usize },
    #[error(
        "operators are not mutually complementary ({violations} violating state/operator pairs)"
    )]
    NotComplementary { violations: usize },
    #[error("theorem violation: {0}")]
    TheoremViolation(String),
}
