//! Crate-wide error type.
//!
//! Variants are grouped by what the caller can do about them: bad inputs
//! (`InvalidParameter`, `Precondition`, `DimensionMismatch`), malformed files
//! (`Format`, `MalformedObj`, `Io`), and operations that ran but could not
//! produce a result (`EmptyMesh`, `Numerical`).

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter value is outside its documented domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A documented call precondition does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Binary file does not match the expected layout.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    /// Text mesh file could not be parsed.
    #[error("malformed OBJ at line {line}: {message}")]
    MalformedObj { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Two grids/meshes that must share a shape do not.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// The operation is well-posed only on a non-empty surface.
    #[error("empty mesh: {0}")]
    EmptyMesh(String),

    /// The computation ran but produced no usable result (divergence, NaN, ...).
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
