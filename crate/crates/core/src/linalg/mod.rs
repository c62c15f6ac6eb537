//! Sparse and dense linear algebra used by the discretization.

mod csr;
mod dense;
mod ldl;
pub mod matrix_market;
mod minres;
mod ordering;
pub mod vecops;

pub use csr::CsrMatrix;
pub use dense::{DenseCholesky, DenseMatrix};
pub use ldl::{Factorization, FactorizeOptions, SolveStats, SolveWorkspace};
pub use minres::{minres, MinresOptions, MinresOutcome};
pub use ordering::nested_dissection;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("index ({row}, {col}) out of range for {n_rows}x{n_cols} matrix")]
    IndexOutOfRange {
        row: usize,
        col: usize,
        n_rows: usize,
        n_cols: usize,
    },
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is not square ({0}x{1})")]
    NotSquare(usize, usize),
    #[error("matrix is not symmetric: |a_ij - a_ji| = {0:e}")]
    NotSymmetric(f64),
    #[error("matrix is singular: zero pivot at row {row} (original index {original})")]
    Singular { row: usize, original: usize },
    #[error("matrix is not SPD: non-positive pivot {value:e} at row {row}")]
    NotSpd { row: usize, value: f64 },
    #[error("solve residual {residual:e} exceeds tolerance {tolerance:e}")]
    ResidualExceeded { residual: f64, tolerance: f64 },
    #[error("operator failed symmetry probe: relative defect {0:e}")]
    NonSymmetricOperator(f64),
    #[error("preconditioner is not positive definite (<r, P^-1 r> = {0:e})")]
    IndefinitePreconditioner(f64),
    #[error("MINRES breakdown at iteration {0}")]
    Breakdown(usize),
}
