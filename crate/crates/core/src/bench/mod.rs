//! Benchmark problems, error measurement and convergence studies.

mod errors;
mod examples;
pub mod manufactured;
mod reference;
mod study;

pub use errors::{eoc, error_vs_analytic, error_vs_reference, fitted_slope, prolong_control, restrict_control};
pub use examples::{example1, example2, example3, rough_profile, rough_weight, smooth, AnalyticTruth, ExampleDef, ExampleId};
pub use reference::{compute_reference, ReferenceSolution, FORMAT_VERSION};
pub use study::{run_convergence_study, validate_study, write_csv, write_json, RunRecord, StudyConfig, CSV_HEADER};

use thiserror::Error;

use crate::fem::FemError;
use crate::mesh::MeshError;
use crate::ocp::OcpError;
use crate::stokes::StokesError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BenchError {
    #[error("invalid study: {0}")]
    InvalidStudy(String),
    #[error("example {0} has no closed-form solution and needs a reference")]
    MissingReference(String),
    #[error("test grid (n = {test_n}, M = {test_m}) is not nested in reference grid (n = {ref_n}, M = {ref_m})")]
    NonNested {
        test_n: usize,
        test_m: usize,
        ref_n: usize,
        ref_m: usize,
    },
    #[error("{what}: expected length {expected}, got {found}")]
    Length {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("checksum mismatch: expected {expected}, found {found}")]
    Checksum { expected: String, found: String },
    #[error("i/o: {0}")]
    Io(String),
    #[error(transparent)]
    Ocp(#[from] OcpError),
    #[error(transparent)]
    Stokes(#[from] StokesError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}
