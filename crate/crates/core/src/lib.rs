//! Optimal control of the transient Stokes equations with control bounds and a
//! state constraint imposed pointwise in time.
//!
//! The discretization uses the MINI element (P1 plus cubic bubble velocity, P1
//! pressure) on a structured triangulation of the unit square, dG(0) in time and
//! piecewise constant controls. Discrete optimality systems are solved with a
//! primal-dual active set loop whose saddle point systems go through
//! block-diagonally preconditioned MINRES.
//!
//! Module map:
//!
//! * [`mesh`]: structured triangulations of `(0,1)^2`.
//! * [`linalg`]: CSR matrices, sparse LDL^T, MINRES, dense Cholesky.
//! * [`fem`]: finite element spaces, quadrature and assembly.
//! * [`functions`]: separable space-time data (sources, desired states, truths).
//! * [`stokes`]: dG(0) forward and adjoint sweeps, stationary Stokes.
//! * [`ocp`]: reduced Hessian, PDAS, preconditioner, KKT checks, dense oracle.
//! * [`bench`]: example problems, error norms, EOC, convergence studies.

pub mod bench;
pub mod fem;
pub mod functions;
pub mod linalg;
pub mod mesh;
pub mod ocp;
pub mod par;
pub mod stokes;

pub use fem::{Discretization, DiscreteSpaces, FemError};
pub use linalg::{CsrMatrix, DenseMatrix, Factorization, LinalgError};
pub use mesh::{MeshError, TriangleMesh};
pub use ocp::{pdas_solve, KktPoint, OcpProblem, OcpSpec, PdasConfig};
pub use stokes::{SpaceTimeField, TimeGrid};
