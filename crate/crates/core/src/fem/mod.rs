//! MINI velocity (P1 plus cubic bubble), P1 pressure and P0 control spaces on
//! [`TriangleMesh`], with assembly of every spatial matrix and vector.

mod assembly;
mod norms;
pub mod quadrature;
mod spaces;

pub use assembly::{
    assemble_control_coupling, assemble_control_mass, assemble_divergence, assemble_load,
    assemble_pressure_mean, assemble_timeslab_load, assemble_velocity_mass,
    assemble_velocity_stiffness, assemble_weight_vector, SeparableLoad, DATA_DEGREE,
    MATRIX_DEGREE,
};
pub use norms::{
    evaluate_velocity, h1_seminorm_error_velocity, l2_error_pressure, l2_error_velocity,
    l2_norm_control, space_time_l2_error, SlabField,
};
pub use quadrature::{quadrature_rule, QuadratureRule};
pub use spaces::{local_basis, DiscreteSpaces};

use thiserror::Error;

use crate::linalg::{CsrMatrix, LinalgError};
use crate::mesh::{MeshError, TriangleMesh};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FemError {
    #[error("no quadrature rule of degree {0} (supported: 2, 4, 6, 8)")]
    UnsupportedDegree(usize),
    #[error("no Gauss-Legendre rule with {0} points")]
    UnsupportedGaussPoints(usize),
    #[error("{what}: expected length {expected}, got {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("empty or reversed time interval [{0}, {1}]")]
    InvalidInterval(f64, f64),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Mesh, dof maps and the assembled spatial operators.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub mesh: TriangleMesh,
    pub spaces: DiscreteSpaces,
    /// `(phi_j, phi_i)`, `n_u x n_u`.
    pub mass: CsrMatrix,
    /// `(grad phi_j, grad phi_i)`, `n_u x n_u`.
    pub stiffness: CsrMatrix,
    /// `(div phi_j, psi_i)`, `n_p x n_u`.
    pub divergence: CsrMatrix,
    /// `(chi_K e_c, phi_i)`, `n_u x n_q`.
    pub control_coupling: CsrMatrix,
    /// Cell areas per control dof.
    pub control_mass: Vec<f64>,
}

impl Discretization {
    pub fn unit_square(n: usize) -> Result<Self, FemError> {
        Self::new(TriangleMesh::unit_square(n)?)
    }

    pub fn new(mesh: TriangleMesh) -> Result<Self, FemError> {
        let spaces = DiscreteSpaces::new(&mesh)?;
        let mass = assemble_velocity_mass(&mesh, &spaces)?;
        let stiffness = assemble_velocity_stiffness(&mesh, &spaces)?;
        let divergence = assemble_divergence(&mesh, &spaces)?;
        let control_coupling = assemble_control_coupling(&mesh, &spaces)?;
        let control_mass = assemble_control_mass(&mesh);
        Ok(Discretization {
            mesh,
            spaces,
            mass,
            stiffness,
            divergence,
            control_coupling,
            control_mass,
        })
    }

    pub fn n_u(&self) -> usize {
        self.spaces.n_u()
    }

    pub fn n_p(&self) -> usize {
        self.spaces.n_p()
    }

    pub fn n_q(&self) -> usize {
        self.spaces.n_q()
    }

    pub fn h(&self) -> f64 {
        self.mesh.h()
    }
}
