use crate::mesh::{AffineMap, TriangleMesh};

use super::FemError;

/// Dof numbering for the three spaces.
///
/// Velocity dofs are component-major: component `c` occupies
/// `c * n_scalar .. (c + 1) * n_scalar`, and within a component the interior
/// vertices come first (in vertex order) followed by one bubble per cell.
/// Pressure dofs are the vertices. Control dofs are `c * n_cells + cell`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSpaces {
    n_vertices: usize,
    n_cells: usize,
    n_interior: usize,
    vertex_dof: Vec<Option<usize>>,
    cell_vertices: Vec<[usize; 3]>,
    pressure_mean: Vec<f64>,
}

impl DiscreteSpaces {
    pub fn new(mesh: &TriangleMesh) -> Result<Self, FemError> {
        let mut vertex_dof = vec![None; mesh.n_vertices()];
        let mut n_interior = 0;
        for (v, slot) in vertex_dof.iter_mut().enumerate() {
            if !mesh.is_boundary_vertex(v) {
                *slot = Some(n_interior);
                n_interior += 1;
            }
        }
        let mut spaces = DiscreteSpaces {
            n_vertices: mesh.n_vertices(),
            n_cells: mesh.n_cells(),
            n_interior,
            vertex_dof,
            cell_vertices: mesh.cells().to_vec(),
            pressure_mean: Vec::new(),
        };
        spaces.pressure_mean = super::assemble_pressure_mean(mesh, &spaces)?;
        Ok(spaces)
    }

    pub fn n_u(&self) -> usize {
        2 * self.n_scalar()
    }

    pub fn n_p(&self) -> usize {
        self.n_vertices
    }

    pub fn n_q(&self) -> usize {
        2 * self.n_cells
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    /// Velocity dofs per component.
    pub fn n_scalar(&self) -> usize {
        self.n_interior + self.n_cells
    }

    pub fn n_interior_vertices(&self) -> usize {
        self.n_interior
    }

    /// Scalar velocity dof of a vertex, `None` on the boundary.
    pub fn vertex_dof(&self, v: usize) -> Option<usize> {
        self.vertex_dof[v]
    }

    pub fn bubble_dof(&self, cell: usize) -> usize {
        self.n_interior + cell
    }

    pub fn velocity_dof(&self, component: usize, scalar: usize) -> usize {
        component * self.n_scalar() + scalar
    }

    pub fn control_dof(&self, component: usize, cell: usize) -> usize {
        component * self.n_cells + cell
    }

    /// Scalar dofs of the four local basis functions (three vertices, bubble).
    pub fn cell_scalar_dofs(&self, cell: usize) -> [Option<usize>; 4] {
        let c = self.cell_vertices[cell];
        [
            self.vertex_dof[c[0]],
            self.vertex_dof[c[1]],
            self.vertex_dof[c[2]],
            Some(self.bubble_dof(cell)),
        ]
    }

    /// `c_i = int psi_i`.
    pub fn pressure_mean(&self) -> &[f64] {
        &self.pressure_mean
    }

    /// Nodal P1 interpolant of `f` with zero bubble coefficients.
    pub fn interpolate_velocity<F: Fn([f64; 2]) -> [f64; 2]>(
        &self,
        mesh: &TriangleMesh,
        f: F,
    ) -> Vec<f64> {
        let mut u = vec![0.0; self.n_u()];
        for (v, x) in mesh.vertices().iter().enumerate() {
            if let Some(s) = self.vertex_dof[v] {
                let val = f(*x);
                u[self.velocity_dof(0, s)] = val[0];
                u[self.velocity_dof(1, s)] = val[1];
            }
        }
        u
    }

    pub fn interpolate_pressure<F: Fn([f64; 2]) -> f64>(&self, mesh: &TriangleMesh, f: F) -> Vec<f64> {
        mesh.vertices().iter().map(|x| f(*x)).collect()
    }

    /// Cellwise mean of `f` on each component (P0 projection by quadrature).
    pub fn project_control<F: Fn([f64; 2]) -> [f64; 2]>(
        &self,
        mesh: &TriangleMesh,
        f: F,
        rule: &super::QuadratureRule,
    ) -> Vec<f64> {
        let mut q = vec![0.0; self.n_q()];
        for cell in 0..self.n_cells {
            let map = mesh.cell_affine_map(cell).expect("valid mesh");
            let mut acc = [0.0; 2];
            for (l, w) in rule.points.iter().zip(&rule.weights) {
                let v = f(map.map_barycentric(*l));
                acc[0] += 2.0 * w * v[0];
                acc[1] += 2.0 * w * v[1];
            }
            q[self.control_dof(0, cell)] = acc[0];
            q[self.control_dof(1, cell)] = acc[1];
        }
        q
    }
}

/// Values and physical gradients of the four local MINI basis functions at
/// barycentric point `l`.
pub fn local_basis(map: &AffineMap, l: [f64; 3]) -> ([f64; 4], [[f64; 2]; 4]) {
    let g = map.barycentric_gradients();
    let b = 27.0 * l[0] * l[1] * l[2];
    let gb = [
        27.0 * (l[1] * l[2] * g[0][0] + l[0] * l[2] * g[1][0] + l[0] * l[1] * g[2][0]),
        27.0 * (l[1] * l[2] * g[0][1] + l[0] * l[2] * g[1][1] + l[0] * l[1] * g[2][1]),
    ];
    ([l[0], l[1], l[2], b], [g[0], g[1], g[2], gb])
}
