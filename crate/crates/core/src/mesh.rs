//! Structured triangulations of the unit square.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("invalid discretization: {0} subdivisions per side")]
    InvalidSubdivisions(usize),
    #[error("cell index {0} out of range ({1} cells)")]
    CellOutOfRange(usize, usize),
    #[error("mesh corruption: cell {cell} has determinant {det:e}")]
    Degenerate { cell: usize, det: f64 },
}

/// Uniform triangulation of `[0,1]^2` with `n` squares per side, each square
/// split along its lower-left to upper-right diagonal.
#[derive(Debug, Clone)]
pub struct TriangleMesh {
    n: usize,
    vertices: Vec<[f64; 2]>,
    cells: Vec<[usize; 3]>,
    boundary_vertex: Vec<bool>,
}

/// Affine map from the reference triangle `{xi >= 0, xi_1 + xi_2 <= 1}` to a cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMap {
    pub origin: [f64; 2],
    /// Columns are `v1 - v0` and `v2 - v0`.
    pub jacobian: [[f64; 2]; 2],
    pub det: f64,
    pub area: f64,
}

impl AffineMap {
    /// Builds the map for a triangle given by its vertices.
    pub fn from_vertices(v: [[f64; 2]; 3]) -> Self {
        let jacobian = [
            [v[1][0] - v[0][0], v[2][0] - v[0][0]],
            [v[1][1] - v[0][1], v[2][1] - v[0][1]],
        ];
        let det = jacobian[0][0] * jacobian[1][1] - jacobian[0][1] * jacobian[1][0];
        AffineMap {
            origin: v[0],
            jacobian,
            det,
            area: 0.5 * det.abs(),
        }
    }

    /// Physical point for reference coordinates `xi`.
    pub fn map(&self, xi: [f64; 2]) -> [f64; 2] {
        let j = &self.jacobian;
        [
            self.origin[0] + j[0][0] * xi[0] + j[0][1] * xi[1],
            self.origin[1] + j[1][0] * xi[0] + j[1][1] * xi[1],
        ]
    }

    /// Physical point for barycentric coordinates `(l0, l1, l2)`.
    pub fn map_barycentric(&self, l: [f64; 3]) -> [f64; 2] {
        self.map([l[1], l[2]])
    }

    /// Gradients of the three barycentric coordinates, `J^{-T} grad_ref`.
    pub fn barycentric_gradients(&self) -> [[f64; 2]; 3] {
        let j = &self.jacobian;
        let inv_det = 1.0 / self.det;
        // rows of J^{-1}
        let r0 = [j[1][1] * inv_det, -j[0][1] * inv_det];
        let r1 = [-j[1][0] * inv_det, j[0][0] * inv_det];
        // grad lambda_1 = first row of J^{-1}, grad lambda_2 = second row
        let g1 = r0;
        let g2 = r1;
        let g0 = [-g1[0] - g2[0], -g1[1] - g2[1]];
        [g0, g1, g2]
    }
}

impl TriangleMesh {
    /// Builds the `n x n` mesh: `(n+1)^2` vertices and `2 n^2` cells.
    pub fn unit_square(n: usize) -> Result<Self, MeshError> {
        if n == 0 {
            return Err(MeshError::InvalidSubdivisions(n));
        }
        let np = n + 1;
        let h = 1.0 / n as f64;
        let mut vertices = Vec::with_capacity(np * np);
        let mut boundary_vertex = Vec::with_capacity(np * np);
        for j in 0..np {
            for i in 0..np {
                // i == n gives exactly 1.0
                let x = if i == n { 1.0 } else { i as f64 * h };
                let y = if j == n { 1.0 } else { j as f64 * h };
                vertices.push([x, y]);
                boundary_vertex.push(i == 0 || j == 0 || i == n || j == n);
            }
        }
        let mut cells = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let v00 = j * np + i;
                let v10 = v00 + 1;
                let v01 = v00 + np;
                let v11 = v01 + 1;
                cells.push([v00, v10, v11]);
                cells.push([v00, v11, v01]);
            }
        }
        Ok(TriangleMesh {
            n,
            vertices,
            cells,
            boundary_vertex,
        })
    }

    pub fn subdivisions(&self) -> usize {
        self.n
    }

    /// Mesh parameter reported as `1/n`.
    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn cells(&self) -> &[[usize; 3]] {
        &self.cells
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary_vertex[v]
    }

    pub fn boundary_flags(&self) -> &[bool] {
        &self.boundary_vertex
    }

    pub fn cell_vertices(&self, cell: usize) -> [[f64; 2]; 3] {
        let c = self.cells[cell];
        [self.vertices[c[0]], self.vertices[c[1]], self.vertices[c[2]]]
    }

    /// Affine map of a cell; rejects clockwise or degenerate cells.
    pub fn cell_affine_map(&self, cell: usize) -> Result<AffineMap, MeshError> {
        if cell >= self.cells.len() {
            return Err(MeshError::CellOutOfRange(cell, self.cells.len()));
        }
        checked_affine_map(cell, self.cell_vertices(cell))
    }

    /// All cell maps in cell order. The mesh is valid by construction.
    pub fn affine_maps(&self) -> Vec<AffineMap> {
        (0..self.n_cells())
            .map(|c| AffineMap::from_vertices(self.cell_vertices(c)))
            .collect()
    }

    pub fn cell_area(&self, cell: usize) -> f64 {
        AffineMap::from_vertices(self.cell_vertices(cell)).area
    }

    pub fn centroid(&self, cell: usize) -> [f64; 2] {
        let v = self.cell_vertices(cell);
        [
            (v[0][0] + v[1][0] + v[2][0]) / 3.0,
            (v[0][1] + v[1][1] + v[2][1]) / 3.0,
        ]
    }

    /// Unique edges as sorted vertex pairs.
    pub fn edges(&self) -> Vec<[usize; 2]> {
        let mut e: Vec<[usize; 2]> = self
            .cells
            .iter()
            .flat_map(|c| {
                [[c[0], c[1]], [c[1], c[2]], [c[2], c[0]]]
                    .into_iter()
                    .map(|[a, b]| if a < b { [a, b] } else { [b, a] })
            })
            .collect();
        e.sort_unstable();
        e.dedup();
        e
    }

    /// Edges with both endpoints on the boundary that lie on one side of the square.
    pub fn boundary_edges(&self) -> Vec<[usize; 2]> {
        self.edges()
            .into_iter()
            .filter(|&[a, b]| {
                let (pa, pb) = (self.vertices[a], self.vertices[b]);
                (0..2).any(|d| {
                    (pa[d] == 0.0 && pb[d] == 0.0) || (pa[d] == 1.0 && pb[d] == 1.0)
                })
            })
            .collect()
    }

    /// Cell containing `x` (points on shared edges resolve to one of the neighbors).
    pub fn locate(&self, x: [f64; 2]) -> usize {
        let n = self.n;
        let s = |v: f64| ((v * n as f64).floor() as isize).clamp(0, n as isize - 1) as usize;
        let (i, j) = (s(x[0]), s(x[1]));
        let h = self.h();
        let dx = x[0] - i as f64 * h;
        let dy = x[1] - j as f64 * h;
        let base = 2 * (j * n + i);
        if dy <= dx {
            base
        } else {
            base + 1
        }
    }

    /// For a nested finer mesh, the coarse cell containing each fine cell.
    pub fn parent_cells(&self, fine: &TriangleMesh) -> Option<Vec<usize>> {
        if fine.n % self.n != 0 {
            return None;
        }
        Some(
            (0..fine.n_cells())
                .map(|c| self.locate(fine.centroid(c)))
                .collect(),
        )
    }
}

fn checked_affine_map(cell: usize, v: [[f64; 2]; 3]) -> Result<AffineMap, MeshError> {
    let map = AffineMap::from_vertices(v);
    if !(map.det > 0.0) {
        return Err(MeshError::Degenerate {
            cell,
            det: map.det,
        });
    }
    Ok(map)
}

/// Affine map of a free-standing triangle with the same orientation checks as
/// [`TriangleMesh::cell_affine_map`].
pub fn triangle_affine_map(v: [[f64; 2]; 3]) -> Result<AffineMap, MeshError> {
    checked_affine_map(0, v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_mesh() {
        let m = TriangleMesh::unit_square(1).unwrap();
        assert_eq!(m.n_vertices(), 4);
        assert_eq!(m.n_cells(), 2);
        let area: f64 = (0..2).map(|c| m.cell_area(c)).sum();
        assert_eq!(area, 1.0);
    }

    #[test]
    fn counts_n2() {
        let m = TriangleMesh::unit_square(2).unwrap();
        assert_eq!(m.n_vertices(), 9);
        assert_eq!(m.n_cells(), 8);
        assert_eq!(m.boundary_edges().len(), 8);
    }

    #[test]
    fn zero_subdivisions_rejected() {
        assert_eq!(
            TriangleMesh::unit_square(0).unwrap_err(),
            MeshError::InvalidSubdivisions(0)
        );
    }

    #[test]
    fn area_partition_and_euler() {
        for n in [1, 2, 3, 4, 7, 16] {
            let m = TriangleMesh::unit_square(n).unwrap();
            let area: f64 = (0..m.n_cells()).map(|c| m.cell_area(c)).sum();
            assert!((area - 1.0).abs() < 1e-13, "n={n}");
            let v = m.n_vertices() as i64;
            let e = m.edges().len() as i64;
            let f = m.n_cells() as i64;
            assert_eq!(v - e + f, 1);
            assert_eq!(m.boundary_edges().len(), 4 * n);
            for c in 0..m.n_cells() {
                let map = m.cell_affine_map(c).unwrap();
                assert!((map.area - 0.5 / (n * n) as f64).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn n4_total_area() {
        let m = TriangleMesh::unit_square(4).unwrap();
        let area: f64 = (0..m.n_cells()).map(|c| m.cell_area(c)).sum();
        assert!((area - 1.0).abs() < 1e-14);
    }

    #[test]
    fn boundary_flags_match_coordinates() {
        let m = TriangleMesh::unit_square(5).unwrap();
        for (v, x) in m.vertices().iter().enumerate() {
            let on = x.iter().any(|&c| c.abs() < 1e-14 || (c - 1.0).abs() < 1e-14);
            assert_eq!(on, m.is_boundary_vertex(v));
        }
    }

    #[test]
    fn reference_triangle_map_is_identity() {
        let map = triangle_affine_map([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert_eq!(map.jacobian, [[1.0, 0.0], [0.0, 1.0]]);
        assert_eq!(map.area, 0.5);
    }

    #[test]
    fn reflected_cell_rejected() {
        let err = triangle_affine_map([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]]).unwrap_err();
        assert!(matches!(err, MeshError::Degenerate { det, .. } if det < 0.0));
    }

    #[test]
    fn n2_cells_have_area_one_eighth() {
        let m = TriangleMesh::unit_square(2).unwrap();
        for c in 0..m.n_cells() {
            assert_eq!(m.cell_affine_map(c).unwrap().area, 0.125);
        }
        assert!(m.cell_affine_map(8).is_err());
    }

    #[test]
    fn locate_and_nesting() {
        let coarse = TriangleMesh::unit_square(2).unwrap();
        let fine = TriangleMesh::unit_square(6).unwrap();
        let parents = coarse.parent_cells(&fine).unwrap();
        for (c, &p) in parents.iter().enumerate() {
            // every fine vertex lies in the closure of the parent
            let map = AffineMap::from_vertices(coarse.cell_vertices(p));
            for v in fine.cell_vertices(c) {
                let g = map.barycentric_gradients();
                let d = [v[0] - map.origin[0], v[1] - map.origin[1]];
                let l1 = g[1][0] * d[0] + g[1][1] * d[1];
                let l2 = g[2][0] * d[0] + g[2][1] * d[1];
                let l0 = 1.0 - l1 - l2;
                assert!(l0 > -1e-12 && l1 > -1e-12 && l2 > -1e-12);
            }
        }
        assert!(TriangleMesh::unit_square(4).unwrap().parent_cells(&fine).is_none());
    }
}
