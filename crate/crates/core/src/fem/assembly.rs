use crate::functions::{SpaceTimeFunction, TimeProfile};
use crate::linalg::CsrMatrix;
use crate::mesh::TriangleMesh;
use crate::par;

use super::spaces::{local_basis, DiscreteSpaces};
use super::{quadrature_rule, FemError, QuadratureRule};

/// Exact for bubble times bubble.
pub const MATRIX_DEGREE: usize = 6;
/// Loads with non-polynomial data.
pub const DATA_DEGREE: usize = 8;

type Triplet = (usize, usize, f64);

/// Calls `f(x, jw, values, grads)` for each quadrature point of `cell`.
fn for_each_point<F>(mesh: &TriangleMesh, cell: usize, rule: &QuadratureRule, mut f: F) -> Result<(), FemError>
where
    F: FnMut([f64; 2], f64, &[f64; 4], &[[f64; 2]; 4]),
{
    let map = mesh.cell_affine_map(cell)?;
    let jac = map.det.abs();
    for (l, w) in rule.points.iter().zip(&rule.weights) {
        let (v, g) = local_basis(&map, *l);
        f(map.map_barycentric(*l), w * jac, &v, &g);
    }
    Ok(())
}

fn assemble_cells<F>(n_rows: usize, n_cols: usize, n_cells: usize, local: F) -> Result<CsrMatrix, FemError>
where
    F: Fn(usize) -> Result<Vec<Triplet>, FemError> + Sync + Send,
{
    let per_cell = par::map_range(n_cells, local);
    let mut trip = Vec::new();
    for t in per_cell {
        trip.extend(t?);
    }
    Ok(CsrMatrix::from_triplets(n_rows, n_cols, &trip)?)
}

/// Replicates a scalar local matrix onto both velocity components.
fn scatter_vector_block(spaces: &DiscreteSpaces, cell: usize, local: &[[f64; 4]; 4]) -> Vec<Triplet> {
    let dofs = spaces.cell_scalar_dofs(cell);
    let mut out = Vec::with_capacity(32);
    for comp in 0..2 {
        for a in 0..4 {
            let Some(ra) = dofs[a] else { continue };
            for b in 0..4 {
                let Some(rb) = dofs[b] else { continue };
                out.push((
                    spaces.velocity_dof(comp, ra),
                    spaces.velocity_dof(comp, rb),
                    local[a][b],
                ));
            }
        }
    }
    out
}

pub fn assemble_velocity_mass(mesh: &TriangleMesh, spaces: &DiscreteSpaces) -> Result<CsrMatrix, FemError> {
    let rule = quadrature_rule(MATRIX_DEGREE)?;
    let n = spaces.n_u();
    assemble_cells(n, n, mesh.n_cells(), |cell| {
        let mut loc = [[0.0; 4]; 4];
        for_each_point(mesh, cell, &rule, |_, jw, v, _| {
            for a in 0..4 {
                for b in 0..4 {
                    loc[a][b] += jw * v[a] * v[b];
                }
            }
        })?;
        Ok(scatter_vector_block(spaces, cell, &loc))
    })
}

pub fn assemble_velocity_stiffness(
    mesh: &TriangleMesh,
    spaces: &DiscreteSpaces,
) -> Result<CsrMatrix, FemError> {
    let rule = quadrature_rule(MATRIX_DEGREE)?;
    let n = spaces.n_u();
    assemble_cells(n, n, mesh.n_cells(), |cell| {
        let mut loc = [[0.0; 4]; 4];
        for_each_point(mesh, cell, &rule, |_, jw, _, g| {
            for a in 0..4 {
                for b in 0..4 {
                    loc[a][b] += jw * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
                }
            }
        })?;
        Ok(scatter_vector_block(spaces, cell, &loc))
    })
}

/// `B_ij = (div phi_j, psi_i)`.
pub fn assemble_divergence(mesh: &TriangleMesh, spaces: &DiscreteSpaces) -> Result<CsrMatrix, FemError> {
    let rule = quadrature_rule(MATRIX_DEGREE)?;
    assemble_cells(spaces.n_p(), spaces.n_u(), mesh.n_cells(), |cell| {
        // loc[i][comp][a] = int psi_i d_comp phi_a
        let mut loc = [[[0.0; 4]; 2]; 3];
        for_each_point(mesh, cell, &rule, |_, jw, v, g| {
            for i in 0..3 {
                for comp in 0..2 {
                    for a in 0..4 {
                        loc[i][comp][a] += jw * v[i] * g[a][comp];
                    }
                }
            }
        })?;
        let dofs = spaces.cell_scalar_dofs(cell);
        let verts = mesh.cells()[cell];
        let mut out = Vec::with_capacity(24);
        for (i, &pv) in verts.iter().enumerate() {
            for comp in 0..2 {
                for a in 0..4 {
                    if let Some(s) = dofs[a] {
                        out.push((pv, spaces.velocity_dof(comp, s), loc[i][comp][a]));
                    }
                }
            }
        }
        Ok(out)
    })
}

/// `c_i = int psi_i`.
pub fn assemble_pressure_mean(mesh: &TriangleMesh, spaces: &DiscreteSpaces) -> Result<Vec<f64>, FemError> {
    let mut c = vec![0.0; spaces.n_p()];
    for (cell, verts) in mesh.cells().iter().enumerate() {
        let share = mesh.cell_area(cell) / 3.0;
        for &v in verts {
            c[v] += share;
        }
    }
    Ok(c)
}

/// `C_{i,(c,K)} = int_K phi_i` for velocity dofs of component `c`.
pub fn assemble_control_coupling(
    mesh: &TriangleMesh,
    spaces: &DiscreteSpaces,
) -> Result<CsrMatrix, FemError> {
    assemble_cells(spaces.n_u(), spaces.n_q(), mesh.n_cells(), |cell| {
        let area = mesh.cell_area(cell);
        let weights = [area / 3.0, area / 3.0, area / 3.0, 9.0 * area / 20.0];
        let dofs = spaces.cell_scalar_dofs(cell);
        let mut out = Vec::with_capacity(8);
        for comp in 0..2 {
            for a in 0..4 {
                if let Some(s) = dofs[a] {
                    out.push((
                        spaces.velocity_dof(comp, s),
                        spaces.control_dof(comp, cell),
                        weights[a],
                    ));
                }
            }
        }
        Ok(out)
    })
}

/// Cell area per control dof.
pub fn assemble_control_mass(mesh: &TriangleMesh) -> Vec<f64> {
    let areas: Vec<f64> = (0..mesh.n_cells()).map(|c| mesh.cell_area(c)).collect();
    let mut m = areas.clone();
    m.extend_from_slice(&areas);
    m
}

/// `F_i = int f . phi_i` with the rule of the given degree.
pub fn assemble_load<F>(
    mesh: &TriangleMesh,
    spaces: &DiscreteSpaces,
    f: F,
    degree: usize,
) -> Result<Vec<f64>, FemError>
where
    F: Fn([f64; 2]) -> [f64; 2] + Sync + Send,
{
    let rule = quadrature_rule(degree)?;
    let local = par::map_range(mesh.n_cells(), |cell| {
        let mut loc = [[0.0; 4]; 2];
        for_each_point(mesh, cell, &rule, |x, jw, v, _| {
            let fx = f(x);
            for a in 0..4 {
                loc[0][a] += jw * fx[0] * v[a];
                loc[1][a] += jw * fx[1] * v[a];
            }
        })
        .map(|_| loc)
    });
    let mut out = vec![0.0; spaces.n_u()];
    for (cell, loc) in local.into_iter().enumerate() {
        let loc = loc?;
        for (a, dof) in spaces.cell_scalar_dofs(cell).iter().enumerate() {
            if let Some(s) = *dof {
                out[spaces.velocity_dof(0, s)] += loc[0][a];
                out[spaces.velocity_dof(1, s)] += loc[1][a];
            }
        }
    }
    Ok(out)
}

/// `(g_w)_i = int phi_i . w`.
pub fn assemble_weight_vector<F>(mesh: &TriangleMesh, spaces: &DiscreteSpaces, w: F) -> Result<Vec<f64>, FemError>
where
    F: Fn([f64; 2]) -> [f64; 2] + Sync + Send,
{
    assemble_load(mesh, spaces, w, DATA_DEGREE)
}

/// `F_i = int_{t0}^{t1} int f . phi_i`.
pub fn assemble_timeslab_load(
    mesh: &TriangleMesh,
    spaces: &DiscreteSpaces,
    f: &SpaceTimeFunction,
    t0: f64,
    t1: f64,
) -> Result<Vec<f64>, FemError> {
    SeparableLoad::new(mesh, spaces, f)?.slab(t0, t1)
}

/// Spatial loads of each separable term, so slab loads cost one time
/// integral per term.
#[derive(Debug, Clone)]
pub struct SeparableLoad {
    n_u: usize,
    terms: Vec<(TimeProfile, Vec<f64>)>,
}

impl SeparableLoad {
    pub fn new(mesh: &TriangleMesh, spaces: &DiscreteSpaces, f: &SpaceTimeFunction) -> Result<Self, FemError> {
        let mut terms = Vec::with_capacity(f.len());
        for term in f.terms() {
            let s = term.space.clone();
            terms.push((term.time.clone(), assemble_load(mesh, spaces, move |x| s(x), DATA_DEGREE)?));
        }
        Ok(SeparableLoad {
            n_u: spaces.n_u(),
            terms,
        })
    }

    pub fn slab(&self, t0: f64, t1: f64) -> Result<Vec<f64>, FemError> {
        let mut out = vec![0.0; self.n_u];
        self.slab_into(t0, t1, &mut out)?;
        Ok(out)
    }

    pub fn slab_into(&self, t0: f64, t1: f64, out: &mut [f64]) -> Result<(), FemError> {
        if !(t1 > t0) {
            return Err(FemError::InvalidInterval(t0, t1));
        }
        out.iter_mut().for_each(|v| *v = 0.0);
        for (g, load) in &self.terms {
            let c = g.integrate(t0, t1);
            if c != 0.0 {
                crate::linalg::vecops::axpy(c, load, out);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(n: usize) -> (TriangleMesh, DiscreteSpaces) {
        let m = TriangleMesh::unit_square(n).unwrap();
        let s = DiscreteSpaces::new(&m).unwrap();
        (m, s)
    }

    /// Local scalar matrices on one cell, before boundary elimination.
    fn local_mass_stiffness(mesh: &TriangleMesh, cell: usize) -> ([[f64; 4]; 4], [[f64; 4]; 4]) {
        let rule = quadrature_rule(MATRIX_DEGREE).unwrap();
        let mut m = [[0.0; 4]; 4];
        let mut a = [[0.0; 4]; 4];
        for_each_point(mesh, cell, &rule, |_, jw, v, g| {
            for i in 0..4 {
                for j in 0..4 {
                    m[i][j] += jw * v[i] * v[j];
                    a[i][j] += jw * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
                }
            }
        })
        .unwrap();
        (m, a)
    }

    #[test]
    fn local_mass_values() {
        let (mesh, _) = setup(3);
        let area = mesh.cell_area(4);
        let (m, _) = local_mass_stiffness(&mesh, 4);
        for i in 0..3 {
            for j in 0..3 {
                let exact = if i == j { area / 6.0 } else { area / 12.0 };
                assert!((m[i][j] - exact).abs() < 1e-15);
            }
        }
        // 729 * 2!2!2! * 2A / 8!
        assert!((m[3][3] - 81.0 * area / 280.0).abs() < 1e-15);
    }

    #[test]
    fn local_stiffness_reference_triangle() {
        // cell 0 of n=1 is (0,0),(1,0),(1,1); cell 1 is (0,0),(1,1),(0,1)
        let mesh = TriangleMesh::unit_square(1).unwrap();
        let (_, a) = local_mass_stiffness(&mesh, 1);
        // right angle sits at vertex (0,1), local index 2
        let expect = [[0.5, 0.0, -0.5], [0.0, 0.5, -0.5], [-0.5, -0.5, 1.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((a[i][j] - expect[i][j]).abs() < 1e-14);
            }
        }
        // constants (sum of the P1 functions) in the kernel
        for row in a.iter() {
            assert!(row[..3].iter().sum::<f64>().abs() < 1e-14);
        }
    }

    #[test]
    fn global_matrices_symmetric_and_definite() {
        let (mesh, sp) = setup(4);
        let m = assemble_velocity_mass(&mesh, &sp).unwrap();
        let a = assemble_velocity_stiffness(&mesh, &sp).unwrap();
        assert!(m.symmetry_defect() <= 1e-13);
        assert!(a.symmetry_defect() <= 1e-13);
        m.to_dense().cholesky().unwrap();
        a.to_dense().cholesky().unwrap();
    }

    #[test]
    fn mass_p1_partition_sum() {
        // columns hitting interior P1 dofs times all-ones P1 gives int phi_i;
        // summing over every vertex without elimination gives |Omega|.
        let mesh = TriangleMesh::unit_square(5).unwrap();
        let rule = quadrature_rule(MATRIX_DEGREE).unwrap();
        let mut total = 0.0;
        for cell in 0..mesh.n_cells() {
            for_each_point(&mesh, cell, &rule, |_, jw, v, _| {
                for a in 0..3 {
                    for b in 0..3 {
                        total += jw * v[a] * v[b];
                    }
                }
            })
            .unwrap();
        }
        assert!((total - 1.0).abs() < 1e-13);
    }

    #[test]
    fn pressure_mean_values() {
        let (mesh, sp) = setup(1);
        let c = sp.pressure_mean();
        assert!((c.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        // vertices 1 and 2 (the diagonal ends) see both cells
        assert!((c[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((c[1] - 1.0 / 6.0).abs() < 1e-15);
        let (mesh6, sp6) = setup(6);
        let p = sp6.interpolate_pressure(&mesh6, |x| (3.0 * x[0]).sin() + x[1] * x[1]);
        let mean = crate::linalg::vecops::dot(sp6.pressure_mean(), &p);
        let p0: Vec<f64> = p.iter().map(|v| v - mean).collect();
        assert!(crate::linalg::vecops::dot(sp6.pressure_mean(), &p0).abs() < 1e-14);
        let _ = mesh;
    }

    #[test]
    fn rigid_rotation_is_discretely_divergence_free() {
        let (mesh, sp) = setup(6);
        let b = assemble_divergence(&mesh, &sp).unwrap();
        // (-(y-1/2), x-1/2) does not vanish on the boundary; use the full
        // pre-elimination check through the local quadrature instead.
        let rule = quadrature_rule(MATRIX_DEGREE).unwrap();
        let mut rows = vec![0.0; sp.n_p()];
        for cell in 0..mesh.n_cells() {
            let verts = mesh.cells()[cell];
            let xs = mesh.cell_vertices(cell);
            for_each_point(&mesh, cell, &rule, |_, jw, v, g| {
                let mut div = 0.0;
                for a in 0..3 {
                    let val = [-xs[a][1], xs[a][0]];
                    div += val[0] * g[a][0] + val[1] * g[a][1];
                }
                for i in 0..3 {
                    rows[verts[i]] += jw * v[i] * div;
                }
            })
            .unwrap();
        }
        assert!(rows.iter().all(|r| r.abs() < 1e-13));
        // eliminated version with a field vanishing on the boundary
        let u = sp.interpolate_velocity(&mesh, |x| {
            let s = (std::f64::consts::PI * x[0]).sin() * (std::f64::consts::PI * x[1]).sin();
            [s, -s]
        });
        let r1 = b.spmv(&u).unwrap();
        // against constant pressure: boundary flux is zero
        let total: f64 = r1.iter().sum();
        assert!(total.abs() < 1e-13);
    }

    #[test]
    fn divergence_matches_quadrature_oracle() {
        use rand::{Rng, SeedableRng};
        let (mesh, sp) = setup(3);
        let b = assemble_divergence(&mesh, &sp).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let u: Vec<f64> = (0..sp.n_u()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let bu = b.spmv(&u).unwrap();
        let rule = quadrature_rule(8).unwrap();
        let mut oracle = vec![0.0; sp.n_p()];
        for cell in 0..mesh.n_cells() {
            let dofs = sp.cell_scalar_dofs(cell);
            let verts = mesh.cells()[cell];
            for_each_point(&mesh, cell, &rule, |_, jw, v, g| {
                let mut div = 0.0;
                for a in 0..4 {
                    if let Some(s) = dofs[a] {
                        div += u[sp.velocity_dof(0, s)] * g[a][0] + u[sp.velocity_dof(1, s)] * g[a][1];
                    }
                }
                for i in 0..3 {
                    oracle[verts[i]] += jw * v[i] * div;
                }
            })
            .unwrap();
        }
        for (x, y) in bu.iter().zip(&oracle) {
            assert!((x - y).abs() < 1e-13);
        }
    }

    #[test]
    fn control_coupling_entries() {
        let (mesh, sp) = setup(2);
        let c = assemble_control_coupling(&mesh, &sp).unwrap();
        let area = 1.0 / 8.0;
        for cell in 0..mesh.n_cells() {
            let bub = sp.velocity_dof(1, sp.bubble_dof(cell));
            assert!((c.get(bub, sp.control_dof(1, cell)) - 9.0 * area / 20.0).abs() < 1e-16);
            assert_eq!(c.get(bub, sp.control_dof(0, cell)), 0.0);
        }
        let center = sp.vertex_dof(4).unwrap();
        let cells_at_center: Vec<usize> = (0..mesh.n_cells()).filter(|&k| mesh.cells()[k].contains(&4)).collect();
        for k in cells_at_center {
            assert!((c.get(sp.velocity_dof(0, center), sp.control_dof(0, k)) - area / 3.0).abs() < 1e-16);
        }
        // constant control reproduces the constant load
        let q: Vec<f64> = (0..sp.n_q()).map(|i| if i < sp.n_cells() { 2.0 } else { -1.0 }).collect();
        let cq = c.spmv(&q).unwrap();
        let load = assemble_load(&mesh, &sp, |_| [2.0, -1.0], 8).unwrap();
        for (a, b) in cq.iter().zip(&load) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn control_mass_values() {
        let (mesh, _) = setup(2);
        let m = assemble_control_mass(&mesh);
        assert!(m.iter().all(|v| (v - 0.125).abs() < 1e-16));
        assert!((m.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn weight_vector_properties() {
        let (mesh, sp) = setup(4);
        let g = assemble_weight_vector(&mesh, &sp, |_| [1.0, 0.0]).unwrap();
        let l = assemble_load(&mesh, &sp, |_| [1.0, 0.0], 4).unwrap();
        for (a, b) in g.iter().zip(&l) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(g[sp.n_scalar()..].iter().all(|v| *v == 0.0));
        // support away from the lower-left corner
        let g2 = assemble_weight_vector(&mesh, &sp, |x| if x[0] > 0.5 && x[1] > 0.5 { [1.0, 1.0] } else { [0.0, 0.0] }).unwrap();
        let corner = sp.vertex_dof(4 + 1 + 1).unwrap(); // vertex (1,1)/4
        assert_eq!(g2[sp.velocity_dof(0, corner)], 0.0);
    }

    #[test]
    fn timeslab_load_in_time() {
        let (mesh, sp) = setup(3);
        let zero = assemble_timeslab_load(&mesh, &sp, &SpaceTimeFunction::zero(), 0.0, 0.5).unwrap();
        assert!(zero.iter().all(|v| *v == 0.0));
        let space = |x: [f64; 2]| [x[0] * x[1], x[0].cos()];
        let spatial = assemble_load(&mesh, &sp, space, DATA_DEGREE).unwrap();
        let constant = SpaceTimeFunction::separable(TimeProfile::constant(1.0), space);
        let linear = SpaceTimeFunction::separable(TimeProfile::new(|t| 3.0 * t - 1.0), space);
        let fc = assemble_timeslab_load(&mesh, &sp, &constant, 0.2, 0.45).unwrap();
        let fl = assemble_timeslab_load(&mesh, &sp, &linear, 0.2, 0.45).unwrap();
        let mid = 3.0 * 0.325 - 1.0;
        for i in 0..sp.n_u() {
            assert!((fc[i] - 0.25 * spatial[i]).abs() < 1e-13);
            assert!((fl[i] - 0.25 * mid * spatial[i]).abs() < 1e-13);
        }
        assert!(assemble_timeslab_load(&mesh, &sp, &constant, 0.3, 0.3).is_err());
    }
}
