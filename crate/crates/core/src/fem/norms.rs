use crate::mesh::TriangleMesh;
use crate::par;

use super::assembly::MATRIX_DEGREE;
use super::spaces::{local_basis, DiscreteSpaces};
use super::{quadrature_rule, FemError};

fn check_len(what: &'static str, v: &[f64], n: usize) -> Result<(), FemError> {
    if v.len() != n {
        return Err(FemError::DimensionMismatch {
            what,
            expected: n,
            found: v.len(),
        });
    }
    Ok(())
}

/// Value and gradient (`grad[c] = grad u_c`) of the discrete velocity at
/// barycentric point `l` of `cell`.
pub fn evaluate_velocity(
    mesh: &TriangleMesh,
    spaces: &DiscreteSpaces,
    coeffs: &[f64],
    cell: usize,
    l: [f64; 3],
) -> Result<([f64; 2], [[f64; 2]; 2]), FemError> {
    let map = mesh.cell_affine_map(cell)?;
    let (v, g) = local_basis(&map, l);
    let dofs = spaces.cell_scalar_dofs(cell);
    let mut val = [0.0; 2];
    let mut grad = [[0.0; 2]; 2];
    for a in 0..4 {
        if let Some(s) = dofs[a] {
            for c in 0..2 {
                let u = coeffs[spaces.velocity_dof(c, s)];
                val[c] += u * v[a];
                grad[c][0] += u * g[a][0];
                grad[c][1] += u * g[a][1];
            }
        }
    }
    Ok((val, grad))
}

fn sum_over_cells<F>(mesh: &TriangleMesh, f: F) -> Result<f64, FemError>
where
    F: Fn(usize) -> Result<f64, FemError> + Sync + Send,
{
    let parts = par::map_range(mesh.n_cells(), f);
    let mut s = 0.0;
    for p in parts {
        s += p?;
    }
    Ok(s)
}

/// `sqrt(int |u_h - exact|^2)`.
pub fn l2_error_velocity<F>(
    mesh: &TriangleMesh,
    spaces: &DiscreteSpaces,
    coeffs: &[f64],
    exact: F,
) -> Result<f64, FemError>
where
    F: Fn([f64; 2]) -> [f64; 2] + Sync + Send,
{
    check_len("velocity coefficients", coeffs, spaces.n_u())?;
    let rule = quadrature_rule(MATRIX_DEGREE)?;
    let s = sum_over_cells(mesh, |cell| {
        let map = mesh.cell_affine_map(cell)?;
        let mut acc = 0.0;
        for (l, w) in rule.points.iter().zip(&rule.weights) {
            let (uh, _) = evaluate_velocity(mesh, spaces, coeffs, cell, *l)?;
            let e = exact(map.map_barycentric(*l));
            acc += w * map.det.abs() * ((uh[0] - e[0]).powi(2) + (uh[1] - e[1]).powi(2));
        }
        Ok(acc)
    })?;
    Ok(s.sqrt())
}

/// `sqrt(int |grad u_h - grad exact|^2)`, `exact_grad(x)[c] = grad u_c`.
pub fn h1_seminorm_error_velocity<F>(
    mesh: &TriangleMesh,
    spaces: &DiscreteSpaces,
    coeffs: &[f64],
    exact_grad: F,
) -> Result<f64, FemError>
where
    F: Fn([f64; 2]) -> [[f64; 2]; 2] + Sync + Send,
{
    check_len("velocity coefficients", coeffs, spaces.n_u())?;
    let rule = quadrature_rule(MATRIX_DEGREE)?;
    let s = sum_over_cells(mesh, |cell| {
        let map = mesh.cell_affine_map(cell)?;
        let mut acc = 0.0;
        for (l, w) in rule.points.iter().zip(&rule.weights) {
            let (_, gh) = evaluate_velocity(mesh, spaces, coeffs, cell, *l)?;
            let ge = exact_grad(map.map_barycentric(*l));
            let mut e = 0.0;
            for c in 0..2 {
                for d in 0..2 {
                    e += (gh[c][d] - ge[c][d]).powi(2);
                }
            }
            acc += w * map.det.abs() * e;
        }
        Ok(acc)
    })?;
    Ok(s.sqrt())
}

/// `sqrt(int (p_h - exact)^2)` for a P1 pressure.
pub fn l2_error_pressure<F>(
    mesh: &TriangleMesh,
    spaces: &DiscreteSpaces,
    p: &[f64],
    exact: F,
) -> Result<f64, FemError>
where
    F: Fn([f64; 2]) -> f64 + Sync + Send,
{
    check_len("pressure coefficients", p, spaces.n_p())?;
    let rule = quadrature_rule(MATRIX_DEGREE)?;
    let s = sum_over_cells(mesh, |cell| {
        let map = mesh.cell_affine_map(cell)?;
        let verts = mesh.cells()[cell];
        let mut acc = 0.0;
        for (l, w) in rule.points.iter().zip(&rule.weights) {
            let ph = l[0] * p[verts[0]] + l[1] * p[verts[1]] + l[2] * p[verts[2]];
            acc += w * map.det.abs() * (ph - exact(map.map_barycentric(*l))).powi(2);
        }
        Ok(acc)
    })?;
    Ok(s.sqrt())
}

/// `||q||_{L^2(Omega)}` for a P0 control.
pub fn l2_norm_control(mesh: &TriangleMesh, spaces: &DiscreteSpaces, q: &[f64]) -> Result<f64, FemError> {
    check_len("control coefficients", q, spaces.n_q())?;
    let nc = spaces.n_cells();
    Ok((0..nc)
        .map(|k| mesh.cell_area(k) * (q[k] * q[k] + q[nc + k] * q[nc + k]))
        .sum::<f64>()
        .sqrt())
}


/// Piecewise constant in time field sampled by [`space_time_l2_error`].
#[derive(Debug, Clone, Copy)]
pub enum SlabField<'a> {
    /// MINI velocity blocks of length `n_u`, concatenated over slabs.
    Velocity(&'a [f64]),
    /// P0 control blocks of length `n_q`, concatenated over slabs.
    Control(&'a [f64]),
    Zero,
}

/// `sqrt(sum_m int_{I_m} int |field_m - truth(t)|^2)` on slabs given by
/// `nodes`; Gauss in time on the smooth pieces of `truth`, degree-6 rule in
/// space.
pub fn space_time_l2_error(
    mesh: &TriangleMesh,
    spaces: &DiscreteSpaces,
    nodes: &[f64],
    field: SlabField<'_>,
    truth: &crate::functions::SpaceTimeFunction,
) -> Result<f64, FemError> {
    let slabs = nodes.len().saturating_sub(1);
    match field {
        SlabField::Velocity(v) => check_len("velocity field", v, slabs * spaces.n_u())?,
        SlabField::Control(q) => check_len("control field", q, slabs * spaces.n_q())?,
        SlabField::Zero => {}
    }
    let rule = quadrature_rule(MATRIX_DEGREE)?;
    let terms = truth.terms();
    // per slab: (weight, g_j(t)) at every time node
    let time: Vec<Vec<(f64, Vec<f64>)>> = (0..slabs)
        .map(|m| {
            truth
                .time_quadrature(nodes[m], nodes[m + 1])
                .into_iter()
                .map(|(t, w)| (w, terms.iter().map(|term| term.time.eval(t)).collect()))
                .collect()
        })
        .collect();
    let basis: Vec<[f64; 4]> = rule
        .points
        .iter()
        .map(|l| [l[0], l[1], l[2], 27.0 * l[0] * l[1] * l[2]])
        .collect();
    let n_u = spaces.n_u();
    let n_q = spaces.n_q();
    let s = sum_over_cells(mesh, |cell| {
        let map = mesh.cell_affine_map(cell)?;
        let jac = map.det.abs();
        let space: Vec<Vec<[f64; 2]>> = rule
            .points
            .iter()
            .map(|l| {
                let x = map.map_barycentric(*l);
                terms.iter().map(|term| (term.space)(x)).collect()
            })
            .collect();
        let dofs = spaces.cell_scalar_dofs(cell);
        let mut acc = 0.0;
        for (m, nodes_m) in time.iter().enumerate() {
            for (qp, w_space) in rule.weights.iter().enumerate() {
                let fh = match field {
                    SlabField::Velocity(v) => {
                        let block = &v[m * n_u..(m + 1) * n_u];
                        let mut val = [0.0; 2];
                        for a in 0..4 {
                            if let Some(sd) = dofs[a] {
                                val[0] += block[spaces.velocity_dof(0, sd)] * basis[qp][a];
                                val[1] += block[spaces.velocity_dof(1, sd)] * basis[qp][a];
                            }
                        }
                        val
                    }
                    SlabField::Control(q) => {
                        let block = &q[m * n_q..(m + 1) * n_q];
                        [block[spaces.control_dof(0, cell)], block[spaces.control_dof(1, cell)]]
                    }
                    SlabField::Zero => [0.0, 0.0],
                };
                let mut slab_sum = 0.0;
                for (w_t, g) in nodes_m {
                    let mut e = fh;
                    for (gj, sj) in g.iter().zip(&space[qp]) {
                        e[0] -= gj * sj[0];
                        e[1] -= gj * sj[1];
                    }
                    slab_sum += w_t * (e[0] * e[0] + e[1] * e[1]);
                }
                acc += w_space * jac * slab_sum;
            }
        }
        Ok(acc)
    })?;
    Ok(s.sqrt())
}
