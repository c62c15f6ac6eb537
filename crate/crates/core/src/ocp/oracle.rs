//! Dense reference solver for tiny instances. Time stepping goes through an
//! explicit inverse of the dense step matrix, the reduced problem is formed
//! densely, and the inequality constraints are resolved by exhaustive
//! enumeration of state active sets (no bounds) or a non-negative dual QP.

use crate::linalg::{vecops, DenseMatrix, LinalgError};
use crate::stokes::{FieldKind, SpaceTimeField};

use super::{ActiveSets, KktPoint, OcpError, OcpProblem};

/// Largest number of slabs enumerated without control bounds.
pub const MAX_ENUMERATED_SLABS: usize = 5;
/// Largest control vector accepted together with finite bounds.
pub const MAX_BOUNDED_CONTROLS: usize = 60;

struct DenseModel {
    n_u: usize,
    slabs: usize,
    k: Vec<f64>,
    /// Velocity block of the inverse step matrix, per slab.
    t: Vec<DenseMatrix>,
    mass: DenseMatrix,
    /// `g`: columns are `u(e_j)` stacked over slabs.
    g: DenseMatrix,
    h: DenseMatrix,
    b: Vec<f64>,
    /// Rows `g_w^T u_m(e_j)`.
    w: DenseMatrix,
    mqq: Vec<f64>,
}

fn step_inverse(problem: &OcpProblem<'_>, k: f64) -> Result<DenseMatrix, OcpError> {
    let disc = problem.disc();
    let n_u = disc.n_u();
    let n_p = disc.n_p();
    let dim = n_u + n_p + 1;
    let mut a = DenseMatrix::zeros(dim, dim);
    for (i, j, v) in disc.mass.triplets() {
        a[(i, j)] += v;
    }
    for (i, j, v) in disc.stiffness.triplets() {
        a[(i, j)] += k * v;
    }
    for (i, j, v) in disc.divergence.triplets() {
        a[(n_u + i, j)] -= k * v;
        a[(j, n_u + i)] -= k * v;
    }
    for (i, c) in disc.spaces.pressure_mean().iter().enumerate() {
        a[(n_u + i, dim - 1)] = *c;
        a[(dim - 1, n_u + i)] = *c;
    }
    let mut t = DenseMatrix::zeros(n_u, n_u);
    for j in 0..n_u {
        let mut e = vec![0.0; dim];
        e[j] = 1.0;
        let col = a.solve_lu(&e)?;
        for i in 0..n_u {
            t[(i, j)] = col[i];
        }
    }
    Ok(t)
}

impl DenseModel {
    fn new(problem: &OcpProblem<'_>) -> Result<Self, OcpError> {
        let disc = problem.disc();
        let grid = problem.grid();
        let n_u = disc.n_u();
        let n_q = disc.n_q();
        let slabs = grid.slabs();
        let n = slabs * n_q;
        let k: Vec<f64> = (0..slabs).map(|m| grid.k(m)).collect();
        let t = k.iter().map(|&k| step_inverse(problem, k)).collect::<Result<Vec<_>, _>>()?;
        let mass = disc.mass.to_dense();
        let coupling = disc.control_coupling.to_dense();

        let mut g = DenseMatrix::zeros(slabs * n_u, n);
        for l in 0..slabs {
            for i in 0..n_q {
                let mut rhs: Vec<f64> = (0..n_u).map(|r| k[l] * coupling[(r, i)]).collect();
                for m in l..slabs {
                    let u = t[m].matvec(&rhs);
                    for r in 0..n_u {
                        g[(m * n_u + r, l * n_q + i)] = u[r];
                    }
                    rhs = mass.matvec(&u);
                }
            }
        }
        let mqq = problem.control_mass();
        let d = problem.desired_loads().as_slice();
        // H = alpha M^qq + G^T M^uu G, b = G^T D
        let mut mg = DenseMatrix::zeros(slabs * n_u, n);
        for m in 0..slabs {
            for j in 0..n {
                let col: Vec<f64> = (0..n_u).map(|r| g[(m * n_u + r, j)]).collect();
                let v = mass.matvec(&col);
                for r in 0..n_u {
                    mg[(m * n_u + r, j)] = k[m] * v[r];
                }
            }
        }
        let mut h = g.transpose().matmul(&mg);
        for j in 0..n {
            h[(j, j)] += problem.spec().alpha * mqq[j];
        }
        let b = g.transpose().matvec(d);
        let gw = problem.g_w();
        let mut w = DenseMatrix::zeros(slabs, n);
        for m in 0..slabs {
            for j in 0..n {
                w[(m, j)] = (0..n_u).map(|r| gw[r] * g[(m * n_u + r, j)]).sum();
            }
        }
        Ok(DenseModel {
            n_u,
            slabs,
            k,
            t,
            mass,
            g,
            h,
            b,
            w,
            mqq,
        })
    }

    fn adjoint(&self, problem: &OcpProblem<'_>, u: &[f64], mu: &[f64]) -> Vec<f64> {
        let n_u = self.n_u;
        let d = problem.desired_loads().as_slice();
        let mut z = vec![0.0; self.slabs * n_u];
        let mut carry = vec![0.0; n_u];
        for m in (0..self.slabs).rev() {
            let mu_term = self.mass.matvec(&u[m * n_u..(m + 1) * n_u]);
            let rhs: Vec<f64> = (0..n_u)
                .map(|r| carry[r] + self.k[m] * mu_term[r] - d[m * n_u + r] + mu[m] * problem.g_w()[r])
                .collect();
            let zm = self.t[m].matvec(&rhs);
            carry = self.mass.matvec(&zm);
            z[m * n_u..(m + 1) * n_u].copy_from_slice(&zm);
        }
        z
    }
}

/// One inequality row `e^T q <= f`, tagged by its origin.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Row {
    State(usize),
    Upper(usize),
    Lower(usize),
}

struct Constraints {
    rows: Vec<Row>,
    e: DenseMatrix,
    f: Vec<f64>,
}

fn constraints(problem: &OcpProblem<'_>, model: &DenseModel) -> Constraints {
    let n = model.h.n_rows();
    let n_q = problem.n_q();
    let beta = problem.spec().beta;
    let mut rows = Vec::new();
    let mut e_rows: Vec<Vec<f64>> = Vec::new();
    let mut f = Vec::new();
    if beta.is_finite() {
        for m in 0..model.slabs {
            rows.push(Row::State(m));
            e_rows.push(model.w.row(m).to_vec());
            f.push(beta);
        }
    }
    for i in 0..n {
        let (a, b) = problem.bounds(i % n_q);
        if b.is_finite() {
            rows.push(Row::Upper(i));
            let mut r = vec![0.0; n];
            r[i] = 1.0;
            e_rows.push(r);
            f.push(b);
        }
        if a.is_finite() {
            rows.push(Row::Lower(i));
            let mut r = vec![0.0; n];
            r[i] = -1.0;
            e_rows.push(r);
            f.push(-a);
        }
    }
    let e = if e_rows.is_empty() {
        DenseMatrix::zeros(0, n)
    } else {
        DenseMatrix::from_rows(&e_rows)
    };
    Constraints { rows, e, f }
}

/// Solves the equality-constrained QP with rows `sel` active; returns
/// `(q, lambda_sel)`.
fn solve_equality(model: &DenseModel, cons: &Constraints, sel: &[usize]) -> Result<(Vec<f64>, Vec<f64>), LinalgError> {
    let n = model.h.n_rows();
    let s = sel.len();
    let mut kkt = DenseMatrix::zeros(n + s, n + s);
    for i in 0..n {
        for j in 0..n {
            kkt[(i, j)] = model.h[(i, j)];
        }
    }
    for (a, &r) in sel.iter().enumerate() {
        for j in 0..n {
            kkt[(n + a, j)] = cons.e[(r, j)];
            kkt[(j, n + a)] = cons.e[(r, j)];
        }
    }
    let mut rhs = model.b.clone();
    rhs.extend(sel.iter().map(|&r| cons.f[r]));
    let x = kkt.solve_lu(&rhs)?;
    Ok((x[..n].to_vec(), x[n..].to_vec()))
}

fn admissible(cons: &Constraints, q: &[f64], lambda: &[f64], feas_tol: f64) -> bool {
    let eq = cons.e.matvec(q);
    let lam_scale = vecops::norm_inf(lambda).max(1.0);
    eq.iter().zip(&cons.f).all(|(v, f)| v - f <= feas_tol * f.abs().max(1.0)) && lambda.iter().all(|l| *l >= -1e-10 * lam_scale)
}

/// Exhaustive search over per-group choices: each state row is active or
/// not, each bounded dof is free, at its upper, or at its lower bound.
fn enumerate(model: &DenseModel, cons: &Constraints) -> Result<(Vec<f64>, Vec<f64>), OcpError> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (r, row) in cons.rows.iter().enumerate() {
        match row {
            Row::Lower(i) if matches!(cons.rows.get(r.wrapping_sub(1)), Some(Row::Upper(j)) if j == i) => {
                groups.last_mut().expect("upper row precedes").push(r);
            }
            _ => groups.push(vec![r]),
        }
    }
    let mut choice = vec![0usize; groups.len()];
    let objective = |q: &[f64]| 0.5 * vecops::dot(q, &model.h.matvec(q)) - vecops::dot(&model.b, q);
    let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;
    loop {
        let sel: Vec<usize> = groups
            .iter()
            .zip(&choice)
            .filter(|(_, c)| **c > 0)
            .map(|(g, c)| g[c - 1])
            .collect();
        if let Ok((q, lam)) = solve_equality(model, cons, &sel) {
            if admissible(cons, &q, &lam, 1e-10) {
                let j = objective(&q);
                if best.as_ref().is_none_or(|b| j < b.0) {
                    let mut full = vec![0.0; cons.rows.len()];
                    for (a, &r) in sel.iter().enumerate() {
                        full[r] = lam[a];
                    }
                    best = Some((j, q, full));
                }
            }
        }
        // odometer increment
        let mut pos = 0;
        loop {
            if pos == groups.len() {
                return best.map(|(_, q, l)| (q, l)).ok_or(OcpError::Infeasible);
            }
            choice[pos] += 1;
            if choice[pos] <= groups[pos].len() {
                break;
            }
            choice[pos] = 0;
            pos += 1;
        }
    }
}

/// `min 1/2 l^T Q l + c^T l`, `l >= 0`, by a primal active set method.
fn nonnegative_qp(q: &DenseMatrix, c: &[f64]) -> Result<Vec<f64>, OcpError> {
    let r = c.len();
    let scale = vecops::norm_inf(c).max(vecops::norm_inf(q.values())).max(1.0);
    let tol = 1e-13 * scale;
    let mut lam = vec![0.0; r];
    let mut passive = vec![false; r];
    for _ in 0..(10 * r + 100) {
        let grad: Vec<f64> = q.matvec(&lam).iter().zip(c).map(|(a, b)| a + b).collect();
        let entering = (0..r)
            .filter(|&i| !passive[i] && grad[i] < -tol)
            .min_by(|&a, &b| grad[a].total_cmp(&grad[b]));
        let Some(j) = entering else {
            return Ok(lam);
        };
        passive[j] = true;
        loop {
            let p: Vec<usize> = (0..r).filter(|&i| passive[i]).collect();
            let sub = q.principal_submatrix(&p);
            let rhs: Vec<f64> = p.iter().map(|&i| -c[i]).collect();
            let s = sub.solve_lu(&rhs).map_err(OcpError::DegenerateConstraint)?;
            if s.iter().all(|v| *v > 0.0) {
                for (a, &i) in p.iter().enumerate() {
                    lam[i] = s[a];
                }
                break;
            }
            let mut step = 1.0_f64;
            for (a, &i) in p.iter().enumerate() {
                if s[a] <= 0.0 {
                    step = step.min(lam[i] / (lam[i] - s[a]));
                }
            }
            for (a, &i) in p.iter().enumerate() {
                lam[i] += step * (s[a] - lam[i]);
                if lam[i] <= tol * 1e-3 {
                    lam[i] = 0.0;
                    passive[i] = false;
                }
            }
        }
    }
    Err(OcpError::Infeasible)
}

fn solve_dual(model: &DenseModel, cons: &Constraints) -> Result<(Vec<f64>, Vec<f64>), OcpError> {
    let chol = model.h.cholesky()?;
    let n_rows = cons.rows.len();
    let hinv_et: Vec<Vec<f64>> = (0..n_rows).map(|r| chol.solve(cons.e.row(r))).collect();
    let hinv_b = chol.solve(&model.b);
    let mut qmat = DenseMatrix::zeros(n_rows, n_rows);
    for a in 0..n_rows {
        for b in 0..n_rows {
            qmat[(a, b)] = vecops::dot(cons.e.row(a), &hinv_et[b]);
        }
    }
    let c: Vec<f64> = (0..n_rows).map(|r| cons.f[r] - vecops::dot(cons.e.row(r), &hinv_b)).collect();
    let lam = nonnegative_qp(&qmat, &c)?;
    let mut q = hinv_b;
    for (r, l) in lam.iter().enumerate() {
        if *l != 0.0 {
            vecops::axpy(-l, &hinv_et[r], &mut q);
        }
    }
    if !admissible(cons, &q, &lam, 1e-9) {
        return Err(OcpError::Infeasible);
    }
    Ok((q, lam))
}

fn assemble_point(
    problem: &OcpProblem<'_>,
    model: &DenseModel,
    cons: &Constraints,
    q: Vec<f64>,
    lam: &[f64],
) -> KktPoint {
    let n_q = problem.n_q();
    let mut mu = vec![0.0; model.slabs];
    let mut eta = vec![0.0; q.len()];
    let mut active = ActiveSets::default();
    for (row, &l) in cons.rows.iter().zip(lam) {
        if l <= 0.0 {
            continue;
        }
        match *row {
            Row::State(m) => {
                mu[m] = l;
                active.state.push(m);
            }
            Row::Upper(i) => {
                eta[i] += l / model.mqq[i];
                active.upper.push(i);
            }
            Row::Lower(i) => {
                eta[i] -= l / model.mqq[i];
                active.lower.push(i);
            }
        }
    }
    active.lower.sort_unstable();
    active.upper.sort_unstable();
    let u = model.g.matvec(&q);
    let z = model.adjoint(problem, &u, &mu);
    KktPoint {
        q: SpaceTimeField::from_data(FieldKind::Control, n_q, q),
        u: SpaceTimeField::from_data(FieldKind::Velocity, model.n_u, u),
        z: SpaceTimeField::from_data(FieldKind::Velocity, model.n_u, z),
        mu,
        eta,
        active,
    }
}

/// Dense reference solution of the discrete problem.
///
/// Without control bounds all `2^M` state active sets are tried (`M <= 5`);
/// with bounds the dual non-negative QP is solved (`n_q M <= 60`).
pub fn enumerate_active_sets_oracle(problem: &OcpProblem<'_>) -> Result<KktPoint, OcpError> {
    let slabs = problem.grid().slabs();
    let n = problem.n_controls();
    if problem.spec().has_bounds() {
        if n > MAX_BOUNDED_CONTROLS {
            return Err(OcpError::InvalidSpec(format!(
                "oracle with bounds supports at most {MAX_BOUNDED_CONTROLS} controls, got {n}"
            )));
        }
    } else if slabs > MAX_ENUMERATED_SLABS {
        return Err(OcpError::InvalidSpec(format!(
            "oracle supports at most {MAX_ENUMERATED_SLABS} slabs, got {slabs}"
        )));
    }
    let model = DenseModel::new(problem)?;
    let cons = constraints(problem, &model);
    let (q, lam) = if problem.spec().has_bounds() {
        solve_dual(&model, &cons)?
    } else {
        enumerate(&model, &cons)?
    };
    Ok(assemble_point(problem, &model, &cons, q, &lam))
}

/// Exhaustive enumeration regardless of bounds; only for cross-checks.
#[cfg(test)]
pub(crate) fn enumerate_all(problem: &OcpProblem<'_>) -> Result<KktPoint, OcpError> {
    let model = DenseModel::new(problem)?;
    let cons = constraints(problem, &model);
    let (q, lam) = enumerate(&model, &cons)?;
    Ok(assemble_point(problem, &model, &cons, q, &lam))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::Discretization;
    use crate::ocp::tests::toy_spec;
    use crate::stokes::{gw_trajectory, TimeGrid};

    #[test]
    fn unconstrained_picks_empty_set() {
        let disc = Discretization::unit_square(2).unwrap();
        let p = OcpProblem::new(toy_spec(f64::INFINITY), &disc, TimeGrid::uniform(1.0, 3).unwrap()).unwrap();
        let pt = enumerate_active_sets_oracle(&p).unwrap();
        assert!(pt.active.state.is_empty());
        assert!(pt.mu.iter().all(|m| *m == 0.0));
        // gradient vanishes: alpha M q + G^T (M u - D) = 0 via the sparse adjoint
        let z = p.adjoint(Some(&p.state(pt.q.as_slice()).unwrap()), &[], true).unwrap();
        let g = p.gradient(pt.q.as_slice(), &z);
        let scale = vecops::norm_inf(&p.coupling_transpose(&z)).max(1e-300);
        assert!(vecops::norm_inf(&g) <= 1e-9 * scale, "{:e}", vecops::norm_inf(&g));
        // dense and sparse states agree
        let u = p.state(pt.q.as_slice()).unwrap();
        assert!(vecops::max_abs_diff(u.as_slice(), pt.u.as_slice()) <= 1e-10 * vecops::norm_inf(u.as_slice()));
    }

    #[test]
    fn binding_slab_is_detected() {
        let disc = Discretization::unit_square(2).unwrap();
        let grid = TimeGrid::uniform(1.0, 3).unwrap();
        let free = OcpProblem::new(toy_spec(f64::INFINITY), &disc, grid.clone()).unwrap();
        let pt = enumerate_active_sets_oracle(&free).unwrap();
        let g = gw_trajectory(&pt.u, free.g_w());
        let (top, gmax) = g.iter().enumerate().fold((0, f64::MIN), |b, (i, v)| if *v > b.1 { (i, *v) } else { b });
        let second = g.iter().enumerate().filter(|(i, _)| *i != top).map(|(_, v)| *v).fold(f64::MIN, f64::max);
        assert!(gmax > 0.0 && second < gmax);
        let beta = gmax - 0.1 * (gmax - second);
        let p = OcpProblem::new(toy_spec(beta), &disc, grid).unwrap();
        let pc = enumerate_active_sets_oracle(&p).unwrap();
        assert!(pc.active.state.contains(&top));
        assert!(pc.mu[top] > 0.0);
        let gc = gw_trajectory(&pc.u, p.g_w());
        assert!((gc[top] - beta).abs() <= 1e-10 * beta);
    }

    #[test]
    fn dual_qp_matches_enumeration() {
        let disc = Discretization::unit_square(2).unwrap();
        let mut spec = toy_spec(f64::INFINITY);
        spec.upper = [0.3, 0.2];
        let grid = TimeGrid::uniform(1.0, 1).unwrap();
        let free = OcpProblem::new(spec.clone(), &disc, grid.clone()).unwrap();
        let g0 = gw_trajectory(&enumerate_active_sets_oracle(&free).unwrap().u, free.g_w());
        spec.beta = 0.9 * g0[0];
        let p = OcpProblem::new(spec, &disc, grid).unwrap();
        let a = enumerate_active_sets_oracle(&p).unwrap();
        let b = enumerate_all(&p).unwrap();
        assert!(!a.active.upper.is_empty());
        assert!(vecops::max_abs_diff(a.q.as_slice(), b.q.as_slice()) <= 1e-9);
        assert!((a.mu[0] - b.mu[0]).abs() <= 1e-9 * b.mu[0].abs().max(1.0));
        assert_eq!(a.active, b.active);
    }

    #[test]
    fn size_limits() {
        let disc = Discretization::unit_square(2).unwrap();
        let p = OcpProblem::new(toy_spec(1.0), &disc, TimeGrid::uniform(1.0, 6).unwrap()).unwrap();
        assert!(matches!(enumerate_active_sets_oracle(&p), Err(OcpError::InvalidSpec(_))));
    }
}
