//! Block diagonal preconditioner `diag(alpha M^qq, (1/alpha) S_hat)` with
//! `S_hat = (W S M^uq) (M^qq)^{-1} (W S M^uq)^T`.

use crate::linalg::{DenseCholesky, DenseMatrix};
use crate::par;
use crate::stokes::SpaceTimeField;

use super::{OcpError, OcpProblem};

/// Columns of `S^T W^T`: column `a` is the adjoint solution for the load `g_w`
/// on slab `a`.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightColumns {
    /// Uniform grids: column `a` has block `base[m + M - 1 - a]` at slab
    /// `m <= a` and zeros after.
    Toeplitz { base: SpaceTimeField },
    Columns(Vec<SpaceTimeField>),
}

impl WeightColumns {
    pub fn slabs(&self) -> usize {
        match self {
            WeightColumns::Toeplitz { base } => base.slabs(),
            WeightColumns::Columns(c) => c.len(),
        }
    }

    /// Block `m` of column `a`, `None` where it vanishes identically.
    pub fn block(&self, a: usize, m: usize) -> Option<&[f64]> {
        match self {
            WeightColumns::Toeplitz { base } => {
                let big_m = base.slabs();
                (m <= a).then(|| base.block(m + big_m - 1 - a))
            }
            WeightColumns::Columns(c) => Some(c[a].block(m)),
        }
    }

    pub fn column(&self, a: usize, n_u: usize) -> SpaceTimeField {
        let slabs = self.slabs();
        let mut out = SpaceTimeField::zeros(crate::stokes::FieldKind::Velocity, slabs, n_u);
        for m in 0..slabs {
            if let Some(b) = self.block(a, m) {
                out.block_mut(m).copy_from_slice(b);
            }
        }
        out
    }
}

fn unit(m: usize, slabs: usize) -> Vec<f64> {
    let mut e = vec![0.0; slabs];
    e[m] = 1.0;
    e
}

/// One adjoint solve on uniform grids, `M` solves otherwise.
pub fn assemble_adjoint_weight_columns(problem: &OcpProblem<'_>) -> Result<WeightColumns, OcpError> {
    let slabs = problem.grid().slabs();
    if problem.grid().is_uniform() {
        let base = problem.adjoint(None, &unit(slabs - 1, slabs), false)?;
        Ok(WeightColumns::Toeplitz { base })
    } else {
        log::warn!("non-uniform time grid: assembling {slabs} weight columns one by one");
        brute_force_weight_columns(problem)
    }
}

/// Column by column, one adjoint solve each.
pub fn brute_force_weight_columns(problem: &OcpProblem<'_>) -> Result<WeightColumns, OcpError> {
    let slabs = problem.grid().slabs();
    let cols = (0..slabs)
        .map(|a| problem.adjoint(None, &unit(a, slabs), false))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(WeightColumns::Columns(cols))
}

/// The full `M x M` Schur block and the control mass diagonal.
#[derive(Debug, Clone)]
pub struct SchurPrecond {
    s_hat: DenseMatrix,
    alpha: f64,
    mqq: Vec<f64>,
}

/// Builds `S_hat` and checks it is positive definite.
pub fn build_preconditioner(problem: &OcpProblem<'_>, cols: &WeightColumns) -> Result<SchurPrecond, OcpError> {
    let slabs = problem.grid().slabs();
    let n_q = problem.n_q();
    let c = &problem.disc().control_coupling;
    let area = &problem.disc().control_mass;
    let y_of = |z: &[f64]| -> Vec<f64> {
        let mut y = vec![0.0; n_q];
        c.spmv_transpose_add(1.0, z, &mut y);
        y
    };
    let inner = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).zip(area).map(|((x, y), w)| x * y / w).sum() };
    let mut s_hat = DenseMatrix::zeros(slabs, slabs);
    match cols {
        WeightColumns::Toeplitz { base } => {
            let k = problem.grid().k(0);
            let y: Vec<Vec<f64>> = base.blocks().map(y_of).collect();
            // Gram matrix g[r][s] = k y_r^T A^{-1} y_s, rows in parallel
            let g: Vec<Vec<f64>> = par::map_range(slabs, |r| (0..slabs).map(|s| k * inner(&y[r], &y[s])).collect());
            for b in 0..slabs {
                s_hat[(0, b)] = g[slabs - 1][slabs - 1 - b];
            }
            for a in 1..slabs {
                for b in a..slabs {
                    s_hat[(a, b)] = g[slabs - 1 - a][slabs - 1 - b] + s_hat[(a - 1, b - 1)];
                }
            }
            for a in 0..slabs {
                for b in 0..a {
                    s_hat[(a, b)] = s_hat[(b, a)];
                }
            }
        }
        WeightColumns::Columns(z) => {
            let y: Vec<Vec<Vec<f64>>> = z.iter().map(|col| col.blocks().map(y_of).collect()).collect();
            for a in 0..slabs {
                for b in 0..=a {
                    let v: f64 = (0..slabs)
                        .map(|m| problem.grid().k(m) * inner(&y[a][m], &y[b][m]))
                        .sum();
                    s_hat[(a, b)] = v;
                    s_hat[(b, a)] = v;
                }
            }
        }
    }
    s_hat.cholesky().map_err(OcpError::DegenerateConstraint)?;
    Ok(SchurPrecond {
        s_hat,
        alpha: problem.spec().alpha,
        mqq: problem.control_mass(),
    })
}

impl SchurPrecond {
    pub fn s_hat(&self) -> &DenseMatrix {
        &self.s_hat
    }

    /// Preconditioner for free controls `free` and active slabs `active`.
    pub fn restrict(&self, free: &[usize], active: &[usize]) -> Result<ActivePreconditioner, OcpError> {
        let chol = if active.is_empty() {
            None
        } else {
            Some(
                self.s_hat
                    .principal_submatrix(active)
                    .cholesky()
                    .map_err(OcpError::DegenerateConstraint)?,
            )
        };
        Ok(ActivePreconditioner {
            control_diag: free.iter().map(|&i| self.alpha * self.mqq[i]).collect(),
            alpha: self.alpha,
            chol,
        })
    }
}

/// `P^{-1}` on the vector layout `[q_free, mu_active]`.
#[derive(Debug, Clone)]
pub struct ActivePreconditioner {
    control_diag: Vec<f64>,
    alpha: f64,
    chol: Option<DenseCholesky>,
}

impl ActivePreconditioner {
    pub fn apply(&self, r: &[f64], out: &mut [f64]) {
        let nf = self.control_diag.len();
        for i in 0..nf {
            out[i] = r[i] / self.control_diag[i];
        }
        if let Some(ch) = &self.chol {
            out[nf..].copy_from_slice(&r[nf..]);
            ch.solve_in_place(&mut out[nf..]);
            for v in &mut out[nf..] {
                *v *= self.alpha;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::Discretization;
    use crate::linalg::vecops;
    use crate::ocp::tests::toy_spec;
    use crate::stokes::TimeGrid;
    use std::sync::Arc;

    #[test]
    fn toeplitz_matches_brute_force() {
        let disc = Discretization::unit_square(3).unwrap();
        for slabs in [1usize, 3, 5] {
            let p = OcpProblem::new(toy_spec(1.0), &disc, TimeGrid::uniform(1.0, slabs).unwrap()).unwrap();
            let t = assemble_adjoint_weight_columns(&p).unwrap();
            let b = brute_force_weight_columns(&p).unwrap();
            for a in 0..slabs {
                let d = vecops::max_abs_diff(t.column(a, disc.n_u()).as_slice(), b.column(a, disc.n_u()).as_slice());
                assert!(d <= 1e-12, "M={slabs} column {a}: {d:e}");
            }
            let st = build_preconditioner(&p, &t).unwrap();
            let sb = build_preconditioner(&p, &b).unwrap();
            let scale = vecops::norm_inf(sb.s_hat().values());
            assert!(vecops::max_abs_diff(st.s_hat().values(), sb.s_hat().values()) <= 1e-12 * scale);
        }
    }

    #[test]
    fn s_hat_matches_dense_product() {
        let disc = Discretization::unit_square(2).unwrap();
        let p = OcpProblem::new(toy_spec(1.0), &disc, TimeGrid::uniform(1.0, 2).unwrap()).unwrap();
        let pre = build_preconditioner(&p, &assemble_adjoint_weight_columns(&p).unwrap()).unwrap();
        // rows of B = W S M^uq from forward solves of unit controls
        let n = p.n_controls();
        let mut bmat = vec![vec![0.0; n]; 2];
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            let g = crate::stokes::gw_trajectory(&p.state(&e).unwrap(), p.g_w());
            bmat[0][j] = g[0];
            bmat[1][j] = g[1];
        }
        let mqq = p.control_mass();
        for a in 0..2 {
            for b in 0..2 {
                let v: f64 = (0..n).map(|j| bmat[a][j] * bmat[b][j] / mqq[j]).sum();
                assert!((pre.s_hat()[(a, b)] - v).abs() <= 1e-12 * v.abs().max(1e-300));
            }
        }
    }

    #[test]
    fn zero_weight_is_degenerate() {
        let disc = Discretization::unit_square(2).unwrap();
        let mut spec = toy_spec(1.0);
        spec.weight = Arc::new(|_| [0.0, 0.0]);
        let p = OcpProblem::new(spec, &disc, TimeGrid::uniform(1.0, 3).unwrap()).unwrap();
        let cols = assemble_adjoint_weight_columns(&p).unwrap();
        assert!(cols.column(1, disc.n_u()).as_slice().iter().all(|v| *v == 0.0));
        assert!(matches!(build_preconditioner(&p, &cols), Err(OcpError::DegenerateConstraint(_))));
    }
}
