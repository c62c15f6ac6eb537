//! Optimal control layer: reduced Hessian, primal-dual active set loop with
//! preconditioned MINRES inner solves, KKT verification and a dense oracle.
//!
//! Controls are P0 in space and time, stored slab-major: block `m` holds the
//! `n_q` cell values of slab `m`. The state constraint `(u_m, w) <= beta` is
//! imposed per slab with multiplier coefficients `mu_m >= 0` (the multiplier
//! density on slab `m` is `mu_m / k_m`).

mod kkt;
mod oracle;
mod pdas;
mod precond;

pub use kkt::{evaluate_objective, kkt_residuals, KktReport, KktTolerances};
pub use oracle::enumerate_active_sets_oracle;
pub use pdas::{pdas_solve, OuterRecord, PdasConfig, PdasOutcome, PdasReport, WarmStart};
pub use precond::{assemble_adjoint_weight_columns, brute_force_weight_columns, build_preconditioner, SchurPrecond, WeightColumns};

use thiserror::Error;

use crate::fem::{assemble_weight_vector, Discretization, FemError, SeparableLoad};
use crate::functions::{SpaceTimeFunction, VectorFn};
use crate::linalg::{vecops, LinalgError};
use crate::stokes::{FieldKind, SpaceTimeField, StokesError, TimeGrid, TransientSolver};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OcpError {
    #[error("invalid problem: {0}")]
    InvalidSpec(String),
    #[error("MINRES did not converge in outer iteration {outer} (residual {residual:e})")]
    MinresNotConverged { outer: usize, residual: f64 },
    #[error("every control dof is fixed at a bound while {0} state constraints are active")]
    EmptyFreeSet(usize),
    #[error("Schur block is not positive definite; the weight is degenerate ({0})")]
    DegenerateConstraint(LinalgError),
    #[error("no admissible active set found")]
    Infeasible,
    #[error("{what}: expected length {expected}, got {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error(transparent)]
    Stokes(#[from] StokesError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Problem data. Bounds are per velocity component and may be infinite.
#[derive(Clone)]
pub struct OcpSpec {
    pub alpha: f64,
    pub beta: f64,
    pub lower: [f64; 2],
    pub upper: [f64; 2],
    pub weight: VectorFn,
    pub desired: SpaceTimeFunction,
    pub t_final: f64,
}

impl std::fmt::Debug for OcpSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OcpSpec")
            .field("alpha", &self.alpha)
            .field("beta", &self.beta)
            .field("lower", &self.lower)
            .field("upper", &self.upper)
            .field("t_final", &self.t_final)
            .finish_non_exhaustive()
    }
}

impl OcpSpec {
    pub fn validate(&self) -> Result<(), OcpError> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(OcpError::InvalidSpec(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.beta > 0.0) {
            return Err(OcpError::InvalidSpec(format!("beta must be positive, got {}", self.beta)));
        }
        for c in 0..2 {
            if !(self.lower[c] < self.upper[c]) || self.lower[c].is_nan() || self.upper[c].is_nan() {
                return Err(OcpError::InvalidSpec(format!(
                    "bounds [{}, {}] are empty in component {c}",
                    self.lower[c], self.upper[c]
                )));
            }
        }
        if !(self.t_final > 0.0) || !self.t_final.is_finite() {
            return Err(OcpError::InvalidSpec(format!("horizon must be positive, got {}", self.t_final)));
        }
        Ok(())
    }

    pub fn has_bounds(&self) -> bool {
        self.lower.iter().chain(&self.upper).any(|b| b.is_finite())
    }

    pub fn state_constrained(&self) -> bool {
        self.beta.is_finite()
    }
}

/// Control active sets (dof indices into the slab-major control vector).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ActiveSets {
    /// Slabs where the state constraint is active.
    pub state: Vec<usize>,
    pub lower: Vec<usize>,
    pub upper: Vec<usize>,
}

impl ActiveSets {
    pub fn is_disjoint(&self) -> bool {
        let mut a = self.lower.clone();
        a.sort_unstable();
        self.upper.iter().all(|i| a.binary_search(i).is_err())
    }
}

/// A (candidate) optimal point.
#[derive(Debug, Clone, PartialEq)]
pub struct KktPoint {
    pub q: SpaceTimeField,
    pub u: SpaceTimeField,
    pub z: SpaceTimeField,
    /// Per-slab state multiplier coefficients.
    pub mu: Vec<f64>,
    /// Control multiplier density `-(alpha q + pi_d z)`; positive at upper
    /// bounds, negative at lower bounds.
    pub eta: Vec<f64>,
    pub active: ActiveSets,
}

impl KktPoint {
    /// `||mu||_{L^1(I)}` of the density `sum_m (mu_m / k_m) chi_m`, integrated
    /// slab by slab.
    pub fn multiplier_l1(&self, grid: &TimeGrid) -> f64 {
        self.mu
            .iter()
            .enumerate()
            .map(|(m, mu)| (mu / grid.k(m)).abs() * grid.k(m))
            .sum()
    }
}

/// Discretized control problem: operators, weight vector and desired-state
/// slab loads on one (mesh, time grid) pair.
pub struct OcpProblem<'a> {
    spec: OcpSpec,
    solver: TransientSolver<'a>,
    g_w: Vec<f64>,
    /// `D_m = int_{I_m} (u_d, phi_i)`.
    desired_loads: SpaceTimeField,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl<'a> OcpProblem<'a> {
    pub fn new(spec: OcpSpec, disc: &'a Discretization, grid: TimeGrid) -> Result<Self, OcpError> {
        spec.validate()?;
        if (grid.t_final() - spec.t_final).abs() > 1e-12 * spec.t_final {
            return Err(OcpError::InvalidSpec(format!(
                "time grid ends at {} but the horizon is {}",
                grid.t_final(),
                spec.t_final
            )));
        }
        let w = spec.weight.clone();
        let g_w = assemble_weight_vector(&disc.mesh, &disc.spaces, move |x| w(x))?;
        let loader = SeparableLoad::new(&disc.mesh, &disc.spaces, &spec.desired)?;
        let n_u = disc.n_u();
        let mut desired_loads = SpaceTimeField::zeros(FieldKind::Velocity, grid.slabs(), n_u);
        for m in 0..grid.slabs() {
            let (t0, t1) = grid.slab(m);
            loader.slab_into(t0, t1, desired_loads.block_mut(m))?;
        }
        let nc = disc.spaces.n_cells();
        let per_dof = |b: [f64; 2]| -> Vec<f64> { (0..2 * nc).map(|i| b[i / nc]).collect() };
        let lower = per_dof(spec.lower);
        let upper = per_dof(spec.upper);
        let solver = TransientSolver::new(disc, grid)?;
        Ok(OcpProblem {
            spec,
            solver,
            g_w,
            desired_loads,
            lower,
            upper,
        })
    }

    pub fn spec(&self) -> &OcpSpec {
        &self.spec
    }

    pub fn disc(&self) -> &'a Discretization {
        self.solver.disc()
    }

    pub fn grid(&self) -> &TimeGrid {
        self.solver.grid()
    }

    pub fn solver(&self) -> &TransientSolver<'a> {
        &self.solver
    }

    pub fn g_w(&self) -> &[f64] {
        &self.g_w
    }

    pub fn desired_loads(&self) -> &SpaceTimeField {
        &self.desired_loads
    }

    pub fn n_q(&self) -> usize {
        self.disc().n_q()
    }

    pub fn n_controls(&self) -> usize {
        self.grid().slabs() * self.n_q()
    }

    /// Lower and upper bound of control dof `i` within a slab block.
    pub fn bounds(&self, i: usize) -> (f64, f64) {
        (self.lower[i], self.upper[i])
    }

    /// Diagonal of `M^qq` (entry `k_m |K|`) for the whole control vector.
    pub fn control_mass(&self) -> Vec<f64> {
        let area = &self.disc().control_mass;
        (0..self.grid().slabs())
            .flat_map(|m| {
                let k = self.grid().k(m);
                area.iter().map(move |a| k * a)
            })
            .collect()
    }

    fn check_controls(&self, q: &[f64]) -> Result<(), OcpError> {
        if q.len() != self.n_controls() {
            return Err(OcpError::DimensionMismatch {
                what: "control vector",
                expected: self.n_controls(),
                found: q.len(),
            });
        }
        Ok(())
    }

    /// `u = S M^uq q`.
    pub fn state(&self, q: &[f64]) -> Result<SpaceTimeField, OcpError> {
        self.check_controls(q)?;
        let n_q = self.n_q();
        let c = &self.disc().control_coupling;
        let traj = self.solver.forward(
            |m, f| {
                c.spmv_add(self.grid().k(m), &q[m * n_q..(m + 1) * n_q], f);
                Ok(())
            },
            false,
        )?;
        Ok(traj.velocity)
    }

    /// `z = S^T (M^uu u - D + W^T mu)`; `desired` toggles the `-D` term and
    /// `mu` may be shorter than `M` only when empty.
    pub fn adjoint(&self, u: Option<&SpaceTimeField>, mu: &[f64], desired: bool) -> Result<SpaceTimeField, OcpError> {
        let mass = &self.disc().mass;
        let z = self.solver.adjoint(|m, g| {
            let k = self.grid().k(m);
            if let Some(u) = u {
                mass.spmv_add(k, u.block(m), g);
            }
            if desired {
                vecops::axpy(-1.0, self.desired_loads.block(m), g);
            }
            if let Some(&mu_m) = mu.get(m) {
                if mu_m != 0.0 {
                    vecops::axpy(mu_m, &self.g_w, g);
                }
            }
            Ok(())
        })?;
        Ok(z)
    }

    /// `(M^uq)^T z`: blocks `k_m C^T z_m`.
    pub fn coupling_transpose(&self, z: &SpaceTimeField) -> Vec<f64> {
        let n_q = self.n_q();
        let c = &self.disc().control_coupling;
        let mut out = vec![0.0; self.n_controls()];
        for m in 0..self.grid().slabs() {
            c.spmv_transpose_add(self.grid().k(m), z.block(m), &mut out[m * n_q..(m + 1) * n_q]);
        }
        out
    }

    /// `alpha M^qq q + (M^uq)^T z`.
    pub fn gradient(&self, q: &[f64], z: &SpaceTimeField) -> Vec<f64> {
        let mut g = self.coupling_transpose(z);
        for ((gi, qi), mi) in g.iter_mut().zip(q).zip(self.control_mass()) {
            *gi += self.spec.alpha * mi * qi;
        }
        g
    }

    /// `pi_d z`: the control-space representation `C^T z_m / |K|` per slab.
    pub fn adjoint_in_control_space(&self, z: &SpaceTimeField) -> Vec<f64> {
        let n_q = self.n_q();
        let c = &self.disc().control_coupling;
        let area = &self.disc().control_mass;
        let mut out = vec![0.0; self.n_controls()];
        for m in 0..self.grid().slabs() {
            let block = &mut out[m * n_q..(m + 1) * n_q];
            c.spmv_transpose_add(1.0, z.block(m), block);
            for (v, a) in block.iter_mut().zip(area) {
                *v /= a;
            }
        }
        out
    }

    /// Reduced Hessian `alpha M^qq v + (M^uq)^T S^T M^uu S M^uq v`.
    pub fn reduced_hessian_apply(&self, v: &[f64]) -> Result<Vec<f64>, OcpError> {
        let u = self.state(v)?;
        let z = self.adjoint(Some(&u), &[], false)?;
        Ok(self.gradient(v, &z))
    }

    /// Clamp of a control vector to the bounds.
    pub fn project_bounds(&self, q: &[f64]) -> Vec<f64> {
        let n_q = self.n_q();
        q.iter()
            .enumerate()
            .map(|(i, v)| v.clamp(self.lower[i % n_q], self.upper[i % n_q]))
            .collect()
    }
}

/// Componentwise clamp `min(q_b, max(q, q_a))`; infinite bounds pass values through.
pub fn project_bounds(q: &[f64], lower: &[f64], upper: &[f64]) -> Vec<f64> {
    q.iter()
        .zip(lower.iter().zip(upper))
        .map(|(v, (a, b))| v.max(*a).min(*b))
        .collect()
}

/// Cell/slab averages `1/(k_m |K|) int_{I_m x K} q` of an analytic field.
pub fn pi_d(q: &SpaceTimeFunction, disc: &Discretization, grid: &TimeGrid) -> Result<SpaceTimeField, OcpError> {
    let rule = crate::fem::quadrature_rule(crate::fem::DATA_DEGREE)?;
    let spatial: Vec<Vec<f64>> = q
        .terms()
        .iter()
        .map(|t| {
            let s = t.space.clone();
            disc.spaces.project_control(&disc.mesh, move |x| s(x), &rule)
        })
        .collect();
    let n_q = disc.n_q();
    let mut out = SpaceTimeField::zeros(FieldKind::Control, grid.slabs(), n_q);
    for m in 0..grid.slabs() {
        let (t0, t1) = grid.slab(m);
        let block = out.block_mut(m);
        for (term, s) in q.terms().iter().zip(&spatial) {
            let c = term.time.integrate(t0, t1) / (t1 - t0);
            for i in 0..n_q {
                block[i] += c * s[i];
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::TimeProfile;
    use rand::{Rng, SeedableRng};
    use std::sync::Arc;

    pub(crate) fn toy_spec(beta: f64) -> OcpSpec {
        let mut desired = SpaceTimeFunction::zero();
        desired.add_term(TimeProfile::new(|t| 40.0 * (std::f64::consts::PI * t).sin()), |x| {
            let s = (std::f64::consts::PI * x[0]).sin() * (std::f64::consts::PI * x[1]).sin();
            [s, x[0] * s]
        });
        OcpSpec {
            alpha: 0.01,
            beta,
            lower: [f64::NEG_INFINITY; 2],
            upper: [f64::INFINITY; 2],
            weight: Arc::new(|x| [x[0] * (1.0 - x[0]), x[1] * (1.0 - x[1])]),
            desired,
            t_final: 1.0,
        }
    }

    #[test]
    fn spec_validation() {
        let mut s = toy_spec(1.0);
        assert!(s.validate().is_ok());
        s.alpha = 0.0;
        assert!(s.validate().is_err());
        let mut s = toy_spec(1.0);
        s.lower = [1.0, 0.0];
        s.upper = [1.0, 1.0];
        assert!(s.validate().is_err());
        assert!(toy_spec(-1.0).validate().is_err());
        assert!(toy_spec(f64::INFINITY).validate().is_ok());
    }

    #[test]
    fn projection_and_pi_d() {
        let q = vec![-3.0, 0.5, 7.0];
        let inf = f64::INFINITY;
        assert_eq!(project_bounds(&q, &[-inf; 3], &[inf; 3]), q);
        let p = project_bounds(&q, &[0.0; 3], &[1e-9; 3]);
        assert!(p.iter().all(|v| (0.0..=1e-9).contains(v)));
        let pp = project_bounds(&p, &[0.0; 3], &[1e-9; 3]);
        assert_eq!(p, pp);

        let disc = Discretization::unit_square(2).unwrap();
        let grid = TimeGrid::uniform(1.0, 4).unwrap();
        let constant = SpaceTimeFunction::separable(TimeProfile::constant(1.0), |_| [2.0, -1.0]);
        let pc = pi_d(&constant, &disc, &grid).unwrap();
        for b in pc.blocks() {
            for (i, v) in b.iter().enumerate() {
                let e = if i < disc.spaces.n_cells() { 2.0 } else { -1.0 };
                assert!((v - e).abs() < 1e-14);
            }
        }
        let linear = SpaceTimeFunction::separable(TimeProfile::new(|t| t), |_| [1.0, 0.0]);
        let pl = pi_d(&linear, &disc, &grid).unwrap();
        assert!((pl.block(2)[0] - 0.625).abs() < 1e-15);
        // bounded fields stay bounded
        let bounded = SpaceTimeFunction::separable(TimeProfile::new(|t| (9.0 * t).sin()), |x| {
            [(5.0 * x[0]).cos() * (3.0 * x[1]).sin(), 0.5]
        });
        let pb = pi_d(&bounded, &disc, &grid).unwrap();
        assert!(pb.as_slice().iter().all(|v| v.abs() <= 1.0 + 1e-14));
    }

    #[test]
    fn hessian_symmetric_and_coercive() {
        let disc = Discretization::unit_square(3).unwrap();
        let grid = TimeGrid::uniform(1.0, 5).unwrap();
        let p = OcpProblem::new(toy_spec(1.0), &disc, grid).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let n = p.n_controls();
        assert!(p.reduced_hessian_apply(&vec![0.0; n]).unwrap().iter().all(|v| *v == 0.0));
        let mqq = p.control_mass();
        for _ in 0..3 {
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let w: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let hv = p.reduced_hessian_apply(&v).unwrap();
            let hw = p.reduced_hessian_apply(&w).unwrap();
            let (a, b) = (vecops::dot(&hv, &w), vecops::dot(&v, &hw));
            assert!((a - b).abs() <= 1e-10 * a.abs().max(b.abs()));
            let vmv: f64 = v.iter().zip(&mqq).map(|(x, m)| m * x * x).sum();
            assert!(vecops::dot(&hv, &v) >= p.spec().alpha * vmv);
        }
    }
}
