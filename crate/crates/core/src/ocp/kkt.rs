//! Optimality checks recomputed from scratch, independent of the solver.

use crate::fem::{space_time_l2_error, SlabField};
use crate::linalg::vecops;
use crate::stokes::{gw_trajectory, SpaceTimeField};

use super::{KktPoint, OcpError, OcpProblem};

#[derive(Debug, Clone, PartialEq)]
pub struct KktTolerances {
    /// Relative to `max(1, alpha ||q||)`, both in `L^2(I x Omega)`.
    pub stationarity: f64,
    pub feasibility: f64,
    pub complementarity: f64,
    /// Relative to `max(1, ||mu||_inf)`.
    pub sign: f64,
    /// Relative to `max(1, ||q||_inf)`.
    pub projection: f64,
}

impl KktTolerances {
    pub fn for_beta(beta: f64) -> Self {
        let scale = if beta.is_finite() { beta.max(1.0) } else { 1.0 };
        KktTolerances {
            stationarity: 1e-8,
            feasibility: 1e-8 * scale,
            complementarity: 1e-8 * scale,
            sign: 1e-12,
            projection: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct KktReport {
    /// `||alpha M^qq q + (M^uq)^T z + M^qq eta||` in the `(M^qq)^{-1}` norm.
    pub stationarity: f64,
    /// `max_m (g_w^T u_m - beta)^+`.
    pub feasibility: f64,
    /// `|sum_m mu_m (beta - g_w^T u_m)|`.
    pub complementarity: f64,
    /// `max_m (-mu_m)^+`.
    pub sign: f64,
    /// Bound violation of `q` plus multiplier entries of the wrong sign or off
    /// the bound.
    pub bounds: f64,
    /// `max_i |q_i - clamp(-pi_d z / alpha)_i|`.
    pub projection: f64,
    pub multiplier_sum: f64,
    pub multiplier_l1: f64,
    pub objective: f64,
    pub passed: bool,
}

/// `J(q, u) = 1/2 ||u - u_d||^2 + alpha/2 ||q||^2` over `I x Omega`.
pub fn evaluate_objective(problem: &OcpProblem<'_>, q: &[f64], u: &SpaceTimeField) -> Result<f64, OcpError> {
    let disc = problem.disc();
    let track = space_time_l2_error(
        &disc.mesh,
        &disc.spaces,
        problem.grid().nodes(),
        SlabField::Velocity(u.as_slice()),
        &problem.spec().desired,
    )?;
    let reg: f64 = q.iter().zip(problem.control_mass()).map(|(v, m)| m * v * v).sum();
    Ok(0.5 * track * track + 0.5 * problem.spec().alpha * reg)
}

/// Residuals of the discrete optimality system at `point`. State and adjoint
/// are re-solved from `point.q` and `point.mu`; the stored `u`, `z` are unused.
pub fn kkt_residuals(
    problem: &OcpProblem<'_>,
    point: &KktPoint,
    tol: &KktTolerances,
) -> Result<KktReport, OcpError> {
    let q = point.q.as_slice();
    let slabs = problem.grid().slabs();
    if point.mu.len() != slabs {
        return Err(OcpError::DimensionMismatch {
            what: "state multipliers",
            expected: slabs,
            found: point.mu.len(),
        });
    }
    if point.eta.len() != q.len() {
        return Err(OcpError::DimensionMismatch {
            what: "control multipliers",
            expected: q.len(),
            found: point.eta.len(),
        });
    }
    let spec = problem.spec();
    let u = problem.state(q)?;
    let z = problem.adjoint(Some(&u), &point.mu, true)?;
    let mqq = problem.control_mass();

    let grad = problem.gradient(q, &z);
    let stationarity = grad
        .iter()
        .zip(&point.eta)
        .zip(&mqq)
        .map(|((g, e), m)| {
            let r = g + m * e;
            r * r / m
        })
        .sum::<f64>()
        .sqrt();
    let q_norm = q.iter().zip(&mqq).map(|(v, m)| m * v * v).sum::<f64>().sqrt();

    let g = gw_trajectory(&u, problem.g_w());
    let beta = spec.beta;
    let feasibility = g.iter().map(|v| (v - beta).max(0.0)).fold(0.0, f64::max);
    let complementarity = g
        .iter()
        .zip(&point.mu)
        .filter(|(_, mu)| **mu != 0.0)
        .map(|(v, mu)| mu * (beta - v))
        .sum::<f64>()
        .abs();
    let sign = point.mu.iter().map(|mu| (-mu).max(0.0)).fold(0.0, f64::max);

    let n_q = problem.n_q();
    let mut bounds = 0.0_f64;
    for (i, (&qi, &ei)) in q.iter().zip(&point.eta).enumerate() {
        let (a, b) = problem.bounds(i % n_q);
        bounds = bounds.max((a - qi).max(0.0)).max((qi - b).max(0.0));
        let at_upper = qi == b;
        let at_lower = qi == a;
        if (ei > 0.0 && !at_upper) || (ei < 0.0 && !at_lower) {
            bounds = bounds.max(ei.abs());
        }
    }

    let pz = problem.adjoint_in_control_space(&z);
    let target: Vec<f64> = pz.iter().map(|v| -v / spec.alpha).collect();
    let projection = vecops::max_abs_diff(q, &problem.project_bounds(&target));

    let multiplier_sum: f64 = point.mu.iter().sum();
    let multiplier_l1 = point.multiplier_l1(problem.grid());
    let objective = evaluate_objective(problem, q, &u)?;

    let mu_scale = vecops::norm_inf(&point.mu).max(1.0);
    let passed = stationarity <= tol.stationarity * (spec.alpha * q_norm).max(1.0)
        && feasibility <= tol.feasibility
        && complementarity <= tol.complementarity
        && sign <= tol.sign * mu_scale
        && bounds <= tol.projection * vecops::norm_inf(q).max(1.0)
        && projection <= tol.projection * vecops::norm_inf(q).max(1.0);
    Ok(KktReport {
        stationarity,
        feasibility,
        complementarity,
        sign,
        bounds,
        projection,
        multiplier_sum,
        multiplier_l1,
        objective,
        passed,
    })
}
