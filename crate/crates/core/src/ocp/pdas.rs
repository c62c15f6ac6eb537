//! Primal-dual active set loop over state-constrained slabs and bound-active
//! control dofs. Every outer iteration solves one equality-constrained saddle
//! point system with preconditioned MINRES.

use crate::linalg::{minres, MinresOptions};
use crate::stokes::{gw_trajectory, FieldKind, SpaceTimeField};

use super::kkt::{kkt_residuals, KktReport, KktTolerances};
use super::precond::{assemble_adjoint_weight_columns, build_preconditioner, SchurPrecond};
use super::{ActiveSets, KktPoint, OcpError, OcpProblem};

#[derive(Debug, Clone, PartialEq)]
pub struct PdasConfig {
    pub c_state: f64,
    pub c_ctrl: f64,
    pub max_outer: usize,
    pub minres_rel_tol: f64,
    pub minres_max_iter: usize,
    /// Use the block diagonal preconditioner; identity when `false`.
    pub precondition: bool,
    pub tolerances: KktTolerances,
}

impl PdasConfig {
    pub fn for_beta(beta: f64) -> Self {
        PdasConfig {
            c_state: 1.0,
            c_ctrl: 1.0,
            max_outer: 50,
            minres_rel_tol: 1e-12,
            minres_max_iter: 2000,
            precondition: true,
            tolerances: KktTolerances::for_beta(beta),
        }
    }

    pub fn validate(&self) -> Result<(), OcpError> {
        let positive = [self.c_state, self.c_ctrl, self.minres_rel_tol];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) || self.max_outer == 0 || self.minres_max_iter == 0 {
            return Err(OcpError::InvalidSpec(format!("PDAS parameters must be positive: {self:?}")));
        }
        Ok(())
    }
}

/// Initial guess, usually a coarser solution mapped to the current grids.
/// Active sets are predicted from it with the update rule.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    pub q: Vec<f64>,
    pub mu: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct OuterRecord {
    pub outer: usize,
    pub state_active: usize,
    pub lower_active: usize,
    pub upper_active: usize,
    pub minres_iterations: usize,
    pub minres_residual: f64,
    pub max_violation: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct PdasReport {
    pub outer_iterations: usize,
    pub minres_iterations: usize,
    pub history: Vec<OuterRecord>,
    pub kkt: Option<KktReport>,
}

#[derive(Debug, Clone)]
pub struct PdasOutcome {
    pub point: KktPoint,
    pub report: PdasReport,
    /// Active sets repeated and the KKT check passed.
    pub converged: bool,
}

struct Iterate {
    point: KktPoint,
    g: Vec<f64>,
}

/// Full state, adjoint, and multipliers from `q` and `mu`. The bound
/// multiplier is kept on `active` dofs only, or everywhere when `active` is
/// `None` (set prediction from a warm start).
fn complete(problem: &OcpProblem<'_>, q: Vec<f64>, mu: Vec<f64>, active: Option<ActiveSets>) -> Result<Iterate, OcpError> {
    let u = problem.state(&q)?;
    let z = problem.adjoint(Some(&u), &mu, true)?;
    let g = gw_trajectory(&u, problem.g_w());
    let pz = problem.adjoint_in_control_space(&z);
    let alpha = problem.spec().alpha;
    let mut eta = vec![0.0; q.len()];
    match &active {
        Some(a) => {
            for &i in a.lower.iter().chain(&a.upper) {
                eta[i] = -(alpha * q[i] + pz[i]);
            }
        }
        None => {
            for i in 0..q.len() {
                eta[i] = -(alpha * q[i] + pz[i]);
            }
        }
    }
    let active = active.unwrap_or_default();
    let n_q = problem.n_q();
    Ok(Iterate {
        point: KktPoint {
            q: SpaceTimeField::from_data(FieldKind::Control, n_q, q),
            u,
            z,
            mu,
            eta,
            active,
        },
        g,
    })
}

fn update_sets(problem: &OcpProblem<'_>, cfg: &PdasConfig, it: &Iterate) -> ActiveSets {
    let grid = problem.grid();
    let beta = problem.spec().beta;
    let state = if problem.spec().state_constrained() {
        (0..grid.slabs())
            .filter(|&m| it.point.mu[m] / grid.k(m) + cfg.c_state * (it.g[m] - beta) > 0.0)
            .collect()
    } else {
        Vec::new()
    };
    let n_q = problem.n_q();
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    for (i, (&q, &eta)) in it.point.q.as_slice().iter().zip(&it.point.eta).enumerate() {
        let (a, b) = problem.bounds(i % n_q);
        if b.is_finite() && eta + cfg.c_ctrl * (q - b) > 0.0 {
            upper.push(i);
        } else if a.is_finite() && eta + cfg.c_ctrl * (q - a) < 0.0 {
            lower.push(i);
        }
    }
    ActiveSets { state, lower, upper }
}

/// Solves the discrete optimality system. Without a warm start all sets begin
/// empty.
pub fn pdas_solve(
    problem: &OcpProblem<'_>,
    cfg: &PdasConfig,
    warm: Option<&WarmStart>,
) -> Result<PdasOutcome, OcpError> {
    cfg.validate()?;
    let slabs = problem.grid().slabs();
    let n = problem.n_controls();
    let spec = problem.spec();

    let schur: Option<SchurPrecond> = if spec.state_constrained() && cfg.precondition {
        let cols = assemble_adjoint_weight_columns(problem)?;
        Some(build_preconditioner(problem, &cols)?)
    } else {
        None
    };

    let mut active = ActiveSets::default();
    let mut q_prev = vec![0.0; n];
    let mut mu_prev = vec![0.0; slabs];
    if let Some(w) = warm {
        if w.q.len() != n || w.mu.len() != slabs {
            return Err(OcpError::DimensionMismatch {
                what: "warm start",
                expected: n + slabs,
                found: w.q.len() + w.mu.len(),
            });
        }
        let guess = complete(problem, w.q.clone(), w.mu.clone(), None)?;
        active = update_sets(problem, cfg, &guess);
        q_prev = w.q.clone();
        mu_prev = w.mu.clone();
    }

    let mqq = problem.control_mass();
    let mut history = Vec::new();
    let mut total_minres = 0;
    let mut last: Option<Iterate> = None;
    for outer in 1..=cfg.max_outer {
        let mut fixed = vec![false; n];
        let mut q_x = vec![0.0; n];
        for &i in &active.lower {
            fixed[i] = true;
            q_x[i] = problem.bounds(i % problem.n_q()).0;
        }
        for &i in &active.upper {
            fixed[i] = true;
            q_x[i] = problem.bounds(i % problem.n_q()).1;
        }
        let free: Vec<usize> = (0..n).filter(|&i| !fixed[i]).collect();
        let act = active.state.clone();
        let nf = free.len();
        if nf == 0 && !act.is_empty() {
            return Err(OcpError::EmptyFreeSet(act.len()));
        }

        // right-hand side from the fixed part
        let u_x = problem.state(&q_x)?;
        let z_b = problem.adjoint(Some(&u_x), &[], true)?;
        let grad_x = problem.gradient(&q_x, &z_b);
        let g_x = gw_trajectory(&u_x, problem.g_w());
        let mut rhs: Vec<f64> = free.iter().map(|&i| -grad_x[i]).collect();
        rhs.extend(act.iter().map(|&m| spec.beta - g_x[m]));

        let apply = |x: &[f64], out: &mut [f64]| -> Result<(), OcpError> {
            let mut v = vec![0.0; n];
            for (j, &i) in free.iter().enumerate() {
                v[i] = x[j];
            }
            let mut nu = vec![0.0; if act.is_empty() { 0 } else { slabs }];
            for (j, &m) in act.iter().enumerate() {
                nu[m] = x[nf + j];
            }
            let u = problem.state(&v)?;
            let z = problem.adjoint(Some(&u), &nu, false)?;
            let g = problem.gradient(&v, &z);
            for (j, &i) in free.iter().enumerate() {
                out[j] = g[i];
            }
            if !act.is_empty() {
                let gw = gw_trajectory(&u, problem.g_w());
                for (j, &m) in act.iter().enumerate() {
                    out[nf + j] = gw[m];
                }
            }
            Ok(())
        };
        let pre = match &schur {
            Some(s) => Some(s.restrict(&free, &act)?),
            None => None,
        };
        let alpha = spec.alpha;
        let apply_p = |r: &[f64], out: &mut [f64]| -> Result<(), OcpError> {
            match &pre {
                Some(p) => p.apply(r, out),
                None if cfg.precondition => {
                    for (j, &i) in free.iter().enumerate() {
                        out[j] = r[j] / (alpha * mqq[i]);
                    }
                }
                None => out.copy_from_slice(r),
            }
            Ok(())
        };
        let mut x0: Vec<f64> = free.iter().map(|&i| q_prev[i]).collect();
        x0.extend(act.iter().map(|&m| mu_prev[m]));
        let opts = MinresOptions {
            rel_tol: cfg.minres_rel_tol,
            max_iter: cfg.minres_max_iter,
            ..MinresOptions::default()
        };
        let (x, iters, residual) = if rhs.is_empty() {
            (Vec::new(), 0, 0.0)
        } else {
            let warm_x0 = x0.iter().any(|v| *v != 0.0);
            let res = minres(apply, apply_p, &rhs, warm_x0.then_some(x0.as_slice()), &opts)?;
            if !res.converged {
                return Err(OcpError::MinresNotConverged {
                    outer,
                    residual: res.residual,
                });
            }
            (res.x, res.iterations, res.residual)
        };
        total_minres += iters;

        let mut q = q_x;
        for (j, &i) in free.iter().enumerate() {
            q[i] = x[j];
        }
        let mut mu = vec![0.0; slabs];
        for (j, &m) in act.iter().enumerate() {
            mu[m] = x[nf + j];
        }
        let it = complete(problem, q, mu, Some(active.clone()))?;
        let next = update_sets(problem, cfg, &it);
        let max_violation = it.g.iter().map(|g| g - spec.beta).fold(f64::NEG_INFINITY, f64::max);
        history.push(OuterRecord {
            outer,
            state_active: active.state.len(),
            lower_active: active.lower.len(),
            upper_active: active.upper.len(),
            minres_iterations: iters,
            minres_residual: residual,
            max_violation,
        });
        log::debug!(
            "pdas outer {outer}: |A| = {}, bounds {}/{}, minres {iters}",
            active.state.len(),
            active.lower.len(),
            active.upper.len()
        );
        q_prev.copy_from_slice(it.point.q.as_slice());
        mu_prev.copy_from_slice(&it.point.mu);
        let repeated = next == active;
        last = Some(it);
        if repeated {
            break;
        }
        active = next;
    }

    let it = last.expect("max_outer >= 1");
    let repeated = history.len() < cfg.max_outer || update_sets(problem, cfg, &it) == it.point.active;
    let kkt = kkt_residuals(problem, &it.point, &cfg.tolerances)?;
    let converged = repeated && kkt.passed;
    if !converged {
        log::warn!("PDAS stopped without convergence after {} outer iterations", history.len());
    }
    Ok(PdasOutcome {
        point: it.point,
        report: PdasReport {
            outer_iterations: history.len(),
            minres_iterations: total_minres,
            history,
            kkt: Some(kkt),
        },
        converged,
    })
}
