//! Small control problems shared by the integration tests.

#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use stokes_ocp::functions::{SpaceTimeFunction, TimeProfile};
use stokes_ocp::linalg::vecops;
use stokes_ocp::ocp::{pdas_solve, KktPoint, OcpProblem, OcpSpec, PdasConfig};
use stokes_ocp::stokes::{gw_trajectory, TimeGrid};
use stokes_ocp::Discretization;

pub fn spec(alpha: f64, beta: f64, upper: f64) -> OcpSpec {
    let mut desired = SpaceTimeFunction::zero();
    desired.add_term(TimeProfile::new(|t| 60.0 * (PI * t).sin()), |x| {
        let (s0, s1) = ((PI * x[0]).sin(), (PI * x[1]).sin());
        [s0 * s0 * (2.0 * PI * x[1]).sin(), -s1 * s1 * (2.0 * PI * x[0]).sin()]
    });
    desired.add_term(TimeProfile::new(|t| 10.0 * t), |x| [x[1] - 0.5, 0.5 - x[0]]);
    OcpSpec {
        alpha,
        beta,
        lower: [-upper, f64::NEG_INFINITY],
        upper: [upper, upper],
        weight: Arc::new(|x| [0.5 - x[1], x[0] - 0.5]),
        desired,
        t_final: 1.0,
    }
}

pub fn unconstrained_peak(disc: &Discretization, grid: &TimeGrid, s: &OcpSpec) -> f64 {
    let mut free = s.clone();
    free.beta = f64::INFINITY;
    let p = OcpProblem::new(free, disc, grid.clone()).unwrap();
    let out = pdas_solve(&p, &PdasConfig::for_beta(f64::INFINITY), None).unwrap();
    gw_trajectory(&out.point.u, p.g_w()).into_iter().fold(f64::MIN, f64::max)
}

/// `(alpha, beta as a fraction of the unconstrained peak, control bound, M)`
/// on the n = 2 mesh; infinite entries switch the constraint off.
pub const ORACLE_CASES: [(f64, f64, f64, usize); 6] = [
    (0.01, 0.6, f64::INFINITY, 4),
    (0.01, 0.3, f64::INFINITY, 3),
    (0.05, 0.8, f64::INFINITY, 2),
    (0.01, 0.6, 3.0, 3),
    (0.01, 0.4, 2.0, 3),
    (0.02, f64::INFINITY, 1.5, 2),
];

pub fn oracle_spec(disc: &Discretization, case: (f64, f64, f64, usize)) -> (OcpSpec, TimeGrid) {
    let (alpha, frac, upper, slabs) = case;
    let grid = TimeGrid::uniform(1.0, slabs).unwrap();
    let mut s = spec(alpha, f64::INFINITY, upper);
    if frac.is_finite() {
        s.beta = frac * unconstrained_peak(disc, &grid, &s);
    }
    (s, grid)
}

/// Largest componentwise gap in `q`, `u`, `mu`, each relative to
/// `max(1, ||b||_inf)`.
pub fn relative_gap(a: &KktPoint, b: &KktPoint) -> f64 {
    let gap = |x: &[f64], y: &[f64]| vecops::max_abs_diff(x, y) / vecops::norm_inf(y).max(1.0);
    gap(a.q.as_slice(), b.q.as_slice())
        .max(gap(a.u.as_slice(), b.u.as_slice()))
        .max(gap(&a.mu, &b.mu))
}
