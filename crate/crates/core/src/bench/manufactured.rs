//! Manufactured Stokes solutions for verifying the state discretization.

use std::f64::consts::PI;

use crate::fem::{
    h1_seminorm_error_velocity, l2_error_pressure, l2_error_velocity, space_time_l2_error, Discretization,
    SeparableLoad, SlabField,
};
use crate::functions::{SpaceTimeFunction, TimeProfile};
use crate::linalg::vecops;
use crate::stokes::{solve_stationary, StateTrajectory, TimeGrid, TransientSolver};

use super::BenchError;

// stream function g(x) g(y), g = sin^2(pi s)
fn g(s: f64, d: u32) -> f64 {
    match d {
        0 => (PI * s).sin().powi(2),
        1 => PI * (2.0 * PI * s).sin(),
        2 => 2.0 * PI * PI * (2.0 * PI * s).cos(),
        _ => -4.0 * PI.powi(3) * (2.0 * PI * s).sin(),
    }
}

/// Divergence-free velocity `curl(sin^2(pi x) sin^2(pi y))`.
pub fn velocity(x: [f64; 2]) -> [f64; 2] {
    [g(x[0], 0) * g(x[1], 1), -g(x[0], 1) * g(x[1], 0)]
}

/// `grad[c] = (d u_c / dx, d u_c / dy)`.
pub fn velocity_gradient(x: [f64; 2]) -> [[f64; 2]; 2] {
    [
        [g(x[0], 1) * g(x[1], 1), g(x[0], 0) * g(x[1], 2)],
        [-g(x[0], 2) * g(x[1], 0), -g(x[0], 1) * g(x[1], 1)],
    ]
}

pub fn velocity_laplacian(x: [f64; 2]) -> [f64; 2] {
    [
        g(x[0], 2) * g(x[1], 1) + g(x[0], 0) * g(x[1], 3),
        -g(x[0], 3) * g(x[1], 0) - g(x[0], 1) * g(x[1], 2),
    ]
}

/// Zero-mean pressure `cos(pi x) cos(pi y)`.
pub fn pressure(x: [f64; 2]) -> f64 {
    (PI * x[0]).cos() * (PI * x[1]).cos()
}

pub fn pressure_gradient(x: [f64; 2]) -> [f64; 2] {
    [
        -PI * (PI * x[0]).sin() * (PI * x[1]).cos(),
        -PI * (PI * x[0]).cos() * (PI * x[1]).sin(),
    ]
}

/// `-lap u + grad p`.
pub fn stationary_source(x: [f64; 2]) -> [f64; 2] {
    let (l, gp) = (velocity_laplacian(x), pressure_gradient(x));
    [-l[0] + gp[0], -l[1] + gp[1]]
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct StationaryRecord {
    pub n: usize,
    pub h: f64,
    pub err_u_l2: f64,
    pub err_u_h1: f64,
    pub err_p_l2: f64,
}

pub fn stationary_run(n: usize) -> Result<StationaryRecord, BenchError> {
    let disc = Discretization::unit_square(n)?;
    let (u, p) = solve_stationary(&disc, stationary_source)?;
    Ok(StationaryRecord {
        n,
        h: 1.0 / n as f64,
        err_u_l2: l2_error_velocity(&disc.mesh, &disc.spaces, &u, velocity)?,
        err_u_h1: h1_seminorm_error_velocity(&disc.mesh, &disc.spaces, &u, velocity_gradient)?,
        err_p_l2: l2_error_pressure(&disc.mesh, &disc.spaces, &p, pressure)?,
    })
}

/// `u = sin(omega t) u_s(x)`, `p = sin(omega t) p_s(x)` with zero initial
/// velocity.
#[derive(Clone, Debug)]
pub struct TransientManufactured {
    pub omega: f64,
    pub velocity: SpaceTimeFunction,
    /// `du/dt - lap u + grad p`.
    pub source: SpaceTimeFunction,
}

pub fn transient_manufactured(omega: f64) -> TransientManufactured {
    let a = TimeProfile::new(move |t| (omega * t).sin());
    let da = TimeProfile::new(move |t| omega * (omega * t).cos());
    let velocity_fn = SpaceTimeFunction::separable(a.clone(), velocity);
    let mut source = SpaceTimeFunction::zero();
    source.add_term(da, velocity);
    source.add_term(a, stationary_source);
    TransientManufactured {
        omega,
        velocity: velocity_fn,
        source,
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct TransientRecord {
    pub n: usize,
    pub m: usize,
    pub h: f64,
    pub k: f64,
    pub err_u: f64,
    pub max_velocity: f64,
    pub divergence: f64,
}

/// Forward sweep for the manufactured source on a given discretization.
pub fn transient_solve(
    man: &TransientManufactured,
    solver: &TransientSolver<'_>,
) -> Result<StateTrajectory, BenchError> {
    let disc = solver.disc();
    let grid = solver.grid().clone();
    let loader = SeparableLoad::new(&disc.mesh, &disc.spaces, &man.source)?;
    Ok(solver.forward(
        |slab, f| {
            let (t0, t1) = grid.slab(slab);
            vecops::axpy(1.0, &loader.slab(t0, t1)?, f);
            Ok(())
        },
        false,
    )?)
}

pub fn transient_run(man: &TransientManufactured, n: usize, m: usize) -> Result<TransientRecord, BenchError> {
    let disc = Discretization::unit_square(n)?;
    let grid = TimeGrid::uniform(1.0, m)?;
    let solver = TransientSolver::new(&disc, grid.clone())?;
    let traj = transient_solve(man, &solver)?;
    let err_u = space_time_l2_error(
        &disc.mesh,
        &disc.spaces,
        grid.nodes(),
        SlabField::Velocity(traj.velocity.as_slice()),
        &man.velocity,
    )?;
    Ok(TransientRecord {
        n,
        m,
        h: 1.0 / n as f64,
        k: 1.0 / m as f64,
        err_u,
        max_velocity: vecops::norm_inf(traj.velocity.as_slice()),
        divergence: solver.divergence_residual(&traj),
    })
}
