//! dG(0) time stepping for the transient Stokes equations, its adjoint, and
//! the stationary problem.
//!
//! One slab of length `k` solves the symmetric system
//!
//! ```text
//! [ M + kA   -k B^T   0 ] [u_m]   [M u_{m-1} + F_m]
//! [ -k B       0      c ] [p_m] = [       0       ]
//! [  0        c^T     0 ] [ l ]   [       0       ]
//! ```
//!
//! where `c` carries the zero-mean pressure constraint. The adjoint sweep runs
//! backwards with the same matrix.

use thiserror::Error;

use crate::fem::{Discretization, FemError};
use crate::linalg::{vecops, CsrMatrix, Factorization, FactorizeOptions, LinalgError, SolveWorkspace};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StokesError {
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
    #[error("expected {expected} slab loads, got {found}")]
    LoadCount { expected: usize, found: usize },
    #[error("step length must be positive, got {0}")]
    InvalidStep(f64),
    #[error("slab {slab}: {source}")]
    Slab { slab: usize, source: LinalgError },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Fem(#[from] FemError),
}

/// Partition `0 = t_0 < t_1 < ... < t_M = T`. Slabs are indexed from 0, slab
/// `m` is `(t_m, t_{m+1}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    nodes: Vec<f64>,
    steps: Vec<f64>,
    uniform: bool,
}

impl TimeGrid {
    /// `M` equal slabs on `(0, T]` with nodes `m T / M`.
    pub fn uniform(t_final: f64, slabs: usize) -> Result<Self, StokesError> {
        if slabs == 0 || !(t_final > 0.0) || !t_final.is_finite() {
            return Err(StokesError::InvalidGrid(format!(
                "need T > 0 and M >= 1 (T = {t_final}, M = {slabs})"
            )));
        }
        let nodes: Vec<f64> = (0..=slabs).map(|m| m as f64 * t_final / slabs as f64).collect();
        let k = t_final / slabs as f64;
        Ok(TimeGrid {
            nodes,
            steps: vec![k; slabs],
            uniform: true,
        })
    }

    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self, StokesError> {
        if nodes.len() < 2 || nodes[0] != 0.0 {
            return Err(StokesError::InvalidGrid("nodes must start at 0 and contain a slab".into()));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(StokesError::InvalidGrid("nodes must increase strictly".into()));
        }
        let steps: Vec<f64> = nodes.windows(2).map(|w| w[1] - w[0]).collect();
        let uniform = steps.iter().all(|&k| (k - steps[0]).abs() <= 1e-14 * steps[0]);
        Ok(TimeGrid {
            nodes,
            steps,
            uniform,
        })
    }

    pub fn slabs(&self) -> usize {
        self.steps.len()
    }

    pub fn t_final(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn steps(&self) -> &[f64] {
        &self.steps
    }

    pub fn k(&self, m: usize) -> f64 {
        self.steps[m]
    }

    pub fn k_max(&self) -> f64 {
        self.steps.iter().copied().fold(0.0, f64::max)
    }

    pub fn slab(&self, m: usize) -> (f64, f64) {
        (self.nodes[m], self.nodes[m + 1])
    }

    pub fn is_uniform(&self) -> bool {
        self.uniform
    }

    /// `ln(T / k)` with `k` the largest step.
    pub fn l_k(&self) -> f64 {
        (self.t_final() / self.k_max()).ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Velocity,
    Pressure,
    Control,
}

/// Piecewise constant in time field: one coefficient block per slab.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField {
    kind: FieldKind,
    block_len: usize,
    data: Vec<f64>,
}

impl SpaceTimeField {
    pub fn zeros(kind: FieldKind, slabs: usize, block_len: usize) -> Self {
        SpaceTimeField {
            kind,
            block_len,
            data: vec![0.0; slabs * block_len],
        }
    }

    pub fn from_data(kind: FieldKind, block_len: usize, data: Vec<f64>) -> Self {
        assert!(block_len > 0 && data.len() % block_len == 0, "ragged field");
        SpaceTimeField {
            kind,
            block_len,
            data,
        }
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn slabs(&self) -> usize {
        if self.block_len == 0 {
            0
        } else {
            self.data.len() / self.block_len
        }
    }

    pub fn block_len(&self) -> usize {
        self.block_len
    }

    pub fn block(&self, m: usize) -> &[f64] {
        &self.data[m * self.block_len..(m + 1) * self.block_len]
    }

    pub fn block_mut(&mut self, m: usize) -> &mut [f64] {
        &mut self.data[m * self.block_len..(m + 1) * self.block_len]
    }

    pub fn blocks(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.block_len)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Jump `u_{m} - u_{m-1}` entering slab `m` (with `u_{-1} = 0`).
    pub fn jump(&self, m: usize) -> Vec<f64> {
        if m == 0 {
            self.block(0).to_vec()
        } else {
            vecops::sub(self.block(m), self.block(m - 1))
        }
    }
}

/// Factored step matrix for one step length.
#[derive(Debug, Clone)]
pub struct StepOperator {
    k: f64,
    n_u: usize,
    n_p: usize,
    factorization: Factorization,
}

/// Step solves only need the residual well below the acceptance threshold.
fn step_factorize_options() -> FactorizeOptions {
    FactorizeOptions {
        refine_tol: 1e-11,
        ..Default::default()
    }
}

fn saddle_matrix(disc: &Discretization, velocity_block: &CsrMatrix, k: f64) -> Result<CsrMatrix, StokesError> {
    let n_u = disc.n_u();
    let n_p = disc.n_p();
    let n = n_u + n_p + 1;
    let mut trip: Vec<(usize, usize, f64)> = velocity_block.triplets().collect();
    for (i, j, v) in disc.divergence.triplets() {
        trip.push((n_u + i, j, -k * v));
        trip.push((j, n_u + i, -k * v));
    }
    for (i, &c) in disc.spaces.pressure_mean().iter().enumerate() {
        trip.push((n_u + i, n - 1, c));
        trip.push((n - 1, n_u + i, c));
    }
    Ok(CsrMatrix::from_triplets(n, n, &trip)?)
}

/// Assembles and factors the slab matrix for step `k`.
pub fn build_step_operator(disc: &Discretization, k: f64) -> Result<StepOperator, StokesError> {
    if !(k > 0.0) || !k.is_finite() {
        return Err(StokesError::InvalidStep(k));
    }
    let block = disc.mass.add_scaled(1.0, &disc.stiffness, k);
    let matrix = saddle_matrix(disc, &block, k)?;
    let factorization = Factorization::with_options(&matrix, step_factorize_options())?;
    log::debug!(
        "step operator k = {k:e}: dim {}, factor nnz {}",
        matrix.n_rows(),
        factorization.factor_nnz()
    );
    Ok(StepOperator {
        k,
        n_u: disc.n_u(),
        n_p: disc.n_p(),
        factorization,
    })
}

impl StepOperator {
    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn matrix(&self) -> &CsrMatrix {
        self.factorization.matrix()
    }

    pub fn factorization(&self) -> &Factorization {
        &self.factorization
    }

    pub fn dim(&self) -> usize {
        self.n_u + self.n_p + 1
    }

    /// Solves with velocity right-hand side `rhs_u`; `sol` receives
    /// `(u, p, lambda)`.
    pub fn solve_into(&self, rhs: &mut [f64], sol: &mut [f64], ws: &mut SolveWorkspace) -> Result<(), LinalgError> {
        self.factorization.solve_with(rhs, sol, ws).map(|_| ())
    }

    pub fn split<'a>(&self, sol: &'a [f64]) -> (&'a [f64], &'a [f64], f64) {
        (
            &sol[..self.n_u],
            &sol[self.n_u..self.n_u + self.n_p],
            sol[self.n_u + self.n_p],
        )
    }
}

/// Forward solution with pressures and zero-mean multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTrajectory {
    pub velocity: SpaceTimeField,
    pub pressure: Option<SpaceTimeField>,
    pub multipliers: Vec<f64>,
}

/// The step operators for a time grid (one per distinct step length) over a
/// fixed discretization.
#[derive(Debug, Clone)]
pub struct TransientSolver<'a> {
    disc: &'a Discretization,
    grid: TimeGrid,
    ops: Vec<StepOperator>,
    slab_op: Vec<usize>,
}

impl<'a> TransientSolver<'a> {
    pub fn new(disc: &'a Discretization, grid: TimeGrid) -> Result<Self, StokesError> {
        let mut ops: Vec<StepOperator> = Vec::new();
        let mut slab_op = Vec::with_capacity(grid.slabs());
        for &k in grid.steps() {
            let found = ops.iter().position(|op| (op.k - k).abs() <= 1e-14 * k);
            let idx = match found {
                Some(i) => i,
                None => {
                    ops.push(build_step_operator(disc, k)?);
                    ops.len() - 1
                }
            };
            slab_op.push(idx);
        }
        Ok(TransientSolver {
            disc,
            grid,
            ops,
            slab_op,
        })
    }

    pub fn disc(&self) -> &'a Discretization {
        self.disc
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn operator(&self, m: usize) -> &StepOperator {
        &self.ops[self.slab_op[m]]
    }

    pub fn operators(&self) -> &[StepOperator] {
        &self.ops
    }

    /// Forward sweep; `load(m, f)` adds `F_m` into `f`.
    pub fn forward<L>(&self, mut load: L, keep_pressure: bool) -> Result<StateTrajectory, StokesError>
    where
        L: FnMut(usize, &mut [f64]) -> Result<(), StokesError>,
    {
        let n_u = self.disc.n_u();
        let n_p = self.disc.n_p();
        let slabs = self.grid.slabs();
        let mut velocity = SpaceTimeField::zeros(FieldKind::Velocity, slabs, n_u);
        let mut pressure = keep_pressure.then(|| SpaceTimeField::zeros(FieldKind::Pressure, slabs, n_p));
        let mut multipliers = vec![0.0; slabs];
        let dim = n_u + n_p + 1;
        let mut rhs = vec![0.0; dim];
        let mut sol = vec![0.0; dim];
        let mut ws = SolveWorkspace::default();
        for m in 0..slabs {
            rhs.iter_mut().for_each(|v| *v = 0.0);
            if m > 0 {
                self.disc.mass.spmv_unchecked(velocity.block(m - 1), &mut rhs[..n_u]);
            }
            load(m, &mut rhs[..n_u])?;
            let op = self.operator(m);
            op.solve_into(&mut rhs, &mut sol, &mut ws)
                .map_err(|source| StokesError::Slab { slab: m, source })?;
            let (u, p, l) = op.split(&sol);
            velocity.block_mut(m).copy_from_slice(u);
            if let Some(pf) = pressure.as_mut() {
                pf.block_mut(m).copy_from_slice(p);
            }
            multipliers[m] = l;
        }
        Ok(StateTrajectory {
            velocity,
            pressure,
            multipliers,
        })
    }

    /// Adjoint sweep from the last slab; `load(m, g)` adds `G_m` into `g`.
    pub fn adjoint<L>(&self, mut load: L) -> Result<SpaceTimeField, StokesError>
    where
        L: FnMut(usize, &mut [f64]) -> Result<(), StokesError>,
    {
        let n_u = self.disc.n_u();
        let slabs = self.grid.slabs();
        let mut z = SpaceTimeField::zeros(FieldKind::Velocity, slabs, n_u);
        let dim = n_u + self.disc.n_p() + 1;
        let mut rhs = vec![0.0; dim];
        let mut sol = vec![0.0; dim];
        let mut ws = SolveWorkspace::default();
        for m in (0..slabs).rev() {
            rhs.iter_mut().for_each(|v| *v = 0.0);
            if m + 1 < slabs {
                self.disc.mass.spmv_unchecked(z.block(m + 1), &mut rhs[..n_u]);
            }
            load(m, &mut rhs[..n_u])?;
            let op = self.operator(m);
            op.solve_into(&mut rhs, &mut sol, &mut ws)
                .map_err(|source| StokesError::Slab { slab: m, source })?;
            z.block_mut(m).copy_from_slice(op.split(&sol).0);
        }
        Ok(z)
    }

    /// Per slab `||B u_m - (l_m / k_m) c||_inf / max(||u_m||_inf, tiny)`.
    pub fn slab_divergence_residuals(&self, traj: &StateTrajectory) -> Vec<f64> {
        let c = self.disc.spaces.pressure_mean();
        let mut bu = vec![0.0; self.disc.n_p()];
        (0..self.grid.slabs())
            .map(|m| {
                let u = traj.velocity.block(m);
                self.disc.divergence.spmv_unchecked(u, &mut bu);
                let s = traj.multipliers[m] / self.grid.k(m);
                let r = bu.iter().zip(c).map(|(b, ci)| (b - s * ci).abs()).fold(0.0, f64::max);
                r / vecops::norm_inf(u).max(f64::MIN_POSITIVE)
            })
            .collect()
    }

    /// Largest of [`Self::slab_divergence_residuals`].
    pub fn divergence_residual(&self, traj: &StateTrajectory) -> f64 {
        self.slab_divergence_residuals(traj).into_iter().fold(0.0, f64::max)
    }
}

fn check_loads(grid: &TimeGrid, loads: &SpaceTimeField, n_u: usize) -> Result<(), StokesError> {
    if loads.slabs() != grid.slabs() {
        return Err(StokesError::LoadCount {
            expected: grid.slabs(),
            found: loads.slabs(),
        });
    }
    if loads.block_len() != n_u {
        return Err(LinalgError::DimensionMismatch {
            expected: n_u,
            found: loads.block_len(),
        }
        .into());
    }
    Ok(())
}

/// Forward sweep with explicit slab loads.
pub fn solve_state(solver: &TransientSolver<'_>, loads: &SpaceTimeField) -> Result<StateTrajectory, StokesError> {
    check_loads(solver.grid(), loads, solver.disc().n_u())?;
    solver.forward(
        |m, f| {
            vecops::axpy(1.0, loads.block(m), f);
            Ok(())
        },
        true,
    )
}

/// Adjoint sweep with explicit slab loads.
pub fn solve_adjoint(solver: &TransientSolver<'_>, loads: &SpaceTimeField) -> Result<SpaceTimeField, StokesError> {
    check_loads(solver.grid(), loads, solver.disc().n_u())?;
    solver.adjoint(|m, g| {
        vecops::axpy(1.0, loads.block(m), g);
        Ok(())
    })
}

/// `g_w^T u_m` per slab.
pub fn gw_trajectory(u: &SpaceTimeField, g_w: &[f64]) -> Vec<f64> {
    u.blocks().map(|b| vecops::dot(b, g_w)).collect()
}

/// Stationary Stokes solution `(u, p)` with zero-mean pressure.
pub fn solve_stationary<F>(disc: &Discretization, f: F) -> Result<(Vec<f64>, Vec<f64>), StokesError>
where
    F: Fn([f64; 2]) -> [f64; 2] + Sync + Send,
{
    let n_u = disc.n_u();
    let n_p = disc.n_p();
    let matrix = saddle_matrix(disc, &disc.stiffness, 1.0)?;
    let fact = Factorization::with_options(&matrix, step_factorize_options())?;
    let load = crate::fem::assemble_load(&disc.mesh, &disc.spaces, f, crate::fem::DATA_DEGREE)?;
    let mut rhs = vec![0.0; n_u + n_p + 1];
    rhs[..n_u].copy_from_slice(&load);
    let sol = fact.solve(&rhs)?;
    Ok((sol[..n_u].to_vec(), sol[n_u..n_u + n_p].to_vec()))
}
