//! Space-time error norms, nested P0 transfers and convergence rates.

use crate::fem::{space_time_l2_error, Discretization, SlabField};
use crate::functions::SpaceTimeFunction;
use crate::mesh::TriangleMesh;
use crate::stokes::TimeGrid;

use super::reference::ReferenceSolution;
use super::BenchError;

/// `||field - truth||_{L^2(I x Omega)}`.
pub fn error_vs_analytic(
    disc: &Discretization,
    grid: &TimeGrid,
    field: SlabField<'_>,
    truth: &SpaceTimeFunction,
) -> Result<f64, BenchError> {
    Ok(space_time_l2_error(&disc.mesh, &disc.spaces, grid.nodes(), field, truth)?)
}

/// Fine-to-coarse cell map and the refinement factors `(space, time)`.
struct Nesting {
    parents: Vec<usize>,
    time_factor: usize,
    fine_cells: usize,
    coarse_cells: usize,
    fine_area: f64,
    fine_k: f64,
}

fn nesting(coarse: (usize, usize), fine: (usize, usize), t_final: f64) -> Result<Nesting, BenchError> {
    let non_nested = || BenchError::NonNested {
        test_n: coarse.0,
        test_m: coarse.1,
        ref_n: fine.0,
        ref_m: fine.1,
    };
    if coarse.0 == 0 || coarse.1 == 0 || fine.0 % coarse.0 != 0 || fine.1 % coarse.1 != 0 {
        return Err(non_nested());
    }
    let cm = TriangleMesh::unit_square(coarse.0)?;
    let fm = TriangleMesh::unit_square(fine.0)?;
    let parents = cm.parent_cells(&fm).ok_or_else(non_nested)?;
    Ok(Nesting {
        parents,
        time_factor: fine.1 / coarse.1,
        fine_cells: fm.n_cells(),
        coarse_cells: cm.n_cells(),
        fine_area: fm.cell_area(0),
        fine_k: t_final / fine.1 as f64,
    })
}

fn check_len(what: &'static str, v: &[f64], expected: usize) -> Result<(), BenchError> {
    if v.len() != expected {
        return Err(BenchError::Length {
            what,
            expected,
            found: v.len(),
        });
    }
    Ok(())
}

/// Exact `L^2(I x Omega)` distance between a coarse P0 control on `(n, M)`
/// and the reference, summed over fine cells and slabs.
pub fn error_vs_reference(
    n: usize,
    grid: &TimeGrid,
    q: &[f64],
    reference: &ReferenceSolution,
) -> Result<f64, BenchError> {
    if !grid.is_uniform() || (grid.t_final() - reference.t_final).abs() > 1e-12 {
        return Err(BenchError::InvalidStudy(
            "reference comparison needs a uniform grid on the reference horizon".into(),
        ));
    }
    let nest = nesting((n, grid.slabs()), (reference.n, reference.m), reference.t_final)?;
    check_len("test control", q, grid.slabs() * 2 * nest.coarse_cells)?;
    check_len("reference control", &reference.control, reference.m * 2 * nest.fine_cells)?;
    let (nf, nc) = (nest.fine_cells, nest.coarse_cells);
    let mut s = 0.0;
    for mf in 0..reference.m {
        let mc = mf / nest.time_factor;
        let fine = &reference.control[mf * 2 * nf..(mf + 1) * 2 * nf];
        let coarse = &q[mc * 2 * nc..(mc + 1) * 2 * nc];
        for comp in 0..2 {
            for (cell, &parent) in nest.parents.iter().enumerate() {
                let d = fine[comp * nf + cell] - coarse[comp * nc + parent];
                s += d * d;
            }
        }
    }
    Ok((s * nest.fine_area * nest.fine_k).sqrt())
}

/// Averages of a fine P0 control over nested coarse cells and slabs.
pub fn restrict_control(
    fine: &[f64],
    fine_grid: (usize, usize),
    coarse_grid: (usize, usize),
    t_final: f64,
) -> Result<Vec<f64>, BenchError> {
    let nest = nesting(coarse_grid, fine_grid, t_final)?;
    let (nf, nc) = (nest.fine_cells, nest.coarse_cells);
    check_len("fine control", fine, fine_grid.1 * 2 * nf)?;
    let mut out = vec![0.0; coarse_grid.1 * 2 * nc];
    let weight = 1.0 / (nest.time_factor * (nf / nc)) as f64;
    for mf in 0..fine_grid.1 {
        let mc = mf / nest.time_factor;
        for comp in 0..2 {
            for (cell, &parent) in nest.parents.iter().enumerate() {
                out[mc * 2 * nc + comp * nc + parent] += weight * fine[mf * 2 * nf + comp * nf + cell];
            }
        }
    }
    Ok(out)
}

/// Piecewise constant extension of a coarse P0 control to nested fine grids.
pub fn prolong_control(
    coarse: &[f64],
    coarse_grid: (usize, usize),
    fine_grid: (usize, usize),
    t_final: f64,
) -> Result<Vec<f64>, BenchError> {
    let nest = nesting(coarse_grid, fine_grid, t_final)?;
    let (nf, nc) = (nest.fine_cells, nest.coarse_cells);
    check_len("coarse control", coarse, coarse_grid.1 * 2 * nc)?;
    let mut out = vec![0.0; fine_grid.1 * 2 * nf];
    for mf in 0..fine_grid.1 {
        let mc = mf / nest.time_factor;
        for comp in 0..2 {
            for (cell, &parent) in nest.parents.iter().enumerate() {
                out[mf * 2 * nf + comp * nf + cell] = coarse[mc * 2 * nc + comp * nc + parent];
            }
        }
    }
    Ok(out)
}

/// Slopes `(log e_l - log e_{l-1}) / (log p_l - log p_{l-1})`.
pub fn eoc(errors: &[f64], params: &[f64]) -> Result<Vec<f64>, BenchError> {
    if errors.len() != params.len() || errors.len() < 2 {
        return Err(BenchError::InvalidStudy(format!(
            "eoc needs two or more matching entries, got {} errors and {} parameters",
            errors.len(),
            params.len()
        )));
    }
    if errors.iter().chain(params).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(BenchError::InvalidStudy("eoc needs positive finite entries".into()));
    }
    Ok(errors
        .windows(2)
        .zip(params.windows(2))
        .map(|(e, p)| (e[1].ln() - e[0].ln()) / (p[1].ln() - p[0].ln()))
        .collect())
}

/// Least-squares slope of `log e` against `log p`.
pub fn fitted_slope(errors: &[f64], params: &[f64]) -> Result<f64, BenchError> {
    eoc(errors, params)?;
    let x: Vec<f64> = params.iter().map(|p| p.ln()).collect();
    let y: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    Ok(sxy / sxx)
}
