//! Subcommand implementations. Each one validates the full configuration,
//! then computes, then writes its outputs under `out`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde_json::{json, Value};
use stokes_ocp::bench::manufactured::{stationary_run, transient_manufactured, transient_run, transient_solve};
use stokes_ocp::bench::{
    compute_reference, eoc, error_vs_analytic, error_vs_reference, run_convergence_study, validate_study, write_csv,
    write_json, ExampleDef, ReferenceSolution, StudyConfig,
};
use stokes_ocp::fem::SlabField;
use stokes_ocp::ocp::{pdas_solve, OcpProblem, PdasConfig};
use stokes_ocp::par;
use stokes_ocp::stokes::{gw_trajectory, TimeGrid, TransientSolver};
use stokes_ocp::Discretization;
use thiserror::Error;

use crate::config::{ConfigError, ErrorMode, ExampleChoice, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("solver did not converge")]
    NotConverged,
    #[error("i/o: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 3,
            CliError::Solver(_) | CliError::NotConverged => 2,
            CliError::Io(_) => 1,
        }
    }
}

fn solver_err(e: impl std::fmt::Display) -> CliError {
    CliError::Solver(e.to_string())
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Config(ConfigError::Invalid(msg.into()))
}

fn prepare_out(cfg: &RunConfig) -> Result<(), CliError> {
    fs::create_dir_all(&cfg.out)
        .map_err(|e| invalid(format!("output directory {} is not writable: {e}", cfg.out.display())))?;
    let probe = cfg.out.join(".write-probe");
    File::create(&probe)
        .and_then(|_| fs::remove_file(&probe))
        .map_err(|e| invalid(format!("output directory {} is not writable: {e}", cfg.out.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| io_err(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn write_value(path: &Path, v: &Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(v).map_err(|e| io_err(path, e))?;
    text.push('\n');
    write_text(path, &text)
}

fn config_value(cfg: &RunConfig) -> Value {
    json!(cfg.resolved)
}

/// The example with command-line overrides applied. An override that changes
/// the problem drops the closed-form truth.
fn example_def(cfg: &RunConfig) -> Result<Option<ExampleDef>, CliError> {
    let ExampleChoice::Ocp(id) = cfg.example else {
        return Ok(None);
    };
    let mut def = id.definition();
    let before = (def.spec.alpha, def.spec.beta, def.spec.lower, def.spec.upper);
    if let Some(a) = cfg.alpha {
        def.spec.alpha = a;
    }
    if let Some(b) = cfg.beta {
        def.spec.beta = b;
    }
    if let Some(u) = cfg.upper {
        def.spec.upper = [u, u];
    }
    if let Some(l) = cfg.lower {
        def.spec.lower = [l, l];
    }
    if (def.spec.alpha, def.spec.beta, def.spec.lower, def.spec.upper) != before && def.truth.is_some() {
        log::info!("overrides change example {id}; closed-form errors are not reported");
        def.truth = None;
    }
    def.spec.validate().map_err(|e| invalid(e.to_string()))?;
    Ok(Some(def))
}

fn load_reference(cfg: &RunConfig) -> Result<Option<ReferenceSolution>, CliError> {
    match &cfg.reference {
        None => Ok(None),
        Some(p) => ReferenceSolution::load(p)
            .map(Some)
            .map_err(|e| invalid(format!("reference {}: {e}", p.display()))),
    }
}

fn pdas_for(cfg: &RunConfig) -> PdasConfig {
    cfg.pdas.clone()
}

fn run_with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> R {
    if workers > 0 {
        par::with_workers(workers, f)
    } else {
        f()
    }
}

fn single(cfg: &RunConfig) -> Result<(usize, usize), CliError> {
    match (cfg.n.as_slice(), cfg.m.as_slice()) {
        ([n], [m]) => Ok((*n, *m)),
        _ => Err(invalid("this subcommand takes exactly one h and one k")),
    }
}

fn eoc_column(errors: &[f64], params: &[f64]) -> Vec<Option<f64>> {
    let mut out = vec![None];
    for i in 1..errors.len() {
        out.push(eoc(&errors[i - 1..=i], &params[i - 1..=i]).ok().map(|v| v[0]));
    }
    out
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn solve_state(cfg: &RunConfig) -> Result<(), CliError> {
    let def = example_def(cfg)?;
    if cfg.example == ExampleChoice::ManufacturedStationary && cfg.m != [1] {
        return Err(invalid("manufactured-stationary takes no k"));
    }
    prepare_out(cfg)?;
    run_with_workers(cfg.workers, || match cfg.example {
        ExampleChoice::ManufacturedStationary => stationary_errors(cfg),
        ExampleChoice::ManufacturedStokes => transient_errors(cfg),
        ExampleChoice::Ocp(_) => zero_control_state(cfg, def.as_ref().expect("ocp example")),
    })?;
    write_text(&cfg.out.join("config.txt"), &cfg.echo())
}

fn stationary_errors(cfg: &RunConfig) -> Result<(), CliError> {
    let mut ns = cfg.n.clone();
    ns.sort_unstable();
    ns.dedup();
    let recs = ns.iter().map(|&n| stationary_run(n)).collect::<Result<Vec<_>, _>>().map_err(solver_err)?;
    let h: Vec<f64> = recs.iter().map(|r| r.h).collect();
    let col = |f: fn(&stokes_ocp::bench::manufactured::StationaryRecord) -> f64| {
        eoc_column(&recs.iter().map(f).collect::<Vec<_>>(), &h)
    };
    let (e1, e2, e3) = (col(|r| r.err_u_l2), col(|r| r.err_u_h1), col(|r| r.err_p_l2));
    let path = cfg.out.join("errors.csv");
    let mut w = create(&path)?;
    let mut body = String::from("n,h,err_u_l2,err_u_h1,err_p_l2,eoc_u_l2,eoc_u_h1,eoc_p_l2\n");
    for (i, r) in recs.iter().enumerate() {
        body += &format!(
            "{},{},{},{},{},{},{},{}\n",
            r.n,
            r.h,
            r.err_u_l2,
            r.err_u_h1,
            r.err_p_l2,
            opt(e1[i]),
            opt(e2[i]),
            opt(e3[i])
        );
    }
    w.write_all(body.as_bytes()).map_err(|e| io_err(&path, e))
}

fn transient_errors(cfg: &RunConfig) -> Result<(), CliError> {
    let man = transient_manufactured(cfg.omega);
    let mut ns = cfg.n.clone();
    ns.sort_unstable();
    ns.dedup();
    let mut ms = cfg.m.clone();
    ms.sort_unstable();
    ms.dedup();
    let mut errors = String::from("n,M,h,k,err_u,eoc_h,eoc_k,max_velocity,divergence\n");
    let mut state = String::from("n,M,slab,t,velocity_l2,divergence\n");
    let mut table = Vec::new();
    for &n in &ns {
        for &m in &ms {
            table.push(transient_run(&man, n, m).map_err(solver_err)?);
        }
    }
    let find = |n: usize, m: usize| table.iter().find(|r| r.n == n && r.m == m);
    for r in &table {
        let prev_h = ns.iter().rev().find(|&&c| c < r.n).and_then(|&c| find(c, r.m));
        let prev_k = ms.iter().rev().find(|&&c| c < r.m).and_then(|&c| find(r.n, c));
        let rate = |p: Option<&stokes_ocp::bench::manufactured::TransientRecord>, by_h: bool| {
            p.and_then(|p| {
                let params = if by_h { [p.h, r.h] } else { [p.k, r.k] };
                eoc(&[p.err_u, r.err_u], &params).ok().map(|v| v[0])
            })
        };
        errors += &format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.n,
            r.m,
            r.h,
            r.k,
            r.err_u,
            opt(rate(prev_h, true)),
            opt(rate(prev_k, false)),
            r.max_velocity,
            r.divergence
        );
    }
    // Trajectory norms only on the finest pair.
    let (n, m) = (*ns.last().expect("non-empty"), *ms.last().expect("non-empty"));
    let disc = Discretization::unit_square(n).map_err(solver_err)?;
    let grid = TimeGrid::uniform(1.0, m).map_err(solver_err)?;
    let solver = TransientSolver::new(&disc, grid.clone()).map_err(solver_err)?;
    let traj = transient_solve(&man, &solver).map_err(solver_err)?;
    append_state_rows(&mut state, n, &disc, &grid, &solver, &traj);
    write_text(&cfg.out.join("errors.csv"), &errors)?;
    write_text(&cfg.out.join("state.csv"), &state)
}

fn append_state_rows(
    out: &mut String,
    n: usize,
    disc: &Discretization,
    grid: &TimeGrid,
    solver: &TransientSolver<'_>,
    traj: &stokes_ocp::stokes::StateTrajectory,
) {
    let div = solver.slab_divergence_residuals(traj);
    let mut mu = vec![0.0; disc.n_u()];
    for (slab, u) in traj.velocity.blocks().enumerate() {
        disc.mass.spmv_unchecked(u, &mut mu);
        let norm: f64 = u.iter().zip(&mu).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt();
        // A zero slab has no meaningful relative divergence.
        let d = if norm == 0.0 { 0.0 } else { div[slab] };
        *out += &format!("{n},{},{slab},{},{norm},{d}\n", grid.slabs(), grid.slab(slab).1);
    }
}

/// State for the example's data with zero control; the examples have no
/// external source, so this checks the zero trajectory.
fn zero_control_state(cfg: &RunConfig, def: &ExampleDef) -> Result<(), CliError> {
    let mut state = String::from("n,M,slab,t,velocity_l2,divergence\n");
    for &n in &cfg.n {
        let disc = Discretization::unit_square(n).map_err(solver_err)?;
        for &m in &cfg.m {
            let grid = TimeGrid::uniform(def.spec.t_final, m).map_err(solver_err)?;
            let problem = OcpProblem::new(def.spec.clone(), &disc, grid.clone()).map_err(solver_err)?;
            let q = vec![0.0; problem.n_controls()];
            let solver = problem.solver();
            let velocity = problem.state(&q).map_err(solver_err)?;
            let traj = stokes_ocp::stokes::StateTrajectory {
                multipliers: vec![0.0; m],
                velocity,
                pressure: None,
            };
            append_state_rows(&mut state, n, &disc, &grid, solver, &traj);
        }
    }
    write_text(&cfg.out.join("state.csv"), &state)
}

pub fn solve_ocp(cfg: &RunConfig) -> Result<(), CliError> {
    let def = example_def(cfg)?.ok_or_else(|| invalid("solve-ocp needs example 1, 2 or 3"))?;
    let (n, m) = single(cfg)?;
    let reference = load_reference(cfg)?;
    let want_errors = match cfg.errors {
        ErrorMode::Off => false,
        ErrorMode::Auto => def.truth.is_some() || reference.is_some(),
        ErrorMode::On => {
            if def.truth.is_none() && reference.is_none() {
                return Err(invalid(format!(
                    "errors = on for example {} needs a reference (--ref)",
                    def.id
                )));
            }
            true
        }
    };
    if want_errors && def.truth.is_none() {
        let r = reference.as_ref().expect("checked above");
        if r.example != def.id {
            return Err(invalid(format!("reference belongs to example {}, not {}", r.example, def.id)));
        }
        r.check_nested(n, m).map_err(|e| invalid(e.to_string()))?;
    }
    let pdas = pdas_for(cfg);
    pdas.validate().map_err(|e| invalid(e.to_string()))?;
    prepare_out(cfg)?;

    let (outcome, grid, err_q, err_u, g) = run_with_workers(cfg.workers, || -> Result<_, CliError> {
        let disc = Discretization::unit_square(n).map_err(solver_err)?;
        let grid = TimeGrid::uniform(def.spec.t_final, m).map_err(solver_err)?;
        let problem = OcpProblem::new(def.spec.clone(), &disc, grid.clone()).map_err(solver_err)?;
        let outcome = pdas_solve(&problem, &pdas, None).map_err(solver_err)?;
        let q = outcome.point.q.as_slice();
        let (mut err_q, mut err_u) = (None, None);
        if want_errors {
            match (&def.truth, &reference) {
                (Some(t), _) => {
                    err_q = Some(error_vs_analytic(&disc, &grid, SlabField::Control(q), &t.q).map_err(solver_err)?);
                    let u = SlabField::Velocity(outcome.point.u.as_slice());
                    err_u = Some(error_vs_analytic(&disc, &grid, u, &t.u).map_err(solver_err)?);
                }
                (None, Some(r)) => err_q = Some(error_vs_reference(n, &grid, q, r).map_err(solver_err)?),
                (None, None) => {}
            }
        }
        let g = gw_trajectory(&outcome.point.u, problem.g_w());
        Ok((outcome, grid, err_q, err_u, g))
    })?;

    let lk = grid.l_k();
    let report = json!({
        "config": config_value(cfg),
        "example": def.id,
        "n": n,
        "M": m,
        "h": 1.0 / n as f64,
        "k": grid.k_max(),
        "converged": outcome.converged,
        "err_q": err_q,
        "err_u": err_u,
        "lk": lk,
        "lk_bound_proxy": lk * (grid.k_max().sqrt() + 1.0 / n as f64),
        "multiplier_l1": outcome.point.multiplier_l1(&grid),
        "active_state_slabs": outcome.point.active.state.len(),
        "active_lower": outcome.point.active.lower.len(),
        "active_upper": outcome.point.active.upper.len(),
        "pdas": outcome.report,
    });
    write_value(&cfg.out.join("kkt.json"), &report)?;

    let control = ReferenceSolution {
        example: def.id,
        n,
        m,
        t_final: def.spec.t_final,
        minres_rel_tol: pdas.minres_rel_tol,
        tol_feas: pdas.tolerances.feasibility,
        tol_comp: pdas.tolerances.complementarity,
        converged: outcome.converged,
        control: outcome.point.q.as_slice().to_vec(),
    };
    control.save(&cfg.out.join("control.bin")).map_err(|e| CliError::Io(e.to_string()))?;

    let mut mult = String::from("slab,t0,t1,mu,g,beta\n");
    for (slab, (mu, gv)) in outcome.point.mu.iter().zip(&g).enumerate() {
        let (t0, t1) = grid.slab(slab);
        mult += &format!("{slab},{t0},{t1},{mu},{gv},{}\n", def.spec.beta);
    }
    write_text(&cfg.out.join("multipliers.csv"), &mult)?;
    if outcome.converged {
        Ok(())
    } else {
        Err(CliError::NotConverged)
    }
}

pub fn convergence(cfg: &RunConfig) -> Result<(), CliError> {
    if matches!(cfg.example, ExampleChoice::ManufacturedStokes | ExampleChoice::ManufacturedStationary) {
        return solve_state(cfg);
    }
    let def = example_def(cfg)?.expect("ocp example");
    let mut study = StudyConfig::new(&def);
    study.pdas = pdas_for(cfg);
    study.warm_start = cfg.warm_start;
    study.timing = cfg.timing;
    study.workers = cfg.workers;
    study.reference = load_reference(cfg)?;
    if cfg.errors == ErrorMode::Off {
        return Err(invalid("convergence studies always measure errors; errors = off is not allowed"));
    }
    validate_study(&def, &cfg.n, &cfg.m, &study).map_err(|e| invalid(e.to_string()))?;
    prepare_out(cfg)?;
    let records = run_convergence_study(&def, &cfg.n, &cfg.m, &study).map_err(solver_err)?;
    let csv = cfg.out.join("convergence.csv");
    let mut w = create(&csv)?;
    write_csv(&records, &mut w).map_err(|e| io_err(&csv, e))?;
    w.flush().map_err(|e| io_err(&csv, e))?;
    let mut buf = Vec::new();
    write_json(&records, &mut buf).map_err(|e| io_err(&cfg.out, e))?;
    let records_value: Value = serde_json::from_slice(&buf).map_err(|e| io_err(&cfg.out, e))?;
    write_value(
        &cfg.out.join("convergence.json"),
        &json!({ "config": config_value(cfg), "records": records_value }),
    )?;
    let failed: Vec<String> = records
        .iter()
        .filter(|r| !r.converged)
        .map(|r| format!("n = {} M = {}", r.n, r.m))
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        log::error!("runs without convergence: {}", failed.join(", "));
        Err(CliError::NotConverged)
    }
}

pub fn reference(cfg: &RunConfig) -> Result<(), CliError> {
    let def = example_def(cfg)?.ok_or_else(|| invalid("reference needs example 1, 2 or 3"))?;
    let (n, m) = single(cfg)?;
    let path = cfg.reference.clone().ok_or_else(|| invalid("reference needs an output path (--ref)"))?;
    let pdas = pdas_for(cfg);
    pdas.validate().map_err(|e| invalid(e.to_string()))?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| invalid(format!("{}: {e}", dir.display())))?;
    }
    let (sol, kkt) = run_with_workers(cfg.workers, || compute_reference(&def, n, m, &pdas)).map_err(solver_err)?;
    sol.save(&path).map_err(|e| CliError::Io(e.to_string()))?;
    log::info!("reference {} written (checksum {})", path.display(), sol.checksum());
    if let Some(k) = kkt {
        log::info!("reference KKT passed = {}", k.passed);
    }
    if sol.converged {
        Ok(())
    } else {
        Err(CliError::NotConverged)
    }
}
