//! Convergence studies over `(h, k)` grids.

use std::io::Write;
use std::time::Instant;

use crate::fem::SlabField;
use crate::ocp::{pdas_solve, KktReport, OcpProblem, PdasConfig, WarmStart};
use crate::par;
use crate::stokes::TimeGrid;
use crate::Discretization;

use super::errors::{eoc, error_vs_analytic, error_vs_reference, prolong_control};
use super::examples::{ExampleDef, ExampleId};
use super::reference::ReferenceSolution;
use super::BenchError;

#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub pdas: PdasConfig,
    /// Start each finer `h` from the prolonged coarser solution.
    pub warm_start: bool,
    /// Record wall time; off by default so that outputs are reproducible.
    pub timing: bool,
    /// Concurrent sweep chains; 0 uses the global pool.
    pub workers: usize,
    pub reference: Option<ReferenceSolution>,
}

impl StudyConfig {
    pub fn new(example: &ExampleDef) -> Self {
        StudyConfig {
            pdas: PdasConfig::for_beta(example.spec.beta),
            warm_start: true,
            timing: false,
            workers: 0,
            reference: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct RunRecord {
    pub example: ExampleId,
    pub h: f64,
    pub k: f64,
    #[serde(rename = "M")]
    pub m: usize,
    pub n: usize,
    pub err_q: Option<f64>,
    pub err_u: Option<f64>,
    pub eoc_h: Option<f64>,
    pub eoc_k: Option<f64>,
    pub pdas_iters: usize,
    pub minres_iters: usize,
    pub wall_seconds: f64,
    /// `ln(T / k)`.
    pub lk: f64,
    /// `ln(T / k) (sqrt(k) + h)`.
    pub lk_bound_proxy: f64,
    pub converged: bool,
    pub failure: Option<String>,
    pub kkt: Option<KktReport>,
}

impl RunRecord {
    fn new(example: ExampleId, n: usize, m: usize, t_final: f64) -> Self {
        let h = 1.0 / n as f64;
        let k = t_final / m as f64;
        let lk = (t_final / k).ln();
        RunRecord {
            example,
            h,
            k,
            m,
            n,
            err_q: None,
            err_u: None,
            eoc_h: None,
            eoc_k: None,
            pdas_iters: 0,
            minres_iters: 0,
            wall_seconds: 0.0,
            lk,
            lk_bound_proxy: lk * (k.sqrt() + h),
            converged: false,
            failure: None,
            kkt: None,
        }
    }
}

/// Checks a study request without solving anything.
pub fn validate_study(example: &ExampleDef, ns: &[usize], ms: &[usize], cfg: &StudyConfig) -> Result<(), BenchError> {
    if ns.is_empty() || ms.is_empty() || ns.iter().chain(ms).any(|v| *v == 0) {
        return Err(BenchError::InvalidStudy("h and k lists must be non-empty and positive".into()));
    }
    cfg.pdas.validate()?;
    if example.id == ExampleId::Example1 && ms.len() > 1 {
        if let Some(m) = ms.iter().find(|m| *m % 4 != 2) {
            return Err(BenchError::InvalidStudy(format!(
                "k-study for example 1 needs M = 2 mod 4 (kinks at slab midpoints), got M = {m}"
            )));
        }
    }
    if example.truth.is_none() {
        let reference = cfg
            .reference
            .as_ref()
            .ok_or_else(|| BenchError::MissingReference(example.id.to_string()))?;
        if reference.example != example.id {
            return Err(BenchError::InvalidStudy(format!(
                "reference belongs to example {}, not {}",
                reference.example, example.id
            )));
        }
        for &n in ns {
            for &m in ms {
                reference.check_nested(n, m)?;
            }
        }
    }
    Ok(())
}

fn solve_one(
    example: &ExampleDef,
    n: usize,
    m: usize,
    cfg: &StudyConfig,
    warm: Option<&WarmStart>,
    record: &mut RunRecord,
) -> Result<WarmStart, BenchError> {
    let start = Instant::now();
    let disc = Discretization::unit_square(n)?;
    let grid = TimeGrid::uniform(example.spec.t_final, m)?;
    let problem = OcpProblem::new(example.spec.clone(), &disc, grid.clone())?;
    let out = pdas_solve(&problem, &cfg.pdas, warm)?;
    record.pdas_iters = out.report.outer_iterations;
    record.minres_iters = out.report.minres_iterations;
    record.converged = out.converged;
    record.kkt = out.report.kkt.clone();
    let q = out.point.q.as_slice();
    match (&example.truth, &cfg.reference) {
        (Some(truth), _) => {
            record.err_q = Some(error_vs_analytic(&disc, &grid, SlabField::Control(q), &truth.q)?);
            record.err_u = Some(error_vs_analytic(
                &disc,
                &grid,
                SlabField::Velocity(out.point.u.as_slice()),
                &truth.u,
            )?);
        }
        (None, Some(reference)) => record.err_q = Some(error_vs_reference(n, &grid, q, reference)?),
        (None, None) => return Err(BenchError::MissingReference(example.id.to_string())),
    }
    if cfg.timing {
        record.wall_seconds = start.elapsed().as_secs_f64();
    }
    log::info!(
        "example {} n = {n} M = {m}: err_q = {:?}, pdas {}, minres {}",
        example.id,
        record.err_q,
        record.pdas_iters,
        record.minres_iters
    );
    Ok(WarmStart {
        q: q.to_vec(),
        mu: out.point.mu,
    })
}

/// One run per `(n, M)` pair. Runs sharing `M` form a chain over increasing
/// `n` (warm started); chains run concurrently. Solver failures are recorded
/// in the affected row and do not abort the sweep.
pub fn run_convergence_study(
    example: &ExampleDef,
    ns: &[usize],
    ms: &[usize],
    cfg: &StudyConfig,
) -> Result<Vec<RunRecord>, BenchError> {
    validate_study(example, ns, ms, cfg)?;
    let mut ns = ns.to_vec();
    ns.sort_unstable();
    ns.dedup();
    let mut ms = ms.to_vec();
    ms.sort_unstable();
    ms.dedup();
    let t_final = example.spec.t_final;
    let chain = |&m: &usize| -> Vec<RunRecord> {
        let mut warm: Option<(usize, WarmStart)> = None;
        let mut out = Vec::new();
        for &n in &ns {
            let mut rec = RunRecord::new(example.id, n, m, t_final);
            let ws = match (&warm, cfg.warm_start) {
                (Some((nc, w)), true) => prolong_control(&w.q, (*nc, m), (n, m), t_final)
                    .ok()
                    .map(|q| WarmStart { q, mu: w.mu.clone() }),
                _ => None,
            };
            match solve_one(example, n, m, cfg, ws.as_ref(), &mut rec) {
                Ok(w) => warm = Some((n, w)),
                Err(e) => {
                    log::warn!("example {} n = {n} M = {m} failed: {e}", example.id);
                    rec.failure = Some(e.to_string());
                    warm = None;
                }
            }
            out.push(rec);
        }
        out
    };
    let chains = if cfg.workers > 0 {
        par::with_workers(cfg.workers, || par::map_slice(&ms, chain))
    } else {
        par::map_slice(&ms, chain)
    };
    let mut records: Vec<RunRecord> = chains.into_iter().flatten().collect();
    records.sort_by_key(|r| (r.n, r.m));
    fill_eoc(&mut records);
    Ok(records)
}

/// `eoc_h` along fixed `M`, `eoc_k` along fixed `n`; empty where the
/// neighbor is missing or failed.
fn fill_eoc(records: &mut [RunRecord]) {
    let pair = |a: &RunRecord, b: &RunRecord, by_h: bool| -> Option<f64> {
        let (ea, eb) = (a.err_q?, b.err_q?);
        let (pa, pb) = if by_h { (a.h, b.h) } else { (a.k, b.k) };
        eoc(&[ea, eb], &[pa, pb]).ok().map(|v| v[0])
    };
    let n = records.len();
    for i in 0..n {
        let (ni, mi) = (records[i].n, records[i].m);
        let prev_h = (0..n).filter(|&j| records[j].m == mi && records[j].n < ni).max_by_key(|&j| records[j].n);
        let prev_k = (0..n).filter(|&j| records[j].n == ni && records[j].m < mi).max_by_key(|&j| records[j].m);
        records[i].eoc_h = prev_h.and_then(|j| pair(&records[j], &records[i], true));
        records[i].eoc_k = prev_k.and_then(|j| pair(&records[j], &records[i], false));
    }
}

pub const CSV_HEADER: &str =
    "example,h,k,M,n,err_q,err_u,eoc_h,eoc_k,pdas_iters,minres_iters,wall_seconds,lk,lk_bound_proxy";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_csv<W: Write>(records: &[RunRecord], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.example,
            r.h,
            r.k,
            r.m,
            r.n,
            opt(r.err_q),
            opt(r.err_u),
            opt(r.eoc_h),
            opt(r.eoc_k),
            r.pdas_iters,
            r.minres_iters,
            r.wall_seconds,
            r.lk,
            r.lk_bound_proxy
        )?;
    }
    Ok(())
}

pub fn write_json<W: Write>(records: &[RunRecord], mut w: W) -> std::io::Result<()> {
    serde_json::to_writer_pretty(&mut w, records)?;
    writeln!(w)
}
