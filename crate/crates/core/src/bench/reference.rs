//! Fine-grid reference controls: a little-endian `f64` dump plus a JSON
//! sidecar with metadata and a SHA-256 checksum.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::ocp::{pdas_solve, KktReport, OcpProblem, PdasConfig};
use crate::stokes::TimeGrid;
use crate::Discretization;

use super::examples::{ExampleDef, ExampleId};
use super::BenchError;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSolution {
    pub example: ExampleId,
    pub n: usize,
    pub m: usize,
    pub t_final: f64,
    pub minres_rel_tol: f64,
    pub tol_feas: f64,
    pub tol_comp: f64,
    pub converged: bool,
    /// Slab-major P0 control coefficients.
    pub control: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
struct Sidecar {
    format_version: u32,
    example: ExampleId,
    n: usize,
    m: usize,
    t_final: f64,
    minres_rel_tol: f64,
    tol_feas: f64,
    tol_comp: f64,
    converged: bool,
    len: usize,
    sha256: String,
}

fn sidecar_path(bin: &Path) -> PathBuf {
    bin.with_extension("json")
}

fn io_err(path: &Path, e: std::io::Error) -> BenchError {
    BenchError::Io(format!("{}: {e}", path.display()))
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl ReferenceSolution {
    fn bytes(&self) -> Vec<u8> {
        self.control.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    pub fn checksum(&self) -> String {
        hex_digest(&self.bytes())
    }

    /// Writes `path` and its `.json` sidecar.
    pub fn save(&self, path: &Path) -> Result<(), BenchError> {
        let bytes = self.bytes();
        let meta = Sidecar {
            format_version: FORMAT_VERSION,
            example: self.example,
            n: self.n,
            m: self.m,
            t_final: self.t_final,
            minres_rel_tol: self.minres_rel_tol,
            tol_feas: self.tol_feas,
            tol_comp: self.tol_comp,
            converged: self.converged,
            len: self.control.len(),
            sha256: hex_digest(&bytes),
        };
        fs::write(path, &bytes).map_err(|e| io_err(path, e))?;
        let side = sidecar_path(path);
        let json = serde_json::to_string_pretty(&meta).map_err(|e| BenchError::Io(e.to_string()))?;
        fs::write(&side, json + "\n").map_err(|e| io_err(&side, e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let side = sidecar_path(path);
        let text = fs::read_to_string(&side).map_err(|e| io_err(&side, e))?;
        let meta: Sidecar =
            serde_json::from_str(&text).map_err(|e| BenchError::Io(format!("{}: {e}", side.display())))?;
        if meta.format_version != FORMAT_VERSION {
            return Err(BenchError::Io(format!(
                "{}: unsupported format version {}",
                side.display(),
                meta.format_version
            )));
        }
        let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
        if bytes.len() != 8 * meta.len {
            return Err(BenchError::Length {
                what: "reference dump (bytes)",
                expected: 8 * meta.len,
                found: bytes.len(),
            });
        }
        let sum = hex_digest(&bytes);
        if sum != meta.sha256 {
            return Err(BenchError::Checksum {
                expected: meta.sha256,
                found: sum,
            });
        }
        let control = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Ok(ReferenceSolution {
            example: meta.example,
            n: meta.n,
            m: meta.m,
            t_final: meta.t_final,
            minres_rel_tol: meta.minres_rel_tol,
            tol_feas: meta.tol_feas,
            tol_comp: meta.tol_comp,
            converged: meta.converged,
            control,
        })
    }

    /// Rejects test grids the reference cannot be compared against.
    pub fn check_nested(&self, n: usize, m: usize) -> Result<(), BenchError> {
        if n == 0 || m == 0 || self.n % n != 0 || self.m % m != 0 {
            return Err(BenchError::NonNested {
                test_n: n,
                test_m: m,
                ref_n: self.n,
                ref_m: self.m,
            });
        }
        Ok(())
    }
}

/// Solves `example` on `(n, m)` and packages the control.
pub fn compute_reference(
    example: &ExampleDef,
    n: usize,
    m: usize,
    cfg: &PdasConfig,
) -> Result<(ReferenceSolution, Option<KktReport>), BenchError> {
    let disc = Discretization::unit_square(n)?;
    let grid = TimeGrid::uniform(example.spec.t_final, m)?;
    let problem = OcpProblem::new(example.spec.clone(), &disc, grid)?;
    let out = pdas_solve(&problem, cfg, None)?;
    let reference = ReferenceSolution {
        example: example.id,
        n,
        m,
        t_final: example.spec.t_final,
        minres_rel_tol: cfg.minres_rel_tol,
        tol_feas: cfg.tolerances.feasibility,
        tol_comp: cfg.tolerances.complementarity,
        converged: out.converged,
        control: out.point.q.into_vec(),
    };
    Ok((reference, out.report.kkt))
}
