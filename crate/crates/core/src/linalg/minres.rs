//! Preconditioned MINRES for symmetric (possibly indefinite) operators with a
//! symmetric positive definite preconditioner.

use super::vecops::{axpy, dot};
use super::LinalgError;

#[derive(Debug, Clone)]
pub struct MinresOptions {
    /// Stop when the preconditioned residual norm drops below `rel_tol`
    /// times `||b||_{P^{-1}}`.
    pub rel_tol: f64,
    pub max_iter: usize,
    /// Number of random `<Au, v> = <u, Av>` probes before iterating.
    pub symmetry_probes: usize,
    pub symmetry_tol: f64,
    pub seed: u64,
}

impl Default for MinresOptions {
    fn default() -> Self {
        MinresOptions {
            rel_tol: 1e-10,
            max_iter: 1000,
            symmetry_probes: 0,
            symmetry_tol: 1e-10,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinresOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Final preconditioned residual norm estimate `||r||_{P^{-1}}`.
    pub residual: f64,
    pub initial_residual: f64,
    pub converged: bool,
}

/// Solves `A x = b` starting from `x0` (zero when `None`).
///
/// `apply_a(v, out)` writes `A v`, `apply_pinv(r, out)` writes `P^{-1} r`.
pub fn minres<A, P, E>(
    mut apply_a: A,
    mut apply_pinv: P,
    b: &[f64],
    x0: Option<&[f64]>,
    opts: &MinresOptions,
) -> Result<MinresOutcome, E>
where
    A: FnMut(&[f64], &mut [f64]) -> Result<(), E>,
    P: FnMut(&[f64], &mut [f64]) -> Result<(), E>,
    E: From<LinalgError>,
{
    let n = b.len();
    if opts.symmetry_probes > 0 {
        probe_symmetry(&mut apply_a, n, opts)?;
    }
    let mut x = match x0 {
        Some(x0) => {
            if x0.len() != n {
                return Err(LinalgError::DimensionMismatch {
                    expected: n,
                    found: x0.len(),
                }
                .into());
            }
            x0.to_vec()
        }
        None => vec![0.0; n],
    };

    let mut r1 = b.to_vec();
    if x0.is_some() {
        let mut ax = vec![0.0; n];
        apply_a(&x, &mut ax)?;
        axpy(-1.0, &ax, &mut r1);
    }
    let mut y = vec![0.0; n];
    apply_pinv(&r1, &mut y)?;
    let beta1_sq = dot(&r1, &y);
    if beta1_sq < 0.0 {
        return Err(LinalgError::IndefinitePreconditioner(beta1_sq).into());
    }
    let beta1 = beta1_sq.sqrt();
    // measure against the right-hand side so a good initial guess is not
    // driven to a smaller absolute residual than a cold start would be
    let b_norm = if x0.is_some() {
        let mut pb = vec![0.0; n];
        apply_pinv(b, &mut pb)?;
        dot(b, &pb).max(0.0).sqrt()
    } else {
        beta1
    };
    if beta1 == 0.0 || beta1 <= opts.rel_tol * b_norm {
        return Ok(MinresOutcome {
            x,
            iterations: 0,
            residual: beta1,
            initial_residual: beta1,
            converged: true,
        });
    }

    let mut r2 = r1.clone();
    let mut v = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut w1 = vec![0.0; n];
    let mut w2 = vec![0.0; n];
    let mut oldb = 0.0;
    let mut beta = beta1;
    let mut dbar = 0.0;
    let mut epsln = 0.0;
    let mut phibar = beta1;
    let mut cs = -1.0;
    let mut sn = 0.0;
    let target = opts.rel_tol * b_norm;

    for itn in 1..=opts.max_iter {
        let s = 1.0 / beta;
        for (vi, yi) in v.iter_mut().zip(&y) {
            *vi = s * yi;
        }
        apply_a(&v, &mut y)?;
        if itn >= 2 {
            axpy(-beta / oldb, &r1, &mut y);
        }
        let alfa = dot(&v, &y);
        axpy(-alfa / beta, &r2, &mut y);
        std::mem::swap(&mut r1, &mut r2);
        r2.copy_from_slice(&y);
        apply_pinv(&r2, &mut y)?;
        oldb = beta;
        let beta_sq = dot(&r2, &y);
        if beta_sq < 0.0 {
            return Err(LinalgError::IndefinitePreconditioner(beta_sq).into());
        }
        beta = beta_sq.sqrt();

        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = gbar.hypot(beta);
        if gamma == 0.0 {
            return Err(LinalgError::Breakdown(itn).into());
        }
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;

        let denom = 1.0 / gamma;
        std::mem::swap(&mut w1, &mut w2);
        std::mem::swap(&mut w2, &mut w);
        // now w1 = old w2, w2 = old w; rebuild w
        for i in 0..n {
            w[i] = (v[i] - oldeps * w1[i] - delta * w2[i]) * denom;
        }
        axpy(phi, &w, &mut x);

        if phibar <= target || beta == 0.0 {
            return Ok(MinresOutcome {
                x,
                iterations: itn,
                residual: phibar,
                initial_residual: beta1,
                converged: true,
            });
        }
    }
    Ok(MinresOutcome {
        x,
        iterations: opts.max_iter,
        residual: phibar,
        initial_residual: beta1,
        converged: false,
    })
}

fn probe_symmetry<A, E>(apply_a: &mut A, n: usize, opts: &MinresOptions) -> Result<(), E>
where
    A: FnMut(&[f64], &mut [f64]) -> Result<(), E>,
    E: From<LinalgError>,
{
    // splitmix64 keeps the probe vectors independent of any RNG crate version
    let mut state = opts.seed;
    let mut next = move || {
        state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
        (z >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    };
    let mut au = vec![0.0; n];
    let mut av = vec![0.0; n];
    for _ in 0..opts.symmetry_probes {
        let u: Vec<f64> = (0..n).map(|_| next()).collect();
        let v: Vec<f64> = (0..n).map(|_| next()).collect();
        apply_a(&u, &mut au)?;
        apply_a(&v, &mut av)?;
        let (a, b) = (dot(&au, &v), dot(&u, &av));
        let scale = (dot(&au, &au).sqrt() * dot(&v, &v).sqrt()).max(f64::MIN_POSITIVE);
        let defect = (a - b).abs() / scale;
        if defect > opts.symmetry_tol {
            return Err(LinalgError::NonSymmetricOperator(defect).into());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{CsrMatrix, DenseMatrix};
    use rand::{Rng, SeedableRng};

    fn ident(r: &[f64], out: &mut [f64]) -> Result<(), LinalgError> {
        out.copy_from_slice(r);
        Ok(())
    }

    #[test]
    fn diagonal_two_iterations() {
        let a = CsrMatrix::from_diagonal(&[2.0, 3.0]);
        let out = minres::<_, _, LinalgError>(
            |v, o| a.spmv_into(v, o),
            ident,
            &[2.0, 3.0],
            None,
            &MinresOptions::default(),
        )
        .unwrap();
        assert!(out.converged && out.iterations <= 2);
        assert!((out.x[0] - 1.0).abs() < 1e-12 && (out.x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn indefinite_diagonal() {
        let a = CsrMatrix::from_diagonal(&[1.0, -1.0]);
        let out = minres::<_, _, LinalgError>(
            |v, o| a.spmv_into(v, o),
            ident,
            &[1.0, 1.0],
            None,
            &MinresOptions::default(),
        )
        .unwrap();
        assert!((out.x[0] - 1.0).abs() < 1e-12 && (out.x[1] + 1.0).abs() < 1e-12);
    }

    fn random_spd(n: usize, seed: u64) -> DenseMatrix {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut g = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                g[(i, j)] = rng.gen_range(-1.0..1.0);
            }
        }
        let mut s = g.transpose().matmul(&g);
        for i in 0..n {
            s[(i, i)] += 0.5;
        }
        s
    }

    #[test]
    fn random_spd_matches_direct_solve() {
        let s = random_spd(20, 1);
        let b: Vec<f64> = (0..20).map(|i| (i as f64).cos()).collect();
        let opts = MinresOptions {
            rel_tol: 1e-14,
            symmetry_probes: 2,
            ..Default::default()
        };
        let out = minres::<_, _, LinalgError>(
            |v, o| {
                o.copy_from_slice(&s.matvec(v));
                Ok(())
            },
            ident,
            &b,
            None,
            &opts,
        )
        .unwrap();
        let direct = s.cholesky().unwrap().solve(&b);
        for (u, v) in out.x.iter().zip(&direct) {
            assert!((u - v).abs() < 1e-8);
        }
    }

    #[test]
    fn exact_preconditioner_one_iteration() {
        let s = random_spd(15, 2);
        let chol = s.cholesky().unwrap();
        let b: Vec<f64> = (0..15).map(|i| 1.0 + i as f64).collect();
        let out = minres::<_, _, LinalgError>(
            |v, o| {
                o.copy_from_slice(&s.matvec(v));
                Ok(())
            },
            |r, o| {
                o.copy_from_slice(&chol.solve(r));
                Ok(())
            },
            &b,
            None,
            &MinresOptions::default(),
        )
        .unwrap();
        assert_eq!(out.iterations, 1);
        assert!(out.converged);
    }

    #[test]
    fn nonsymmetric_detected() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 2.0), (1, 1, 1.0)]).unwrap();
        let opts = MinresOptions {
            symmetry_probes: 3,
            ..Default::default()
        };
        let err = minres::<_, _, LinalgError>(|v, o| a.spmv_into(v, o), ident, &[1.0, 1.0], None, &opts).unwrap_err();
        assert!(matches!(err, LinalgError::NonSymmetricOperator(_)));
    }

    #[test]
    fn indefinite_preconditioner_detected() {
        let a = CsrMatrix::identity(2);
        let err = minres::<_, _, LinalgError>(
            |v, o| a.spmv_into(v, o),
            |r, o| {
                o[0] = -r[0];
                o[1] = -r[1];
                Ok(())
            },
            &[1.0, 0.5],
            None,
            &MinresOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, LinalgError::IndefinitePreconditioner(_)));
    }

    #[test]
    fn exact_initial_guess_returns_immediately() {
        let a = CsrMatrix::from_diagonal(&[2.0, 4.0]);
        let out = minres::<_, _, LinalgError>(|v, o| a.spmv_into(v, o), ident, &[2.0, 4.0], Some(&[1.0, 1.0]), &MinresOptions::default()).unwrap();
        assert_eq!(out.iterations, 0);
        assert!(out.converged);
    }

    #[test]
    fn reports_non_convergence() {
        let d: Vec<f64> = (1..=50).map(|i| i as f64).collect();
        let a = CsrMatrix::from_diagonal(&d);
        let opts = MinresOptions {
            max_iter: 3,
            ..Default::default()
        };
        let out = minres::<_, _, LinalgError>(|v, o| a.spmv_into(v, o), ident, &vec![1.0; 50], None, &opts).unwrap();
        assert!(!out.converged);
        assert_eq!(out.iterations, 3);
    }
}
