//! Sparse LDL^T factorization for symmetric, possibly indefinite matrices.
//!
//! The matrix is equilibrated (symmetric Ruiz scaling), reordered by nested
//! dissection and factored with an up-looking LDL^T. Structurally zero diagonal
//! entries (saddle point blocks) receive a small negative shift so the scaled
//! matrix is quasi-definite and factorizable in any order; iterative refinement
//! against the unshifted matrix removes the perturbation.

use super::{nested_dissection, CsrMatrix, LinalgError};

#[derive(Debug, Clone)]
pub struct FactorizeOptions {
    /// Shift applied to (scaled) zero diagonal positions.
    pub regularization: f64,
    /// Target relative residual for iterative refinement.
    pub refine_tol: f64,
    pub max_refine: usize,
    /// Solves returning a relative residual above this fail.
    pub accept_tol: f64,
    pub symmetry_tol: f64,
    /// Explicit ordering (`perm[new] = old`); nested dissection when `None`.
    pub perm: Option<Vec<usize>>,
}

impl Default for FactorizeOptions {
    fn default() -> Self {
        FactorizeOptions {
            regularization: 1e-9,
            refine_tol: 1e-14,
            max_refine: 10,
            accept_tol: 1e-10,
            symmetry_tol: 1e-12,
            perm: None,
        }
    }
}

/// Reusable factorization of a square symmetric sparse matrix.
#[derive(Debug, Clone)]
pub struct Factorization {
    n: usize,
    matrix: CsrMatrix,
    perm: Vec<usize>,
    scaling: Vec<f64>,
    l_offsets: Vec<usize>,
    l_rows: Vec<u32>,
    l_values: Vec<f64>,
    d_inv: Vec<f64>,
    regularized: usize,
    opts: FactorizeOptions,
}

/// Scratch space for [`Factorization::solve_with`].
#[derive(Debug, Clone, Default)]
pub struct SolveWorkspace {
    permuted: Vec<f64>,
    residual: Vec<f64>,
    correction: Vec<f64>,
}

/// Outcome of a refined solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub relative_residual: f64,
    pub refinements: usize,
}

impl Factorization {
    pub fn new(a: &CsrMatrix) -> Result<Self, LinalgError> {
        Self::with_options(a, FactorizeOptions::default())
    }

    pub fn with_options(a: &CsrMatrix, opts: FactorizeOptions) -> Result<Self, LinalgError> {
        let n = a.n_rows();
        if a.n_cols() != n {
            return Err(LinalgError::NotSquare(n, a.n_cols()));
        }
        assert!(n < u32::MAX as usize, "dimension exceeds u32 row indices");
        let defect = a.symmetry_defect();
        if defect > opts.symmetry_tol * a.max_abs().max(f64::MIN_POSITIVE) {
            return Err(LinalgError::NotSymmetric(defect));
        }
        let scaling = ruiz_scaling(a, 12);
        let perm = match &opts.perm {
            Some(p) => {
                assert_eq!(p.len(), n, "ordering length");
                p.clone()
            }
            None => nested_dissection(a),
        };
        let mut iperm = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }

        // upper triangle of the scaled, permuted matrix, column by column
        let mut col_counts = vec![0usize; n + 1];
        for (r, c, _) in a.triplets() {
            let (pr, pc) = (iperm[r], iperm[c]);
            if pr <= pc {
                col_counts[pc + 1] += 1;
            }
        }
        let mut diag_present = vec![false; n];
        for j in 0..n {
            col_counts[j + 1] += col_counts[j];
        }
        let mut next = col_counts.clone();
        let nnz_u = col_counts[n];
        let mut u_rows = vec![0usize; nnz_u];
        let mut u_vals = vec![0.0; nnz_u];
        for (r, c, v) in a.triplets() {
            let (pr, pc) = (iperm[r], iperm[c]);
            if pr <= pc {
                let p = next[pc];
                u_rows[p] = pr;
                u_vals[p] = v * scaling[r] * scaling[c];
                if pr == pc {
                    diag_present[pc] = true;
                }
                next[pc] += 1;
            }
        }
        let mut shift = vec![0.0; n];
        let mut regularized = 0;
        for j in 0..n {
            let mut dj = 0.0;
            for p in col_counts[j]..col_counts[j + 1] {
                if u_rows[p] == j {
                    dj += u_vals[p];
                }
            }
            if dj.abs() <= 1e-14 {
                shift[j] = -opts.regularization;
                regularized += 1;
            }
        }

        // elimination tree and column counts
        let none = usize::MAX;
        let mut etree = vec![none; n];
        let mut lnz = vec![0usize; n];
        let mut work = vec![none; n];
        for j in 0..n {
            work[j] = j;
            for p in col_counts[j]..col_counts[j + 1] {
                let mut i = u_rows[p];
                if i == j {
                    continue;
                }
                while work[i] != j {
                    if etree[i] == none {
                        etree[i] = j;
                    }
                    lnz[i] += 1;
                    work[i] = j;
                    i = etree[i];
                }
            }
        }
        let mut l_offsets = vec![0usize; n + 1];
        for i in 0..n {
            l_offsets[i + 1] = l_offsets[i] + lnz[i];
        }
        let total = l_offsets[n];
        let mut l_rows = vec![0u32; total];
        let mut l_values = vec![0.0; total];
        let mut d = vec![0.0; n];
        let mut d_inv = vec![0.0; n];

        // numeric up-looking factorization
        let mut y_vals = vec![0.0; n];
        let mut y_used = vec![false; n];
        let mut y_idx = vec![0usize; n];
        let mut elim = vec![0usize; n];
        let mut next_space: Vec<usize> = l_offsets[..n].to_vec();
        for k in 0..n {
            let mut nnz_y = 0;
            d[k] = shift[k];
            for p in col_counts[k]..col_counts[k + 1] {
                let b = u_rows[p];
                if b == k {
                    d[k] += u_vals[p];
                    continue;
                }
                y_vals[b] += u_vals[p];
                if !y_used[b] {
                    y_used[b] = true;
                    elim[0] = b;
                    let mut n_elim = 1;
                    let mut nx = etree[b];
                    while nx != none && nx < k {
                        if y_used[nx] {
                            break;
                        }
                        y_used[nx] = true;
                        elim[n_elim] = nx;
                        n_elim += 1;
                        nx = etree[nx];
                    }
                    while n_elim > 0 {
                        n_elim -= 1;
                        y_idx[nnz_y] = elim[n_elim];
                        nnz_y += 1;
                    }
                }
            }
            for i in (0..nnz_y).rev() {
                let c = y_idx[i];
                let tmp = next_space[c];
                let yc = y_vals[c];
                for j in l_offsets[c]..tmp {
                    y_vals[l_rows[j] as usize] -= l_values[j] * yc;
                }
                l_rows[tmp] = k as u32;
                let lkc = yc * d_inv[c];
                l_values[tmp] = lkc;
                d[k] -= yc * lkc;
                next_space[c] += 1;
                y_vals[c] = 0.0;
                y_used[c] = false;
            }
            if d[k].abs() <= 1e-14 || !d[k].is_finite() {
                return Err(LinalgError::Singular {
                    row: k,
                    original: perm[k],
                });
            }
            d_inv[k] = 1.0 / d[k];
        }

        Ok(Factorization {
            n,
            matrix: a.clone(),
            perm,
            scaling,
            l_offsets,
            l_rows,
            l_values,
            d_inv,
            regularized,
            opts,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Stored entries of the unit lower factor.
    pub fn factor_nnz(&self) -> usize {
        self.l_values.len()
    }

    /// Number of shifted pivots (zero diagonal positions).
    pub fn regularized_pivots(&self) -> usize {
        self.regularized
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    /// Signs of the factored pivots: `(positive, negative)`.
    pub fn inertia(&self) -> (usize, usize) {
        let pos = self.d_inv.iter().filter(|&&v| v > 0.0).count();
        (pos, self.n - pos)
    }

    /// One application of the (shifted) inverse, in place.
    fn apply_inverse(&self, x: &mut [f64], tmp: &mut Vec<f64>) {
        let n = self.n;
        tmp.clear();
        tmp.extend(self.perm.iter().map(|&old| x[old] * self.scaling[old]));
        // rows of column i are all > i (checked at factorization), so the
        // unchecked accesses below stay inside `tmp`
        let tmp = &mut tmp[..n];
        for i in 0..n {
            let xi = tmp[i];
            if xi != 0.0 {
                let (lo, hi) = (self.l_offsets[i], self.l_offsets[i + 1]);
                for (&r, &v) in self.l_rows[lo..hi].iter().zip(&self.l_values[lo..hi]) {
                    debug_assert!((r as usize) < n);
                    unsafe { *tmp.get_unchecked_mut(r as usize) -= v * xi };
                }
            }
        }
        for (t, d) in tmp.iter_mut().zip(&self.d_inv) {
            *t *= d;
        }
        for i in (0..n).rev() {
            let (lo, hi) = (self.l_offsets[i], self.l_offsets[i + 1]);
            let mut s = 0.0;
            for (&r, &v) in self.l_rows[lo..hi].iter().zip(&self.l_values[lo..hi]) {
                debug_assert!((r as usize) < n);
                s += v * unsafe { *tmp.get_unchecked(r as usize) };
            }
            tmp[i] -= s;
        }
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = tmp[new] * self.scaling[old];
        }
    }

    /// Solves `A x = b` with iterative refinement.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        let mut x = vec![0.0; self.n];
        let mut ws = SolveWorkspace::default();
        self.solve_with(b, &mut x, &mut ws)?;
        Ok(x)
    }

    pub fn solve_with(
        &self,
        b: &[f64],
        x: &mut [f64],
        ws: &mut SolveWorkspace,
    ) -> Result<SolveStats, LinalgError> {
        if b.len() != self.n || x.len() != self.n {
            return Err(LinalgError::DimensionMismatch {
                expected: self.n,
                found: if b.len() != self.n { b.len() } else { x.len() },
            });
        }
        let b_norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        if b_norm == 0.0 {
            x.iter_mut().for_each(|v| *v = 0.0);
            return Ok(SolveStats {
                relative_residual: 0.0,
                refinements: 0,
            });
        }
        x.copy_from_slice(b);
        self.apply_inverse(x, &mut ws.permuted);
        ws.residual.resize(self.n, 0.0);
        ws.correction.resize(self.n, 0.0);
        let mut rel = self.residual_into(b, x, &mut ws.residual) / b_norm;
        let mut refinements = 0;
        while rel > self.opts.refine_tol && refinements < self.opts.max_refine {
            ws.correction.copy_from_slice(&ws.residual);
            self.apply_inverse(&mut ws.correction, &mut ws.permuted);
            for (xi, ci) in x.iter_mut().zip(&ws.correction) {
                *xi += ci;
            }
            refinements += 1;
            let new_rel = self.residual_into(b, x, &mut ws.residual) / b_norm;
            let stalled = new_rel > 0.5 * rel;
            rel = new_rel;
            if stalled {
                break;
            }
        }
        if !(rel <= self.opts.accept_tol) {
            return Err(LinalgError::ResidualExceeded {
                residual: rel,
                tolerance: self.opts.accept_tol,
            });
        }
        Ok(SolveStats {
            relative_residual: rel,
            refinements,
        })
    }

    fn residual_into(&self, b: &[f64], x: &[f64], r: &mut [f64]) -> f64 {
        self.matrix.spmv_unchecked(x, r);
        let mut s = 0.0;
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
            s += *ri * *ri;
        }
        s.sqrt()
    }
}

/// Symmetric Ruiz equilibration: `D A D` has rows of unit max-norm (approximately).
fn ruiz_scaling(a: &CsrMatrix, sweeps: usize) -> Vec<f64> {
    let n = a.n_rows();
    let mut d = vec![1.0; n];
    let mut row_max = vec![0.0f64; n];
    for _ in 0..sweeps {
        row_max.iter_mut().for_each(|v| *v = 0.0);
        for (i, j, v) in a.triplets() {
            let s = (v * d[i] * d[j]).abs();
            if s > row_max[i] {
                row_max[i] = s;
            }
        }
        let mut done = true;
        for i in 0..n {
            if row_max[i] > 0.0 {
                if (row_max[i] - 1.0).abs() > 1e-3 {
                    done = false;
                }
                d[i] /= row_max[i].sqrt();
            }
        }
        if done {
            break;
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rel_residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
        let ax = a.spmv(x).unwrap();
        let r: f64 = ax.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        r / b.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    #[test]
    fn diagonal() {
        let a = CsrMatrix::from_diagonal(&[1.0, 2.0, 3.0]);
        let x = Factorization::new(&a).unwrap().solve(&[1.0, 2.0, 3.0]).unwrap();
        for v in x {
            assert!((v - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn small_saddle() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        let f = Factorization::new(&a).unwrap();
        let x = f.solve(&[2.0, 1.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-13 && (x[1] - 1.0).abs() < 1e-13);
    }

    #[test]
    fn singular_reported() {
        let a = CsrMatrix::from_triplets(
            2,
            2,
            &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)],
        )
        .unwrap();
        assert!(matches!(
            Factorization::new(&a),
            Err(LinalgError::Singular { row: 1, .. })
        ));
    }

    #[test]
    fn nonsymmetric_rejected() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 1.0), (1, 1, 1.0)]).unwrap();
        assert!(matches!(Factorization::new(&a), Err(LinalgError::NotSymmetric(_))));
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let a = CsrMatrix::from_diagonal(&[4.0, -1.0]);
        assert_eq!(Factorization::new(&a).unwrap().solve(&[0.0, 0.0]).unwrap(), vec![0.0; 2]);
    }

    /// Random saddle point matrix `[[H, B^T], [B, 0]]` with SPD `H`.
    fn random_saddle(rng: &mut ChaCha8Rng, n: usize, m: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 4.0 + rng.gen_range(0.0..1.0)));
            for _ in 0..2 {
                let j = rng.gen_range(0..n);
                if j != i {
                    let v = rng.gen_range(-0.5..0.5);
                    t.push((i, j, v));
                    t.push((j, i, v));
                }
            }
        }
        for r in 0..m {
            for _ in 0..3 {
                let j = rng.gen_range(0..n);
                let v = rng.gen_range(-1.0..1.0);
                t.push((n + r, j, v));
                t.push((j, n + r, v));
            }
            // guarantee full row rank
            t.push((n + r, r, 1.0));
            t.push((r, n + r, 1.0));
        }
        CsrMatrix::from_triplets(n + m, n + m, &t).unwrap()
    }

    #[test]
    fn repeated_solves_keep_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_saddle(&mut rng, 120, 40);
        let f = Factorization::new(&a).unwrap();
        assert!(f.regularized_pivots() >= 40);
        let mut ws = SolveWorkspace::default();
        let mut x = vec![0.0; 160];
        for _ in 0..1000 {
            let b: Vec<f64> = (0..160).map(|_| rng.gen_range(-1.0..1.0)).collect();
            f.solve_with(&b, &mut x, &mut ws).unwrap();
            assert!(rel_residual(&a, &x, &b) <= 1e-10);
        }
    }

    #[test]
    fn ordering_does_not_change_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_saddle(&mut rng, 60, 15);
        let b: Vec<f64> = (0..75).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x1 = Factorization::new(&a).unwrap().solve(&b).unwrap();
        let mut p: Vec<usize> = (0..75).collect();
        p.reverse();
        let opts = FactorizeOptions {
            perm: Some(p),
            ..Default::default()
        };
        let x2 = Factorization::with_options(&a, opts).unwrap().solve(&b).unwrap();
        for (u, v) in x1.iter().zip(&x2) {
            assert!((u - v).abs() < 1e-10);
        }
        // dense oracle
        let x3 = a.to_dense().solve_lu(&b).unwrap();
        for (u, v) in x1.iter().zip(&x3) {
            assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn permuted_system_solution() {
        // P A P^T (P x) = P b has the permuted solution
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random_saddle(&mut rng, 40, 10);
        let n = 50;
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = Factorization::new(&a).unwrap().solve(&b).unwrap();
        let pi: Vec<usize> = (0..n).map(|i| (i * 7 + 3) % n).collect();
        let t: Vec<_> = a.triplets().map(|(i, j, v)| (pi[i], pi[j], v)).collect();
        let pa = CsrMatrix::from_triplets(n, n, &t).unwrap();
        let mut pb = vec![0.0; n];
        for i in 0..n {
            pb[pi[i]] = b[i];
        }
        let px = Factorization::new(&pa).unwrap().solve(&pb).unwrap();
        for i in 0..n {
            assert!((px[pi[i]] - x[i]).abs() < 1e-11);
        }
    }
}
