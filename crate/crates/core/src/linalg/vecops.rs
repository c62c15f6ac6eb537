//! Vector kernels. Reductions are deterministic (see [`crate::par`]).

use crate::par;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    par::sum_range(a.len(), |i| a[i] * b[i])
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    par::for_each_chunk_mut(y, par::REDUCE_CHUNK, |c, ys| {
        let xs = &x[c * par::REDUCE_CHUNK..c * par::REDUCE_CHUNK + ys.len()];
        for (yi, xi) in ys.iter_mut().zip(xs) {
            *yi += alpha * xi;
        }
    });
}

/// `y = alpha * x + beta * y`
pub fn axpby(alpha: f64, x: &[f64], beta: f64, y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    par::for_each_chunk_mut(y, par::REDUCE_CHUNK, |c, ys| {
        let xs = &x[c * par::REDUCE_CHUNK..c * par::REDUCE_CHUNK + ys.len()];
        for (yi, xi) in ys.iter_mut().zip(xs) {
            *yi = alpha * xi + beta * *yi;
        }
    });
}

pub fn scale(alpha: f64, y: &mut [f64]) {
    par::for_each_chunk_mut(y, par::REDUCE_CHUNK, |_, ys| {
        for yi in ys {
            *yi *= alpha;
        }
    });
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernels() {
        let x: Vec<f64> = (0..10_000).map(|i| i as f64).collect();
        let mut y = vec![1.0; 10_000];
        axpy(2.0, &x, &mut y);
        assert_eq!(y[9_999], 1.0 + 2.0 * 9_999.0);
        axpby(1.0, &x, -1.0, &mut y);
        assert_eq!(y[5000], 5000.0 - 10_001.0);
        assert_eq!(dot(&[1.0, 2.0], &[3.0, 4.0]), 11.0);
        assert_eq!(norm_inf(&[-3.0, 2.0]), 3.0);
    }
}
