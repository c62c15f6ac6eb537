//! Separable space-time data `f(t, x) = sum_j g_j(t) s_j(x)`.
//!
//! Every analytic source, desired state and reference solution in the examples
//! is a short sum of such terms. Time profiles carry the points where they are
//! non-smooth so slab integrals can split there.

use std::fmt;
use std::sync::Arc;

use crate::fem::quadrature::gauss_on_interval;

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn([f64; 2]) -> [f64; 2] + Send + Sync>;

/// Gauss points used per smooth piece of a time slab.
pub const TIME_GAUSS_POINTS: usize = 3;

#[derive(Clone)]
pub struct TimeProfile {
    f: ScalarFn,
    breakpoints: Vec<f64>,
}

impl fmt::Debug for TimeProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TimeProfile")
            .field("breakpoints", &self.breakpoints)
            .finish_non_exhaustive()
    }
}

impl TimeProfile {
    pub fn new<F: Fn(f64) -> f64 + Send + Sync + 'static>(f: F) -> Self {
        TimeProfile {
            f: Arc::new(f),
            breakpoints: Vec::new(),
        }
    }

    /// Profile that is smooth between consecutive `breakpoints`.
    pub fn with_breakpoints<F: Fn(f64) -> f64 + Send + Sync + 'static>(
        f: F,
        mut breakpoints: Vec<f64>,
    ) -> Self {
        breakpoints.sort_by(f64::total_cmp);
        breakpoints.dedup();
        TimeProfile {
            f: Arc::new(f),
            breakpoints,
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(move |_| c)
    }

    pub fn eval(&self, t: f64) -> f64 {
        (self.f)(t)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    /// `int_{t0}^{t1} g`, Gauss-Legendre on each smooth piece.
    pub fn integrate(&self, t0: f64, t1: f64) -> f64 {
        pieces(t0, t1, &self.breakpoints)
            .windows(2)
            .map(|w| {
                gauss_on_interval(TIME_GAUSS_POINTS, w[0], w[1])
                    .expect("supported point count")
                    .iter()
                    .map(|(t, wt)| wt * self.eval(*t))
                    .sum::<f64>()
            })
            .sum()
    }
}

/// `[t0, interior breakpoints..., t1]`.
pub fn pieces(t0: f64, t1: f64, breakpoints: &[f64]) -> Vec<f64> {
    let mut out = vec![t0];
    out.extend(breakpoints.iter().copied().filter(|&b| b > t0 && b < t1));
    out.push(t1);
    out
}

#[derive(Clone)]
pub struct SeparableTerm {
    pub time: TimeProfile,
    pub space: VectorFn,
}

/// Vector-valued space-time function as a sum of separable terms.
#[derive(Clone, Default)]
pub struct SpaceTimeFunction {
    terms: Vec<SeparableTerm>,
}

impl fmt::Debug for SpaceTimeFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SpaceTimeFunction({} terms)", self.terms.len())
    }
}

impl SpaceTimeFunction {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn separable<F>(time: TimeProfile, space: F) -> Self
    where
        F: Fn([f64; 2]) -> [f64; 2] + Send + Sync + 'static,
    {
        let mut s = Self::zero();
        s.add_term(time, space);
        s
    }

    pub fn add_term<F>(&mut self, time: TimeProfile, space: F)
    where
        F: Fn([f64; 2]) -> [f64; 2] + Send + Sync + 'static,
    {
        self.terms.push(SeparableTerm {
            time,
            space: Arc::new(space),
        });
    }

    pub fn terms(&self) -> &[SeparableTerm] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn eval(&self, t: f64, x: [f64; 2]) -> [f64; 2] {
        let mut v = [0.0; 2];
        for term in &self.terms {
            let g = term.time.eval(t);
            if g != 0.0 {
                let s = (term.space)(x);
                v[0] += g * s[0];
                v[1] += g * s[1];
            }
        }
        v
    }

    /// Union of all term breakpoints, sorted.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self
            .terms
            .iter()
            .flat_map(|t| t.time.breakpoints().iter().copied())
            .collect();
        b.sort_by(f64::total_cmp);
        b.dedup();
        b
    }

    /// Time nodes and weights for `[t0, t1]` that integrate every term's smooth
    /// pieces with the standard Gauss rule.
    pub fn time_quadrature(&self, t0: f64, t1: f64) -> Vec<(f64, f64)> {
        pieces(t0, t1, &self.breakpoints())
            .windows(2)
            .flat_map(|w| gauss_on_interval(TIME_GAUSS_POINTS, w[0], w[1]).expect("supported"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrate_splits_at_kinks() {
        let g = TimeProfile::with_breakpoints(|t: f64| (t - 0.3).abs(), vec![0.3]);
        let exact = 0.5 * 0.3 * 0.3 + 0.5 * 0.7 * 0.7;
        assert!((g.integrate(0.0, 1.0) - exact).abs() < 1e-15);
    }

    #[test]
    fn sum_of_terms() {
        let mut f = SpaceTimeFunction::separable(TimeProfile::constant(2.0), |x| [x[0], 0.0]);
        f.add_term(TimeProfile::new(|t| t), |x| [0.0, x[1]]);
        assert_eq!(f.eval(3.0, [1.0, 2.0]), [2.0, 6.0]);
        assert!(SpaceTimeFunction::zero().is_empty());
    }

    #[test]
    fn time_quadrature_union() {
        let mut f = SpaceTimeFunction::zero();
        f.add_term(TimeProfile::with_breakpoints(|t| t, vec![0.5]), |_| [1.0, 0.0]);
        f.add_term(TimeProfile::with_breakpoints(|t| t, vec![0.25, 0.5]), |_| [1.0, 0.0]);
        let q = f.time_quadrature(0.0, 1.0);
        assert_eq!(q.len(), 3 * TIME_GAUSS_POINTS);
        let s: f64 = q.iter().map(|(_, w)| w).sum();
        assert!((s - 1.0).abs() < 1e-15);
    }
}
