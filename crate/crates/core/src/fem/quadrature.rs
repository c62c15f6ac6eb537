//! Symmetric quadrature on the reference triangle and Gauss-Legendre rules on
//! intervals.

use super::FemError;

/// Rule on the reference triangle `{xi >= 0, xi_1 + xi_2 <= 1}`. Points are
/// barycentric coordinates, weights sum to the reference area `1/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Integral of `f(lambda)` over the reference triangle.
    pub fn integrate_reference<F: Fn([f64; 3]) -> f64>(&self, f: F) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * f(*p))
            .sum()
    }
}

// Dunavant orbits: (weight summing to 1 over the rule, barycentric generator).
enum Orbit {
    Center(f64),
    Two(f64, f64),         // (a, b, b)
    Three(f64, f64, f64),  // all permutations of (a, b, c)
}

fn expand(orbits: &[Orbit], degree: usize) -> QuadratureRule {
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for o in orbits {
        match *o {
            Orbit::Center(w) => {
                points.push([1.0 / 3.0; 3]);
                weights.push(0.5 * w);
            }
            Orbit::Two(w, a) => {
                let b = 0.5 * (1.0 - a);
                for p in [[a, b, b], [b, a, b], [b, b, a]] {
                    points.push(p);
                    weights.push(0.5 * w);
                }
            }
            Orbit::Three(w, a, b) => {
                let c = 1.0 - a - b;
                for p in [[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]] {
                    points.push(p);
                    weights.push(0.5 * w);
                }
            }
        }
    }
    QuadratureRule {
        points,
        weights,
        degree,
    }
}

/// Rule exact for polynomials of total degree `degree` (2, 4, 6 or 8).
pub fn quadrature_rule(degree: usize) -> Result<QuadratureRule, FemError> {
    use Orbit::*;
    let rule = match degree {
        2 => expand(&[Two(1.0 / 3.0, 2.0 / 3.0)], 2),
        4 => expand(
            &[
                Two(0.223_381_589_678_011, 0.108_103_018_168_070),
                Two(0.109_951_743_655_322, 0.816_847_572_980_459),
            ],
            4,
        ),
        6 => expand(
            &[
                Two(0.116_786_275_726_379, 0.501_426_509_658_179),
                Two(0.050_844_906_370_207, 0.873_821_971_016_996),
                Three(0.082_851_075_618_374, 0.053_145_049_844_817, 0.310_352_451_033_784),
            ],
            6,
        ),
        8 => expand(
            &[
                Center(0.144_315_607_677_787),
                Two(0.095_091_634_267_285, 0.081_414_823_414_554),
                Two(0.103_217_370_534_718, 0.658_861_384_496_480),
                Two(0.032_458_497_623_198, 0.898_905_543_365_938),
                Three(0.027_230_314_174_435, 0.008_394_777_409_958, 0.263_112_829_634_638),
            ],
            8,
        ),
        d => return Err(FemError::UnsupportedDegree(d)),
    };
    Ok(rule)
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(points: usize) -> Result<(Vec<f64>, Vec<f64>), FemError> {
    let r = match points {
        1 => (vec![0.0], vec![2.0]),
        2 => {
            let a = (1.0f64 / 3.0).sqrt();
            (vec![-a, a], vec![1.0, 1.0])
        }
        3 => {
            let a = (3.0f64 / 5.0).sqrt();
            (vec![-a, 0.0, a], vec![5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])
        }
        4 => {
            let s = (6.0f64 / 5.0).sqrt() * 2.0 / 7.0;
            let a = (3.0 / 7.0 - s).sqrt();
            let b = (3.0 / 7.0 + s).sqrt();
            let wa = (18.0 + 30.0f64.sqrt()) / 36.0;
            let wb = (18.0 - 30.0f64.sqrt()) / 36.0;
            (vec![-b, -a, a, b], vec![wb, wa, wa, wb])
        }
        5 => {
            let s = 2.0 * (10.0f64 / 7.0).sqrt();
            let a = (5.0 - s).sqrt() / 3.0;
            let b = (5.0 + s).sqrt() / 3.0;
            let w0 = 128.0 / 225.0;
            let wa = (322.0 + 13.0 * 70.0f64.sqrt()) / 900.0;
            let wb = (322.0 - 13.0 * 70.0f64.sqrt()) / 900.0;
            (vec![-b, -a, 0.0, a, b], vec![wb, wa, w0, wa, wb])
        }
        p => return Err(FemError::UnsupportedGaussPoints(p)),
    };
    Ok(r)
}

/// Gauss-Legendre nodes and weights mapped to `[t0, t1]`.
pub fn gauss_on_interval(points: usize, t0: f64, t1: f64) -> Result<Vec<(f64, f64)>, FemError> {
    let (x, w) = gauss_legendre(points)?;
    let half = 0.5 * (t1 - t0);
    let mid = 0.5 * (t0 + t1);
    Ok(x.iter().zip(&w).map(|(xi, wi)| (mid + half * xi, half * wi)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(|k| k as f64).product()
    }

    /// Exact integral of l0^a l1^b l2^c over the reference triangle (area 1/2).
    fn monomial(a: u32, b: u32, c: u32) -> f64 {
        factorial(a) * factorial(b) * factorial(c) * 2.0 * 0.5 / factorial(a + b + c + 2)
    }

    #[test]
    fn exact_on_monomials_up_to_degree() {
        for degree in [2usize, 4, 6, 8] {
            let rule = quadrature_rule(degree).unwrap();
            let wsum: f64 = rule.weights.iter().sum();
            assert!((wsum - 0.5).abs() < 1e-14, "degree {degree}");
            for a in 0..=degree as u32 {
                for b in 0..=(degree as u32 - a) {
                    // c = 0 suffices for total-degree exactness in (xi1, xi2); also test mixed
                    for c in 0..=(degree as u32 - a - b) {
                        let q = rule.integrate_reference(|l| {
                            l[0].powi(a as i32) * l[1].powi(b as i32) * l[2].powi(c as i32)
                        });
                        let exact = monomial(a, b, c);
                        assert!(
                            (q - exact).abs() < 1e-14,
                            "degree {degree}: ({a},{b},{c}) {q} vs {exact}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn spot_values() {
        let r2 = quadrature_rule(2).unwrap();
        assert!((r2.integrate_reference(|l| l[1] * l[2]) - 1.0 / 24.0).abs() < 1e-15);
        let r6 = quadrature_rule(6).unwrap();
        let v = r6.integrate_reference(|l| (l[0] * l[1] * l[2]).powi(2));
        assert!((v - 8.0 / 40320.0).abs() < 1e-15);
        assert!((v - 1.0 / 5040.0).abs() < 1e-15);
        for d in [2, 4, 6, 8] {
            let r = quadrature_rule(d).unwrap();
            assert!((r.integrate_reference(|_| 1.0) - 0.5).abs() < 1e-14);
        }
    }

    #[test]
    fn unsupported_degree() {
        assert!(matches!(quadrature_rule(3), Err(FemError::UnsupportedDegree(3))));
    }

    #[test]
    fn gauss_exactness() {
        for p in 1..=5usize {
            let nodes = gauss_on_interval(p, 0.3, 1.1).unwrap();
            for deg in 0..(2 * p) as i32 {
                let q: f64 = nodes.iter().map(|(t, w)| w * t.powi(deg)).sum();
                let exact = (1.1f64.powi(deg + 1) - 0.3f64.powi(deg + 1)) / (deg + 1) as f64;
                assert!((q - exact).abs() < 1e-14, "p={p} deg={deg}");
            }
        }
    }
}
