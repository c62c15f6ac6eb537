//! The three benchmark problems on `(0,1)^2 x (0,1]`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::functions::{SpaceTimeFunction, TimeProfile};
use crate::ocp::OcpSpec;

use super::BenchError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum ExampleId {
    #[serde(rename = "1")]
    Example1,
    #[serde(rename = "2")]
    Example2,
    #[serde(rename = "3")]
    Example3,
}

impl ExampleId {
    pub fn as_str(self) -> &'static str {
        match self {
            ExampleId::Example1 => "1",
            ExampleId::Example2 => "2",
            ExampleId::Example3 => "3",
        }
    }

    pub fn definition(self) -> ExampleDef {
        match self {
            ExampleId::Example1 => example1(),
            ExampleId::Example2 => example2(),
            ExampleId::Example3 => example3(),
        }
    }
}

impl fmt::Display for ExampleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExampleId {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().trim_start_matches("example") {
            "1" => Ok(ExampleId::Example1),
            "2" => Ok(ExampleId::Example2),
            "3" => Ok(ExampleId::Example3),
            _ => Err(BenchError::InvalidStudy(format!("unknown example '{s}'"))),
        }
    }
}

/// Closed-form optimal solution. `mu` is the multiplier density in time.
#[derive(Clone, Debug)]
pub struct AnalyticTruth {
    pub q: SpaceTimeFunction,
    pub u: SpaceTimeFunction,
    pub z: SpaceTimeFunction,
    pub mu: TimeProfile,
}

#[derive(Clone, Debug)]
pub struct ExampleDef {
    pub id: ExampleId,
    pub spec: OcpSpec,
    pub truth: Option<AnalyticTruth>,
    /// Subdivisions per direction.
    pub recommended_n: Vec<usize>,
    /// Slab counts.
    pub recommended_m: Vec<usize>,
    pub notes: &'static str,
}

/// Closed forms behind the first example.
pub mod smooth {
    use super::PI;

    /// `64 sqrt(2) / (5 sqrt(7))`, normalizes `y` in `L^2`.
    pub fn normalization() -> f64 {
        64.0 * 2f64.sqrt() / (5.0 * 7f64.sqrt())
    }

    fn g(s: f64, d: u32) -> f64 {
        match d {
            0 => 48.0 * s * s - 128.0 * s.powi(3),
            1 => 96.0 * s - 384.0 * s * s,
            _ => 96.0 - 768.0 * s,
        }
    }

    /// `d`-th derivative (`d <= 2`) of the plateau profile.
    pub fn phi_derivative(t: f64, d: u32) -> f64 {
        if t < 0.25 {
            g(t, d)
        } else if t <= 0.75 {
            if d == 0 { 1.0 } else { 0.0 }
        } else {
            let sign = if d % 2 == 1 { -1.0 } else { 1.0 };
            sign * g(1.0 - t, d)
        }
    }

    pub fn phi(t: f64) -> f64 {
        phi_derivative(t, 0)
    }

    /// Derivatives of `sin(pi s)^4 = 3/8 - cos(2 pi s)/2 + cos(4 pi s)/8`.
    pub fn f(s: f64, d: u32) -> f64 {
        let dcos = |w: f64| w.powi(d as i32) * (w * s + d as f64 * PI / 2.0).cos();
        if d == 0 {
            return (PI * s).sin().powi(4);
        }
        -0.5 * dcos(2.0 * PI) + 0.125 * dcos(4.0 * PI)
    }

    fn curl(x: [f64; 2], a: [u32; 2]) -> [f64; 2] {
        // (-f(x1) f'(x2), f'(x1) f(x2)) with extra derivatives a on (x1, x2)
        let c = normalization() / (4.0 * PI);
        [
            -c * f(x[0], a[0]) * f(x[1], a[1] + 1),
            c * f(x[0], a[0] + 1) * f(x[1], a[1]),
        ]
    }

    pub fn y(x: [f64; 2]) -> [f64; 2] {
        curl(x, [0, 0])
    }

    pub fn laplace_y(x: [f64; 2]) -> [f64; 2] {
        let a = curl(x, [2, 0]);
        let b = curl(x, [0, 2]);
        [a[0] + b[0], a[1] + b[1]]
    }

    pub fn bilaplace_y(x: [f64; 2]) -> [f64; 2] {
        let a = curl(x, [4, 0]);
        let b = curl(x, [2, 2]);
        let c = curl(x, [0, 4]);
        [a[0] + 2.0 * b[0] + c[0], a[1] + 2.0 * b[1] + c[1]]
    }

    /// Multiplier density of the state constraint.
    pub fn mu_density(t: f64) -> f64 {
        if (0.25..=0.75).contains(&t) { 1e3 } else { 0.0 }
    }
}

/// Time profile of the rough desired state.
pub fn rough_profile(t: f64) -> f64 {
    if (0.2..=0.4).contains(&t) {
        (t - 0.2).sqrt() * (0.4 - t)
    } else if (0.6..=0.8).contains(&t) {
        -(t - 0.6).sqrt() * (0.8 - t)
    } else {
        0.0
    }
}

pub fn rough_weight(x: [f64; 2]) -> [f64; 2] {
    let (a, b) = (x[0] - 0.5, x[1] - 0.5);
    if a * a + b * b <= 0.125 { [b, -a] } else { [0.0, 0.0] }
}

const KINKS: [f64; 2] = [0.25, 0.75];

fn smooth_spec() -> (OcpSpec, AnalyticTruth) {
    use smooth::*;
    let prof = |d: u32, s: f64| TimeProfile::with_breakpoints(move |t| s * phi_derivative(t, d), KINKS.to_vec());
    let mut desired = SpaceTimeFunction::zero();
    desired.add_term(
        TimeProfile::with_breakpoints(|t| phi(t) - phi_derivative(t, 2) + mu_density(t), KINKS.to_vec()),
        y,
    );
    desired.add_term(prof(0, 1.0), bilaplace_y);
    let mut q = SpaceTimeFunction::zero();
    q.add_term(prof(1, 1.0), y);
    q.add_term(prof(0, -1.0), laplace_y);
    let mut z = SpaceTimeFunction::zero();
    z.add_term(prof(1, -1.0), y);
    z.add_term(prof(0, 1.0), laplace_y);
    let u = SpaceTimeFunction::separable(prof(0, 1.0), y);
    let spec = OcpSpec {
        alpha: 1.0,
        beta: 1.0,
        lower: [f64::NEG_INFINITY; 2],
        upper: [f64::INFINITY; 2],
        weight: Arc::new(y),
        desired,
        t_final: 1.0,
    };
    let truth = AnalyticTruth {
        q,
        u,
        z,
        mu: TimeProfile::with_breakpoints(mu_density, KINKS.to_vec()),
    };
    (spec, truth)
}

/// Smooth example with closed-form solution; the state constraint is active
/// on `[1/4, 3/4]`.
pub fn example1() -> ExampleDef {
    let (spec, truth) = smooth_spec();
    ExampleDef {
        id: ExampleId::Example1,
        spec,
        truth: Some(truth),
        recommended_n: vec![8, 16, 32],
        recommended_m: vec![1000],
        notes: "k-studies use M = 2 mod 4 so that t = 1/4 and 3/4 are slab midpoints",
    }
}

/// Desired state with square-root singularities in time; no closed form.
pub fn example2() -> ExampleDef {
    let desired = SpaceTimeFunction::separable(
        TimeProfile::with_breakpoints(|t| 5e4 * rough_profile(t), vec![0.2, 0.4, 0.6, 0.8]),
        |x| {
            let (s0, c0) = (PI * x[0]).sin_cos();
            let (s1, c1) = (PI * x[1]).sin_cos();
            [s1 * c1 * s0 * s0, -s0 * c0 * s1 * s1]
        },
    );
    ExampleDef {
        id: ExampleId::Example2,
        spec: OcpSpec {
            alpha: 1e-4,
            beta: 1.0,
            lower: [f64::NEG_INFINITY; 2],
            upper: [f64::INFINITY; 2],
            weight: Arc::new(rough_weight),
            desired,
            t_final: 1.0,
        },
        truth: None,
        recommended_n: vec![4, 8, 16],
        recommended_m: vec![5, 10, 20],
        notes: "errors against a nested fine-grid reference (M = 240, n = 32)",
    }
}

/// First example with the upper control bound 200 in both components.
pub fn example3() -> ExampleDef {
    let (mut spec, _) = smooth_spec();
    spec.upper = [200.0, 200.0];
    ExampleDef {
        id: ExampleId::Example3,
        spec,
        truth: None,
        recommended_n: vec![4, 8, 16],
        recommended_m: vec![5, 10, 20, 40],
        notes: "errors against a nested fine-grid reference (M = 160, n = 32)",
    }
}

#[cfg(test)]
mod tests {
    use super::smooth::*;
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn profiles() {
        assert!((phi(0.25) - 1.0).abs() < 1e-15);
        assert!((phi(0.75) - 1.0).abs() < 1e-15);
        assert_eq!(phi(0.0), 0.0);
        assert!((phi(1.0)).abs() < 1e-15);
        assert_eq!(rough_profile(0.0), 0.0);
        assert_eq!(rough_profile(0.5), 0.0);
        assert_eq!(rough_profile(1.0), 0.0);
        assert!((rough_profile(0.3) - 0.1f64.sqrt() * 0.1).abs() < 1e-15);
        assert_eq!(rough_weight([0.0, 0.0]), [0.0, 0.0]);
        assert_eq!(rough_weight([0.5, 0.75]), [0.25, 0.0]);
        assert_eq!(rough_weight([0.5, 0.9]), [0.0, 0.0]);
    }

    #[test]
    fn sine_power_derivatives() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let s: f64 = rng.gen();
            let e = 1e-4;
            for d in 0..5 {
                let fd = (f(s + e, d) - f(s - e, d)) / (2.0 * e);
                assert!((fd - f(s, d + 1)).abs() <= 1e-6 * 2f64.powi(2 * d as i32 + 2) * PI.powi(d as i32 + 1));
            }
        }
    }

    #[test]
    fn desired_state_identity() {
        // u_d = u + dz/dt + lap z + mu w against differences of the coded u, z
        let ex = example1();
        let truth = ex.truth.unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let (et, ex_) = (1e-4, 1e-4);
        let mut checked = 0;
        while checked < 1000 {
            let t: f64 = rng.gen();
            if KINKS.iter().any(|k| (t - k).abs() < 1e-3) || t < 3.0 * et || t > 1.0 - 3.0 * et {
                continue;
            }
            let x = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
            let z = |t, x| truth.z.eval(t, x);
            // fourth order central differences
            let dz = {
                let f = |d: f64| z(t + d * et, x);
                let (a, b, c, d) = (f(2.0), f(1.0), f(-1.0), f(-2.0));
                [0, 1].map(|i| (-a[i] + 8.0 * b[i] - 8.0 * c[i] + d[i]) / (12.0 * et))
            };
            let c = z(t, x);
            let lap = {
                let mut l = [0.0; 2];
                for dir in 0..2 {
                    let f = |d: f64| {
                        let mut xs = x;
                        xs[dir] += d * ex_;
                        z(t, xs)
                    };
                    let (a, b, m1, m2) = (f(2.0), f(1.0), f(-1.0), f(-2.0));
                    for i in 0..2 {
                        l[i] += (-a[i] + 16.0 * b[i] - 30.0 * c[i] + 16.0 * m1[i] - m2[i]) / (12.0 * ex_ * ex_);
                    }
                }
                l
            };
            let u = truth.u.eval(t, x);
            let w = y(x);
            let ud = ex.spec.desired.eval(t, x);
            let scale = ud[0].abs().max(ud[1].abs()).max(1.0);
            for c_ in 0..2 {
                let rhs = u[c_] + dz[c_] + lap[c_] + mu_density(t) * w[c_];
                assert!((ud[c_] - rhs).abs() <= 1e-5 * scale, "t={t} x={x:?}: {} vs {rhs}", ud[c_]);
            }
            // q = -z (no bounds, alpha = 1) and q = du/dt - lap u
            let q = truth.q.eval(t, x);
            assert_eq!(q, [-c[0], -c[1]]);
            checked += 1;
        }
    }

    #[test]
    fn constraint_is_active_on_plateau() {
        use crate::fem::{quadrature_rule, Discretization};
        let disc = Discretization::unit_square(64).unwrap();
        let rule = quadrature_rule(8).unwrap();
        let mut norm = 0.0;
        for cell in 0..disc.mesh.n_cells() {
            let map = disc.mesh.cell_affine_map(cell).unwrap();
            for (l, w) in rule.points.iter().zip(&rule.weights) {
                let v = y(map.map_barycentric(*l));
                norm += w * map.det.abs() * (v[0] * v[0] + v[1] * v[1]);
            }
        }
        assert!((norm.sqrt() - 1.0).abs() < 1e-6);
        let ex = example1();
        let truth = ex.truth.unwrap();
        // (u(t), y) = phi(t) ||y||^2 pointwise in space at every time
        for t in [0.1, 0.25, 0.5, 0.8] {
            let mut g = 0.0;
            for cell in 0..disc.mesh.n_cells() {
                let map = disc.mesh.cell_affine_map(cell).unwrap();
                for (l, w) in rule.points.iter().zip(&rule.weights) {
                    let x = map.map_barycentric(*l);
                    let (u, wv) = (truth.u.eval(t, x), y(x));
                    g += w * map.det.abs() * (u[0] * wv[0] + u[1] * wv[1]);
                }
            }
            assert!((g - phi(t) * norm).abs() <= 1e-10);
        }
    }

    #[test]
    fn bound_binds_in_third_example() {
        let ex1 = example1();
        let ex3 = example3();
        let truth = ex1.truth.unwrap();
        let mut peak = 0.0_f64;
        for i in 0..=40 {
            for j in 0..=20 {
                let x = [i as f64 / 40.0, j as f64 / 20.0];
                let q = truth.q.eval(1.0 / 3.0, x);
                peak = peak.max(q[0]).max(q[1]);
                assert_eq!(ex1.spec.desired.eval(0.4, x), ex3.spec.desired.eval(0.4, x));
            }
        }
        assert!(peak > 200.0, "{peak}");
        assert!(ex3.spec.upper.iter().all(|b| b.is_finite()));
    }

    #[test]
    fn id_round_trip() {
        for id in [ExampleId::Example1, ExampleId::Example2, ExampleId::Example3] {
            assert_eq!(id.as_str().parse::<ExampleId>().unwrap(), id);
            assert_eq!(id.definition().id, id);
        }
        assert!("4".parse::<ExampleId>().is_err());
    }
}
