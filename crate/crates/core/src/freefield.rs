//! Free Klein-Gordon evolution of the regular (Gaussian-sum) initial data,
//! evaluated at arbitrary spacetime points.
//!
//! In Fourier space the free flow is
//! `psi_hat(k, t) = psi0_hat cos(t w) + pi0_hat sin(t w)/w` with
//! `w = sqrt(|k|^2 + m^2)`. A Gaussian component centered at `c` has a radial
//! spectrum, so the angular integral collapses and the value at `x` becomes a
//! 1D radial integral with weight `sin(k r)/(k r)`, `r = |x - c|`:
//!
//! `psi(x, t) = sqrt(2/pi) * A sigma^3 * int_0^kmax exp(-sigma^2 k^2/2) W(t, w) sinc(k r) k^2 dk`
//!
//! with `W = cos(t w)` for `psi0` components and `W = sin(t w)/w` for `pi0`
//! components; time derivatives use `-w sin(t w)` and `cos(t w)`. The
//! integrand is entire and the Gaussian factor certifies truncation at
//! `kmax = max(8/sigma, 40 m)`, so composite Gauss-Legendre panels with one
//! doubling check reach near machine accuracy.

use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geom::{dist, Vec3};
use crate::model::{GaussianComponent, InitialData};
use crate::Complex;

/// Radial quadrature controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureParams {
    /// Absolute tolerance on each component integral.
    pub tolerance: f64,
    /// Hard cap on the number of panels per integral.
    pub panel_budget: usize,
    /// Optional override of the spectral cutoff.
    pub kmax_override: Option<f64>,
}

impl Default for QuadratureParams {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            panel_budget: 1 << 14,
            kmax_override: None,
        }
    }
}

/// One evaluated point: value and (optionally) the time derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldValue {
    pub value: Complex,
    pub derivative: Option<Complex>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Weight {
    /// cos(t w), derivative -w sin(t w): evolution of position-type data.
    Position,
    /// sin(t w)/w, derivative cos(t w): evolution of velocity-type data.
    Velocity,
}

#[derive(Debug, Clone)]
struct Component {
    gaussian: GaussianComponent,
    weight: Weight,
    kmax: f64,
}

/// Evaluator for the regular part of the free field.
#[derive(Debug, Clone)]
pub struct FreeFieldEvaluator {
    mass: f64,
    components: Vec<Component>,
    params: QuadratureParams,
    gl_nodes: [f64; 16],
    gl_weights: [f64; 16],
}

impl FreeFieldEvaluator {
    pub fn new(mass: f64, data: &InitialData, params: QuadratureParams) -> Result<Self> {
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::InvalidConfig(alloc::format!(
                "free field mass must be positive, got {mass}"
            )));
        }
        let mut components = Vec::new();
        for (list, weight) in [
            (&data.psi0_reg, Weight::Position),
            (&data.pi0_reg, Weight::Velocity),
        ] {
            for g in list.iter() {
                if !(g.width > 0.0) {
                    return Err(Error::InvalidConfig("Gaussian width must be positive".into()));
                }
                let kmax = params
                    .kmax_override
                    .unwrap_or_else(|| f64::max(8.0 / g.width, 40.0 * mass));
                components.push(Component {
                    gaussian: g.clone(),
                    weight,
                    kmax,
                });
            }
        }
        let (gl_nodes, gl_weights) = gauss_legendre_16();
        Ok(Self {
            mass,
            components,
            params,
            gl_nodes,
            gl_weights,
        })
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn is_trivial(&self) -> bool {
        self.components.is_empty()
    }

    /// Evaluates `psi_f_reg(point, t)` (and the time derivative if requested).
    pub fn eval(&self, point: Vec3, t: f64, with_derivative: bool) -> Result<FieldValue> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::InvalidConfig(alloc::format!(
                "free field evaluation requires finite t >= 0, got {t}"
            )));
        }
        let mut value = Complex::new(0.0, 0.0);
        let mut derivative = Complex::new(0.0, 0.0);
        for comp in &self.components {
            let r = dist(point, comp.gaussian.center);
            let (iv, id) = self.radial_integrals(comp, r, t, with_derivative)?;
            let sigma = comp.gaussian.width;
            let pref = comp.gaussian.amplitude * (libm::sqrt(2.0 / PI) * sigma * sigma * sigma);
            value += pref * iv;
            if with_derivative {
                derivative += pref * id;
            }
        }
        Ok(FieldValue {
            value,
            derivative: with_derivative.then_some(derivative),
        })
    }

    /// Elementwise [`Self::eval`]; deterministic in input order.
    pub fn eval_many(&self, points: &[Vec3], t: f64, with_derivative: bool) -> Result<Vec<FieldValue>> {
        points.iter().map(|&p| self.eval(p, t, with_derivative)).collect()
    }

    /// Real radial integrals for the value and derivative weights; doubles the
    /// panel count until the difference is below tolerance.
    fn radial_integrals(&self, comp: &Component, r: f64, t: f64, with_derivative: bool) -> Result<(f64, f64)> {
        // One panel per unit of oscillation phase k*(t + r), with headroom.
        let oscillation = comp.kmax * (t + r) / (2.0 * PI);
        let mut panels = (oscillation as usize) + 8;
        let (mut val, mut der) = self.sweep(comp, r, t, with_derivative, panels);
        loop {
            let next = panels * 2;
            if next > self.params.panel_budget {
                let (v2, d2) = self.sweep(comp, r, t, with_derivative, self.params.panel_budget);
                let achieved = f64::max((v2 - val).abs(), (d2 - der).abs());
                if achieved <= self.params.tolerance {
                    return Ok((v2, d2));
                }
                return Err(Error::QuadratureAccuracy {
                    achieved,
                    requested: self.params.tolerance,
                });
            }
            let (v2, d2) = self.sweep(comp, r, t, with_derivative, next);
            let achieved = f64::max((v2 - val).abs(), (d2 - der).abs());
            if achieved <= self.params.tolerance {
                return Ok((v2, d2));
            }
            val = v2;
            der = d2;
            panels = next;
        }
    }

    fn sweep(&self, comp: &Component, r: f64, t: f64, with_derivative: bool, panels: usize) -> (f64, f64) {
        let sigma2 = comp.gaussian.width * comp.gaussian.width;
        let m2 = self.mass * self.mass;
        let h = comp.kmax / panels as f64;
        let mut val = 0.0;
        let mut der = 0.0;
        for p in 0..panels {
            let a = p as f64 * h;
            let mid = a + 0.5 * h;
            let half = 0.5 * h;
            for (x, w) in self.gl_nodes.iter().zip(self.gl_weights.iter()) {
                let k = mid + half * x;
                let omega = libm::sqrt(k * k + m2);
                let envelope = libm::exp(-0.5 * sigma2 * k * k) * k * k * sinc(k * r);
                let (s, c) = sincos(t * omega);
                let (wv, wd) = match comp.weight {
                    Weight::Position => (c, -omega * s),
                    Weight::Velocity => (s / omega, c),
                };
                val += w * half * envelope * wv;
                if with_derivative {
                    der += w * half * envelope * wd;
                }
            }
        }
        (val, der)
    }
}

#[inline]
fn sincos(x: f64) -> (f64, f64) {
    libm::sincos(x)
}

#[inline]
fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let z = x * x;
        1.0 - z / 6.0 + z * z / 120.0
    } else {
        libm::sin(x) / x
    }
}

/// 16-point Gauss-Legendre rule on [-1, 1], computed by Newton iteration on
/// the Legendre recurrence (deterministic, converges to machine precision).
pub fn gauss_legendre_16() -> ([f64; 16], [f64; 16]) {
    const N: usize = 16;
    let mut nodes = [0.0; N];
    let mut weights = [0.0; N];
    for i in 0..N / 2 {
        let mut x = libm::cos(PI * (i as f64 + 0.75) / (N as f64 + 0.5));
        for _ in 0..60 {
            let (p, dp) = legendre_16(x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_16(x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[N - 1 - i] = x;
        weights[i] = w;
        weights[N - 1 - i] = w;
    }
    (nodes, weights)
}

/// Legendre polynomial P16 and its derivative via the three-term recurrence.
fn legendre_16(x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=16u32 {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = 16.0 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::InitialData;
    use alloc::vec;

    fn gaussian(a: Complex, c: Vec3, w: f64) -> GaussianComponent {
        GaussianComponent {
            amplitude: a,
            center: c,
            width: w,
        }
    }

    fn evaluator(psi: Vec<GaussianComponent>, pi: Vec<GaussianComponent>, m: f64) -> FreeFieldEvaluator {
        let data = InitialData {
            zeta0: vec![],
            zeta0_dot: vec![],
            psi0_reg: psi,
            pi0_reg: pi,
        };
        FreeFieldEvaluator::new(m, &data, QuadratureParams::default()).unwrap()
    }

    #[test]
    fn gl16_integrates_polynomials() {
        let (x, w) = gauss_legendre_16();
        let total: f64 = w.iter().sum();
        assert!((total - 2.0).abs() < 1e-14);
        // degree-30 monomial: int_{-1}^{1} x^30 dx = 2/31.
        let q: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * libm::pow(*xi, 30.0)).sum();
        assert!((q - 2.0 / 31.0).abs() < 1e-14, "{q}");
    }

    #[test]
    fn initial_condition_reproduced() {
        let a = Complex::new(0.7, -0.3);
        let ev = evaluator(vec![gaussian(a, [0.2, -0.4, 0.1], 0.9)], vec![], 1.0);
        for &x in &[[0.2, -0.4, 0.1], [1.0, 0.0, 0.0], [-0.5, 0.8, 0.3]] {
            let got = ev.eval(x, 0.0, false).unwrap().value;
            let want = gaussian(a, [0.2, -0.4, 0.1], 0.9).eval(x);
            assert!((got - want).norm() < 1e-9, "{got} vs {want}");
        }
    }

    #[test]
    fn zero_velocity_data_has_zero_initial_derivative() {
        let ev = evaluator(vec![gaussian(Complex::new(1.0, 0.0), [0.0; 3], 1.0)], vec![], 1.0);
        let d = ev.eval([0.3, 0.0, 0.0], 0.0, true).unwrap().derivative.unwrap();
        assert!(d.norm() < 1e-10, "{d}");
    }

    #[test]
    fn velocity_data_reproduced_by_derivative() {
        let a = Complex::new(0.4, 0.9);
        let ev = evaluator(vec![], vec![gaussian(a, [0.1, 0.0, -0.3], 1.2)], 0.8);
        let x = [0.5, 0.2, 0.0];
        let out = ev.eval(x, 0.0, true).unwrap();
        assert!(out.value.norm() < 1e-10);
        let want = gaussian(a, [0.1, 0.0, -0.3], 1.2).eval(x);
        assert!((out.derivative.unwrap() - want).norm() < 1e-9);
    }

    #[test]
    fn eval_many_matches_single_and_handles_empty() {
        let ev = evaluator(vec![gaussian(Complex::new(1.0, 0.5), [0.0; 3], 1.0)], vec![], 1.0);
        assert!(ev.eval_many(&[], 0.5, false).unwrap().is_empty());
        let pts = [[0.1, 0.2, 0.3]];
        let many = ev.eval_many(&pts, 0.5, false).unwrap();
        let single = ev.eval(pts[0], 0.5, false).unwrap();
        assert_eq!(many[0].value, single.value);
    }

    #[test]
    fn point_symmetry_of_symmetric_data() {
        // Data even under x -> -x: values must match at mirrored points.
        let ev = evaluator(vec![gaussian(Complex::new(0.6, 0.2), [0.0; 3], 1.1)], vec![], 1.0);
        let mut worst: f64 = 0.0;
        for i in 0..10 {
            for j in 0..10 {
                for l in 0..10 {
                    let p = [
                        -0.9 + 0.2 * i as f64,
                        -0.9 + 0.2 * j as f64,
                        -0.9 + 0.2 * l as f64,
                    ];
                    let q = [-p[0], -p[1], -p[2]];
                    let vp = ev.eval(p, 0.7, false).unwrap().value;
                    let vq = ev.eval(q, 0.7, false).unwrap().value;
                    worst = worst.max((vp - vq).norm());
                }
            }
        }
        assert!(worst <= 1e-10, "asymmetry {worst}");
    }

    #[test]
    fn budget_exhaustion_reports_achieved_estimate() {
        let data = InitialData {
            zeta0: vec![],
            zeta0_dot: vec![],
            psi0_reg: vec![gaussian(Complex::new(1.0, 0.0), [0.0; 3], 1.0)],
            pi0_reg: vec![],
        };
        let params = QuadratureParams {
            tolerance: 1e-14,
            panel_budget: 4,
            kmax_override: None,
        };
        let ev = FreeFieldEvaluator::new(1.0, &data, params).unwrap();
        match ev.eval([0.3, 0.0, 0.0], 3.0, false) {
            Err(Error::QuadratureAccuracy { achieved, requested }) => {
                assert!(achieved > requested);
            }
            other => panic!("expected accuracy error, got {other:?}"),
        }
    }
}

/// Radial Hermite table of the free field of every component at one time,
/// for grid sweeps: the spectral quadrature runs once per radial sample
/// instead of once per grid point. Value and time derivative are tabulated
/// together with their radial derivatives, so the cubic interpolation error
/// is O((r_max/samples)^4) — far below the grid quadrature budget.
#[derive(Debug, Clone)]
pub struct FreeFieldTable {
    time: f64,
    r_max: f64,
    step: f64,
    components: Vec<TableComponent>,
}

#[derive(Debug, Clone)]
struct TableComponent {
    center: Vec3,
    pref: Complex,
    /// Per sample: (value, d/dr value, d/dt value, d/dr d/dt value).
    rows: Vec<[f64; 4]>,
}

impl FreeFieldEvaluator {
    /// Builds the radial table at time `t` covering distances `[0, r_max]`.
    pub fn radial_table(&self, t: f64, r_max: f64, samples: usize) -> Result<FreeFieldTable> {
        if samples < 8 || !(r_max > 0.0) {
            return Err(Error::InvalidConfig(
                "radial table needs r_max > 0 and at least 8 samples".into(),
            ));
        }
        let step = r_max / (samples - 1) as f64;
        let mut components = Vec::with_capacity(self.components.len());
        for comp in &self.components {
            let mut rows = Vec::with_capacity(samples);
            for q in 0..samples {
                let r = q as f64 * step;
                rows.push(self.radial_integrals_full(comp, r, t)?);
            }
            let sigma = comp.gaussian.width;
            components.push(TableComponent {
                center: comp.gaussian.center,
                pref: comp.gaussian.amplitude * (libm::sqrt(2.0 / PI) * sigma * sigma * sigma),
                rows,
            });
        }
        Ok(FreeFieldTable {
            time: t,
            r_max,
            step,
            components,
        })
    }

    /// Like `radial_integrals` but also returning the radial derivatives
    /// (weight `k sinc'(k r)`), at the converged panel count.
    fn radial_integrals_full(&self, comp: &Component, r: f64, t: f64) -> Result<[f64; 4]> {
        let oscillation = comp.kmax * (t + r) / (2.0 * PI);
        let mut panels = (oscillation as usize) + 8;
        let mut prev = self.sweep_full(comp, r, t, panels);
        loop {
            let next = panels * 2;
            let cur = self.sweep_full(comp, r, t, next.min(self.params.panel_budget));
            let achieved = prev
                .iter()
                .zip(cur.iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if achieved <= self.params.tolerance {
                return Ok(cur);
            }
            if next >= self.params.panel_budget {
                return Err(Error::QuadratureAccuracy {
                    achieved,
                    requested: self.params.tolerance,
                });
            }
            prev = cur;
            panels = next;
        }
    }

    fn sweep_full(&self, comp: &Component, r: f64, t: f64, panels: usize) -> [f64; 4] {
        let sigma2 = comp.gaussian.width * comp.gaussian.width;
        let m2 = self.mass * self.mass;
        let h = comp.kmax / panels as f64;
        let mut out = [0.0f64; 4];
        for p in 0..panels {
            let mid = p as f64 * h + 0.5 * h;
            let half = 0.5 * h;
            for (x, w) in self.gl_nodes.iter().zip(self.gl_weights.iter()) {
                let k = mid + half * x;
                let omega = libm::sqrt(k * k + m2);
                let gauss = libm::exp(-0.5 * sigma2 * k * k) * k * k;
                let (s, c) = libm::sincos(t * omega);
                let (wv, wd) = match comp.weight {
                    Weight::Position => (c, -omega * s),
                    Weight::Velocity => (s / omega, c),
                };
                let sc = sinc(k * r);
                let dsc = k * sinc_prime(k * r);
                let ww = w * half * gauss;
                out[0] += ww * sc * wv;
                out[1] += ww * dsc * wv;
                out[2] += ww * sc * wd;
                out[3] += ww * dsc * wd;
            }
        }
        out
    }
}

impl FreeFieldTable {
    pub fn time(&self) -> f64 {
        self.time
    }

    /// `(psi_f_reg, psi_dot_f_reg)` at `x` from the tabulated radii.
    pub fn eval(&self, x: Vec3) -> Result<(Complex, Complex)> {
        let mut value = Complex::new(0.0, 0.0);
        let mut deriv = Complex::new(0.0, 0.0);
        for comp in &self.components {
            let r = dist(x, comp.center);
            if r > self.r_max {
                return Err(Error::OutOfRange {
                    t: r,
                    horizon: self.r_max,
                });
            }
            let pos = r / self.step;
            let i = (libm::floor(pos) as usize).min(comp.rows.len() - 2);
            let tau = pos - i as f64;
            let a = comp.rows[i];
            let b = comp.rows[i + 1];
            let t2 = tau * tau;
            let t3 = t2 * tau;
            let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
            let h10 = t3 - 2.0 * t2 + tau;
            let h01 = -2.0 * t3 + 3.0 * t2;
            let h11 = t3 - t2;
            let v = h00 * a[0] + h01 * b[0] + self.step * (h10 * a[1] + h11 * b[1]);
            let d = h00 * a[2] + h01 * b[2] + self.step * (h10 * a[3] + h11 * b[3]);
            value += comp.pref * v;
            deriv += comp.pref * d;
        }
        Ok((value, deriv))
    }
}

#[inline]
fn sinc_prime(x: f64) -> f64 {
    if x.abs() < 1e-2 {
        let z = x * x;
        -x / 3.0 * (1.0 - z / 10.0 + z * z / 280.0)
    } else {
        (x * libm::cos(x) - libm::sin(x)) / (x * x)
    }
}

#[cfg(test)]
mod table_tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn table_matches_direct_evaluation() {
        let data = crate::model::InitialData {
            zeta0: vec![],
            zeta0_dot: vec![],
            psi0_reg: vec![crate::model::GaussianComponent {
                amplitude: Complex::new(0.7, -0.2),
                center: [0.4, 0.0, 0.0],
                width: 1.2,
            }],
            pi0_reg: vec![crate::model::GaussianComponent {
                amplitude: Complex::new(-0.1, 0.3),
                center: [0.0, 0.0, 0.0],
                width: 0.9,
            }],
        };
        let ev = FreeFieldEvaluator::new(1.0, &data, QuadratureParams::default()).unwrap();
        let t = 0.8;
        let table = ev.radial_table(t, 12.0, 2049).unwrap();
        for &x in &[[0.0f64, 0.0, 0.0], [1.3, -0.7, 0.2], [3.0, 3.0, 3.0]] {
            let direct = ev.eval(x, t, true).unwrap();
            let (v, d) = table.eval(x).unwrap();
            assert!((v - direct.value).norm() <= 1e-9, "value {v} vs {}", direct.value);
            assert!(
                (d - direct.derivative.unwrap()).norm() <= 1e-9,
                "deriv {d} vs {}",
                direct.derivative.unwrap()
            );
        }
    }
}
