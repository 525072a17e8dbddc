//! Method of manufactured solutions for the charge system.
//!
//! Given closed-form target trajectories, the residual of the charge equation
//! is evaluated with high-order quadrature and injected as an extra additive
//! source, so the targets become the exact solution. The solver's own
//! discretization error is then directly measurable.

use alloc::{vec, vec::Vec};
use core::cell::RefCell;
use core::f64::consts::PI;

use crate::charges::{ExtraSource, TruncatedForce};
use crate::error::{Error, Result};
use crate::model::{GreenMatrix, InitialData, PotentialSpec, SystemConfig};
use crate::special::{tail_kernel, KernelParams};
use crate::Complex;

/// Closed-form target trajectories with closed-form derivatives.
#[derive(Debug, Clone, PartialEq)]
pub enum ManufacturedTarget {
    /// `value` for all t.
    Constant { value: Complex },
    /// `amp * exp(-rate t)`.
    ExpDecay { amp: Complex, rate: f64 },
    /// `amp * exp(-rate t)` plus, after `kink_time`,
    /// `kick * (t - kink_time) * exp(-(t - kink_time))`: continuous value,
    /// jump of `kick` in the first derivative.
    KinkedExp {
        amp: Complex,
        rate: f64,
        kink_time: f64,
        kick: Complex,
    },
}

impl ManufacturedTarget {
    pub fn value(&self, t: f64) -> Complex {
        match *self {
            ManufacturedTarget::Constant { value } => value,
            ManufacturedTarget::ExpDecay { amp, rate } => amp * libm::exp(-rate * t),
            ManufacturedTarget::KinkedExp {
                amp,
                rate,
                kink_time,
                kick,
            } => {
                let mut v = amp * libm::exp(-rate * t);
                if t >= kink_time {
                    let u = t - kink_time;
                    v += kick * u * libm::exp(-u);
                }
                v
            }
        }
    }

    pub fn derivative(&self, t: f64) -> Complex {
        match *self {
            ManufacturedTarget::Constant { .. } => Complex::new(0.0, 0.0),
            ManufacturedTarget::ExpDecay { amp, rate } => -rate * amp * libm::exp(-rate * t),
            ManufacturedTarget::KinkedExp {
                amp,
                rate,
                kink_time,
                kick,
            } => {
                let mut v = -rate * amp * libm::exp(-rate * t);
                if t >= kink_time {
                    let u = t - kink_time;
                    v += kick * (1.0 - u) * libm::exp(-u);
                }
                v
            }
        }
    }

    pub fn kink_times(&self) -> Vec<f64> {
        match *self {
            ManufacturedTarget::KinkedExp { kink_time, .. } => vec![kink_time],
            _ => Vec::new(),
        }
    }
}

/// Residual forcing that makes the targets exact. Implements [`ExtraSource`].
pub struct ManufacturedForcing<'a> {
    system: &'a SystemConfig,
    green: &'a GreenMatrix,
    force: TruncatedForce<'a>,
    targets: Vec<ManufacturedTarget>,
    kp: KernelParams,
    /// Simpson subpanel width for the residual quadrature.
    fine_dt: f64,
    /// Memo keyed by (site, time bits): the solver evaluates each step time
    /// once per corrector iteration.
    cache: RefCell<alloc::collections::BTreeMap<(usize, u64), Complex>>,
}

impl<'a> ManufacturedForcing<'a> {
    pub fn new(
        system: &'a SystemConfig,
        green: &'a GreenMatrix,
        spec: &'a PotentialSpec,
        truncation_enabled: bool,
        targets: Vec<ManufacturedTarget>,
    ) -> Result<Self> {
        if targets.len() != system.n() {
            return Err(Error::InvalidConfig(alloc::format!(
                "need {} targets, got {}",
                system.n(),
                targets.len()
            )));
        }
        let radius = if truncation_enabled { spec.truncation_radius } else { None };
        if truncation_enabled && radius.is_none() {
            return Err(Error::InvalidConfig(
                "truncation enabled but no radius resolved".into(),
            ));
        }
        Ok(Self {
            system,
            green,
            force: TruncatedForce::new(&spec.family, radius),
            targets,
            kp: KernelParams::new(system.mass())?,
            fine_dt: 5e-4,
            cache: RefCell::new(alloc::collections::BTreeMap::new()),
        })
    }

    /// Initial data consistent with the targets (no regular field part).
    pub fn initial_data(&self) -> InitialData {
        InitialData {
            zeta0: self.targets.iter().map(|t| t.value(0.0)).collect(),
            zeta0_dot: self.targets.iter().map(|t| t.derivative(0.0)).collect(),
            psi0_reg: Vec::new(),
            pi0_reg: Vec::new(),
        }
    }

    /// Breakpoints the solver should honor (target kinks).
    pub fn kink_times(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for trg in &self.targets {
            out.extend(trg.kink_times());
        }
        out.sort_by(f64::total_cmp);
        out.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
        out
    }

    pub fn target_value(&self, site: usize, t: f64) -> Complex {
        self.targets[site].value(t)
    }

    /// Continuum right-hand side evaluated on the exact targets with
    /// composite Simpson quadrature (panels split at kinks and cones).
    fn continuum_rhs(&self, j: usize, t: f64) -> Complex {
        let n = self.system.n();
        let m = self.system.mass();
        let zeta_now: Vec<Complex> = self.targets.iter().map(|trg| trg.value(t)).collect();
        let force = self.force.eval(&zeta_now);

        // lambda_j from the closed forms with Simpson moments.
        let z0: Vec<Complex> = self.targets.iter().map(|trg| trg.value(0.0)).collect();
        let zd: Vec<Complex> = self.targets.iter().map(|trg| trg.derivative(0.0)).collect();
        let mut lam = {
            let lin = z0[j] + t * zd[j];
            let (m0, m1) = self.simpson_moments(t, 0.0);
            -(m * lin - zd[j]) / (4.0 * PI) + m / (4.0 * PI) * (lin * m0 - zd[j] * m1)
        };
        for k in 0..n {
            if k == j {
                continue;
            }
            let d = self.green.distance(j, k);
            let lin = z0[k] + t * zd[k];
            let mut cross = lin * self.green.entry(j, k);
            if t >= d {
                cross -= (z0[k] + (t - d) * zd[k]) / (4.0 * PI * d);
            }
            let (m0, m1) = self.simpson_moments(t, d);
            cross += m / (4.0 * PI) * (lin * m0 - zd[k] * m1);
            lam += cross;
        }

        let mut v = m * zeta_now[j] + 4.0 * PI * lam - 4.0 * PI * force[j];
        for k in 0..n {
            let d = self.green.distance(j, k);
            if k != j && t >= d {
                v += self.targets[k].value(t - d) / d;
            }
            v -= m * self.tail_fine(t, d, k);
        }
        v
    }

    /// `(int_d^t K du, int_d^t u K du)` by composite Simpson.
    fn simpson_moments(&self, t: f64, d: f64) -> (f64, f64) {
        if t <= d {
            return (0.0, 0.0);
        }
        let mut m0 = 0.0;
        let mut m1 = 0.0;
        simpson(d, t, self.fine_dt, |u| {
            let k = tail_kernel(u, d, self.kp);
            (k, u * k)
        }, &mut m0, &mut m1);
        (m0, m1)
    }

    /// `int_0^{t-d} K(t - s, d) target_k(s) ds` by composite Simpson with
    /// panels split at target kinks.
    fn tail_fine(&self, t: f64, d: f64, k: usize) -> Complex {
        let s_star = t - d;
        if s_star <= 0.0 {
            return Complex::new(0.0, 0.0);
        }
        let mut cuts = vec![0.0, s_star];
        for kink in self.targets[k].kink_times() {
            if kink > 0.0 && kink < s_star {
                cuts.push(kink);
            }
        }
        cuts.sort_by(f64::total_cmp);
        let mut re = 0.0;
        let mut im = 0.0;
        for w in cuts.windows(2) {
            simpson(w[0], w[1], self.fine_dt, |s| {
                let kv = tail_kernel(t - s, d, self.kp);
                let z = self.targets[k].value(s);
                (kv * z.re, kv * z.im)
            }, &mut re, &mut im);
        }
        Complex::new(re, im)
    }
}

/// Composite Simpson accumulation of a pair of integrands over `[a, b]`.
fn simpson(a: f64, b: f64, max_h: f64, f: impl Fn(f64) -> (f64, f64), out0: &mut f64, out1: &mut f64) {
    if b <= a {
        return;
    }
    let len = b - a;
    let mut sub = libm::ceil(len / max_h) as usize;
    if sub % 2 == 1 {
        sub += 1;
    }
    sub = sub.max(2);
    let h = len / sub as f64;
    let mut acc0 = 0.0;
    let mut acc1 = 0.0;
    for i in 0..=sub {
        let x = if i == sub { b } else { a + h * i as f64 };
        let w = if i == 0 || i == sub {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let (v0, v1) = f(x);
        acc0 += w * v0;
        acc1 += w * v1;
    }
    *out0 += acc0 * h / 3.0;
    *out1 += acc1 * h / 3.0;
}

impl ExtraSource for ManufacturedForcing<'_> {
    fn eval(&self, site: usize, t: f64) -> Complex {
        let key = (site, t.to_bits());
        if let Some(v) = self.cache.borrow().get(&key) {
            return *v;
        }
        let v = self.targets[site].derivative(t) - self.continuum_rhs(site, t);
        self.cache.borrow_mut().insert(key, v);
        v
    }
}

/// Builds the forcing for a target set; convenience matching the operation
/// layout.
pub fn manufactured_forcing<'a>(
    system: &'a SystemConfig,
    green: &'a GreenMatrix,
    spec: &'a PotentialSpec,
    truncation_enabled: bool,
    targets: Vec<ManufacturedTarget>,
) -> Result<ManufacturedForcing<'a>> {
    ManufacturedForcing::new(system, green, spec, truncation_enabled, targets)
}
