//! Method-of-steps solver for the nonlinear delay Volterra
//! integro-differential system governing the charges.
//!
//! Componentwise the system reads (after clearing the `1/(4 pi)` factor)
//!
//! `zdot_j = m z_j(t) + sum_{k != j} theta(t - d_jk) z_k(t - d_jk) / d_jk
//!           + 4 pi lambda_j(t)
//!           - m sum_k int_0^t theta(t - s - d_jk) K(t - s, d_jk) z_k(s) ds
//!           - 4 pi F~_j(z(t))`
//!
//! with `d_jj = 0`, `K` the light-cone tail kernel and `F~` the (optionally)
//! truncated force. Each step uses an implicit trapezoid rule with a
//! fixed-point corrector; delayed arguments always reference already-committed
//! history except inside the current panel, which the corrector resolves.
//! Step endpoints are inserted at every breakpoint: the pair distances, their
//! propagated delay sums up to a generation cap, and any declared forcing
//! kinks.

use alloc::{format, string::String, vec, vec::Vec};
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::model::{GreenMatrix, InitialData, Potential, PotentialSpec, SystemConfig};
use crate::sources::{SourceSet, NODE_MERGE_TOL};
use crate::special::{tail_kernel, KernelParams};
use crate::Complex;

/// Additional additive source on the right-hand side (used by manufactured
/// solutions).
pub trait ExtraSource {
    fn eval(&self, site: usize, t: f64) -> Complex;
}

/// Step-size and corrector controls.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverParams {
    /// Base step of the uniform grid (breakpoints are inserted on top).
    pub dt: f64,
    /// Relative fixed-point tolerance of the corrector.
    pub fixed_point_tol: f64,
    pub max_fixed_point_iters: u32,
    /// How many generations of delay sums enter the breakpoint set.
    pub breakpoint_generations: u32,
    pub truncation_enabled: bool,
    /// Maximum number of step halvings before giving up.
    pub max_halvings: u32,
    /// Slack fraction for the a-priori bound warning.
    pub bound_slack: f64,
    /// Declared kink times of external forcings; propagated like distances.
    pub extra_breakpoints: Vec<f64>,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            fixed_point_tol: 1e-12,
            max_fixed_point_iters: 50,
            breakpoint_generations: 3,
            truncation_enabled: true,
            max_halvings: 10,
            bound_slack: 1e-3,
            extra_breakpoints: Vec::new(),
        }
    }
}

/// Force evaluator with the Lipschitz truncation safeguard.
///
/// Inside the closed ball of radius `Lambda` (norm on C^n) this is exactly the
/// potential gradient, bitwise. Outside, the argument is radially retracted
/// onto the ball, with the seam smoothed over `[Lambda, 1.05 Lambda]` by the
/// cubic blend `R(r) = Lambda + u (1 - u/w)^2`, `u = r - Lambda`,
/// `w = 0.05 Lambda`, which is C^1 and keeps `R <= 1.0075 Lambda`.
pub struct TruncatedForce<'a> {
    potential: &'a dyn Potential,
    radius: Option<f64>,
}

impl<'a> TruncatedForce<'a> {
    pub fn new(potential: &'a dyn Potential, radius: Option<f64>) -> Self {
        Self { potential, radius }
    }

    pub fn radius(&self) -> Option<f64> {
        self.radius
    }

    pub fn eval_into(&self, zeta: &[Complex], scratch: &mut Vec<Complex>, out: &mut [Complex]) {
        match self.radius {
            None => self.potential.force_into(zeta, out),
            Some(lambda) => {
                let r2: f64 = zeta.iter().map(|z| z.norm_sqr()).sum();
                let r = libm::sqrt(r2);
                if r <= lambda {
                    self.potential.force_into(zeta, out);
                } else {
                    let scale = retracted_radius(r, lambda) / r;
                    scratch.clear();
                    scratch.extend(zeta.iter().map(|z| z * scale));
                    self.potential.force_into(scratch, out);
                }
            }
        }
    }

    pub fn eval(&self, zeta: &[Complex]) -> Vec<Complex> {
        let mut scratch = Vec::new();
        let mut out = vec![Complex::new(0.0, 0.0); zeta.len()];
        self.eval_into(zeta, &mut scratch, &mut out);
        out
    }
}

/// Radial retraction with the C^1 cubic seam.
fn retracted_radius(r: f64, lambda: f64) -> f64 {
    let w = 0.05 * lambda;
    if r <= lambda {
        r
    } else if r >= lambda + w {
        lambda
    } else {
        let u = r - lambda;
        let q = 1.0 - u / w;
        lambda + u * q * q
    }
}

/// Builds the truncated force for a potential specification.
pub fn truncate_nonlinearity<'a>(spec: &'a PotentialSpec, radius: f64) -> TruncatedForce<'a> {
    TruncatedForce::new(&spec.family, Some(radius))
}

/// Lipschitz constant of the truncated power-law / polynomial forces on the
/// retracted range (`|zeta| <= 1.0075 Lambda`); the retraction itself is
/// 1-Lipschitz.
pub fn lipschitz_bound(spec: &PotentialSpec, radius: f64) -> f64 {
    use crate::model::PotentialFamily::*;
    let reach = 1.0075 * radius;
    let r2 = reach * reach;
    match &spec.family {
        PowerLaw(sites) => sites
            .iter()
            .map(|s| s.gamma.abs() * (2.0 * s.sigma + 1.0) * libm::pow(r2, s.sigma))
            .fold(0.0, f64::max),
        Polynomial(sites) => sites
            .iter()
            .map(|coeffs| {
                let mut l = 0.0;
                let mut pw = 1.0;
                for (p, &c) in coeffs.iter().enumerate() {
                    let pf = (p + 1) as f64;
                    l += c.abs() * pf * (2.0 * pf - 1.0) * pw;
                    pw *= r2;
                }
                l
            })
            .fold(0.0, f64::max),
    }
}

/// Dense-output record of the solved charges.
#[derive(Debug, Clone)]
pub struct ChargeHistory {
    n: usize,
    times: Vec<f64>,
    values: Vec<Complex>,
    derivs: Vec<Complex>,
    breakpoints: Vec<f64>,
    horizon: f64,
    max_abs: f64,
    truncation_radius: Option<f64>,
    bound_warning: bool,
    halvings: u32,
    max_corrector_iters: u32,
}

impl ChargeHistory {
    fn new(n: usize, horizon: f64, breakpoints: Vec<f64>, truncation_radius: Option<f64>) -> Self {
        Self {
            n,
            times: Vec::new(),
            values: Vec::new(),
            derivs: Vec::new(),
            breakpoints,
            horizon,
            max_abs: 0.0,
            truncation_radius,
            bound_warning: false,
            halvings: 0,
            max_corrector_iters: 0,
        }
    }

    /// Assembles a history from raw node arrays (reference solvers, tests).
    /// `values` and `derivs` are node-major with `n` entries per node.
    pub fn from_parts(
        n: usize,
        times: Vec<f64>,
        values: Vec<Complex>,
        derivs: Vec<Complex>,
        horizon: f64,
    ) -> Self {
        debug_assert_eq!(times.len() * n, values.len());
        debug_assert_eq!(values.len(), derivs.len());
        let mut max_abs = 0.0f64;
        for node in 0..times.len() {
            let norm2: f64 = values[node * n..(node + 1) * n]
                .iter()
                .map(|z| z.norm_sqr())
                .sum();
            max_abs = max_abs.max(libm::sqrt(norm2));
        }
        Self {
            n,
            times,
            values,
            derivs,
            breakpoints: Vec::new(),
            horizon,
            max_abs,
            truncation_radius: None,
            bound_warning: false,
            halvings: 0,
            max_corrector_iters: 0,
        }
    }

    fn push(&mut self, t: f64, zeta: &[Complex], zdot: &[Complex]) {
        debug_assert_eq!(zeta.len(), self.n);
        self.times.push(t);
        self.values.extend_from_slice(zeta);
        self.derivs.extend_from_slice(zdot);
        let norm = libm::sqrt(zeta.iter().map(|z| z.norm_sqr()).sum());
        if norm > self.max_abs {
            self.max_abs = norm;
        }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.times.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    #[inline]
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    #[inline]
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    #[inline]
    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    #[inline]
    pub fn max_abs(&self) -> f64 {
        self.max_abs
    }

    #[inline]
    pub fn truncation_radius(&self) -> Option<f64> {
        self.truncation_radius
    }

    #[inline]
    pub fn bound_warning(&self) -> bool {
        self.bound_warning
    }

    #[inline]
    pub fn halvings(&self) -> u32 {
        self.halvings
    }

    #[inline]
    pub fn max_corrector_iters(&self) -> u32 {
        self.max_corrector_iters
    }

    #[inline]
    pub fn last_time(&self) -> f64 {
        *self.times.last().expect("history has at least the initial node")
    }

    #[inline]
    pub fn value(&self, node: usize, site: usize) -> Complex {
        self.values[node * self.n + site]
    }

    #[inline]
    pub fn deriv(&self, node: usize, site: usize) -> Complex {
        self.derivs[node * self.n + site]
    }

    pub fn values_at_node(&self, node: usize) -> &[Complex] {
        &self.values[node * self.n..(node + 1) * self.n]
    }

    pub fn derivs_at_node(&self, node: usize) -> &[Complex] {
        &self.derivs[node * self.n..(node + 1) * self.n]
    }

    /// Locates `t` on the grid: `Ok(node)` for an exact node, `Err(panel)` for
    /// an interior time inside panel `[times[panel], times[panel + 1]]`.
    fn locate(&self, t: f64) -> Result<core::result::Result<usize, usize>> {
        let t = if t == 0.0 { 0.0 } else { t };
        if !(0.0..=self.horizon + NODE_MERGE_TOL).contains(&t) || t > self.last_time() + NODE_MERGE_TOL {
            return Err(Error::OutOfRange {
                t,
                horizon: self.last_time(),
            });
        }
        match self.times.binary_search_by(|x| x.total_cmp(&t)) {
            Ok(i) => Ok(Ok(i)),
            Err(i) => {
                if i == self.times.len() {
                    Ok(Ok(i - 1))
                } else {
                    Ok(Err(i - 1))
                }
            }
        }
    }

    /// Cubic Hermite dense output: `(zeta(t), zdot(t))` into the buffers.
    /// Exact (bitwise) at grid nodes.
    pub fn eval_into(&self, t: f64, zeta: &mut [Complex], zdot: &mut [Complex]) -> Result<()> {
        debug_assert_eq!(zeta.len(), self.n);
        match self.locate(t)? {
            Ok(node) => {
                zeta.copy_from_slice(self.values_at_node(node));
                zdot.copy_from_slice(self.derivs_at_node(node));
            }
            Err(panel) => {
                let ta = self.times[panel];
                let tb = self.times[panel + 1];
                let h = tb - ta;
                let tau = (t - ta) / h;
                let (h00, h10, h01, h11) = hermite_basis(tau);
                let (d00, d10, d01, d11) = hermite_basis_deriv(tau);
                for j in 0..self.n {
                    let va = self.value(panel, j);
                    let vb = self.value(panel + 1, j);
                    let da = self.deriv(panel, j);
                    let db = self.deriv(panel + 1, j);
                    zeta[j] = h00 * va + h01 * vb + h * (h10 * da + h11 * db);
                    zdot[j] = (d00 * va + d01 * vb) / h + d10 * da + d11 * db;
                }
            }
        }
        Ok(())
    }

    /// Allocating convenience wrapper around [`Self::eval_into`].
    pub fn eval(&self, t: f64) -> Result<(Vec<Complex>, Vec<Complex>)> {
        let mut z = vec![Complex::new(0.0, 0.0); self.n];
        let mut zd = vec![Complex::new(0.0, 0.0); self.n];
        self.eval_into(t, &mut z, &mut zd)?;
        Ok((z, zd))
    }

    /// Single-component dense value.
    pub fn eval_component(&self, site: usize, t: f64) -> Result<Complex> {
        match self.locate(t)? {
            Ok(node) => Ok(self.value(node, site)),
            Err(panel) => {
                let ta = self.times[panel];
                let tb = self.times[panel + 1];
                let h = tb - ta;
                let tau = (t - ta) / h;
                let (h00, h10, h01, h11) = hermite_basis(tau);
                let va = self.value(panel, site);
                let vb = self.value(panel + 1, site);
                let da = self.deriv(panel, site);
                let db = self.deriv(panel + 1, site);
                Ok(h00 * va + h01 * vb + h * (h10 * da + h11 * db))
            }
        }
    }

    /// Single-component dense derivative (slope of the interpolant).
    pub fn eval_component_deriv(&self, site: usize, t: f64) -> Result<Complex> {
        match self.locate(t)? {
            Ok(node) => Ok(self.deriv(node, site)),
            Err(panel) => {
                let ta = self.times[panel];
                let tb = self.times[panel + 1];
                let h = tb - ta;
                let tau = (t - ta) / h;
                let (d00, d10, d01, d11) = hermite_basis_deriv(tau);
                let va = self.value(panel, site);
                let vb = self.value(panel + 1, site);
                let da = self.deriv(panel, site);
                let db = self.deriv(panel + 1, site);
                Ok((d00 * va + d01 * vb) / h + d10 * da + d11 * db)
            }
        }
    }

    /// Second derivative of the interpolant (O(dt^2) estimate of the true
    /// curvature; used only by near-cone diagnostics).
    pub fn eval_component_second(&self, site: usize, t: f64) -> Result<Complex> {
        if self.times.len() < 2 {
            // A single-node history carries no curvature information.
            self.locate(t)?;
            return Ok(Complex::new(0.0, 0.0));
        }
        let panel = match self.locate(t)? {
            Ok(node) => {
                if node + 1 < self.times.len() {
                    node
                } else {
                    node - 1
                }
            }
            Err(panel) => panel,
        };
        let ta = self.times[panel];
        let tb = self.times[panel + 1];
        let h = tb - ta;
        let tau = ((t - ta) / h).clamp(0.0, 1.0);
        let va = self.value(panel, site);
        let vb = self.value(panel + 1, site);
        let da = self.deriv(panel, site);
        let db = self.deriv(panel + 1, site);
        Ok((12.0 * tau - 6.0) * (va - vb) / (h * h)
            + ((6.0 * tau - 4.0) * da + (6.0 * tau - 2.0) * db) / h)
    }
}

#[inline]
fn hermite_basis(tau: f64) -> (f64, f64, f64, f64) {
    let t2 = tau * tau;
    let t3 = t2 * tau;
    (
        2.0 * t3 - 3.0 * t2 + 1.0,
        t3 - 2.0 * t2 + tau,
        -2.0 * t3 + 3.0 * t2,
        t3 - t2,
    )
}

#[inline]
fn hermite_basis_deriv(tau: f64) -> (f64, f64, f64, f64) {
    let t2 = tau * tau;
    (
        6.0 * t2 - 6.0 * tau,
        3.0 * t2 - 4.0 * tau + 1.0,
        -6.0 * t2 + 6.0 * tau,
        3.0 * t2 - 2.0 * tau,
    )
}

/// Committed history plus (optionally) the trial node of the step in
/// progress. Inside the trial panel the interpolation is linear; the
/// corrector makes the coupling implicit.
#[derive(Clone, Copy)]
pub struct HistoryView<'a> {
    hist: &'a ChargeHistory,
    trial: Option<(f64, &'a [Complex])>,
}

impl<'a> HistoryView<'a> {
    pub fn committed(hist: &'a ChargeHistory) -> Self {
        Self { hist, trial: None }
    }

    pub fn with_trial(hist: &'a ChargeHistory, t: f64, zeta: &'a [Complex]) -> Self {
        Self {
            hist,
            trial: Some((t, zeta)),
        }
    }

    pub fn max_time(&self) -> f64 {
        match self.trial {
            Some((t, _)) => t,
            None => self.hist.last_time(),
        }
    }

    pub fn history(&self) -> &ChargeHistory {
        self.hist
    }

    /// Dense value of one component, covering the trial panel if present.
    pub fn eval_component(&self, site: usize, s: f64) -> Result<Complex> {
        let last = self.hist.last_time();
        if s <= last + NODE_MERGE_TOL {
            let s = if s > last { last } else { s };
            return self.hist.eval_component(site, s);
        }
        match self.trial {
            Some((tt, zt)) if s <= tt + NODE_MERGE_TOL => {
                let frac = ((s - last) / (tt - last)).clamp(0.0, 1.0);
                let base = self.hist.value(self.hist.len() - 1, site);
                Ok(base + frac * (zt[site] - base))
            }
            _ => Err(Error::HistoryGap { t: s }),
        }
    }
}

/// Tail integral over the committed part of the history:
/// `int_0^{min(t - d, committed)} K(t - s, d) zeta_site(s) ds`
/// by the trapezoid rule on the history grid, with the final partial panel
/// ending exactly on the cone (`K = m/2` there). `refine > 1` subdivides each
/// panel and samples the dense interpolant, for diagnostics that need a
/// quadrature finer than the solver's own.
pub fn tail_committed(
    t: f64,
    d: f64,
    site: usize,
    hist: &ChargeHistory,
    kp: KernelParams,
    refine: u32,
) -> Complex {
    let s_star = t - d;
    if s_star <= 0.0 {
        return Complex::new(0.0, 0.0);
    }
    let s_max = if s_star < hist.last_time() { s_star } else { hist.last_time() };
    let times = hist.times();
    let mut acc = Complex::new(0.0, 0.0);
    let mut l = 0usize;
    while l + 1 < times.len() && times[l + 1] <= s_max + NODE_MERGE_TOL {
        let a = times[l];
        let b = times[l + 1];
        if refine <= 1 {
            let ka = tail_kernel(t - a, d, kp);
            let kb = tail_kernel(t - b, d, kp);
            acc += 0.5 * (b - a) * (ka * hist.value(l, site) + kb * hist.value(l + 1, site));
        } else {
            acc += refined_panel(t, d, site, hist, kp, a, b, refine);
        }
        l += 1;
    }
    let a = times[l];
    if s_max > a + NODE_MERGE_TOL {
        if refine <= 1 {
            let ka = tail_kernel(t - a, d, kp);
            let kb = tail_kernel(t - s_max, d, kp);
            let zb = hist.eval_component(site, s_max).expect("inside committed range");
            acc += 0.5 * (s_max - a) * (ka * hist.value(l, site) + kb * zb);
        } else {
            acc += refined_panel(t, d, site, hist, kp, a, s_max, refine);
        }
    }
    acc
}

fn refined_panel(
    t: f64,
    d: f64,
    site: usize,
    hist: &ChargeHistory,
    kp: KernelParams,
    a: f64,
    b: f64,
    refine: u32,
) -> Complex {
    let mut acc = Complex::new(0.0, 0.0);
    let h = (b - a) / refine as f64;
    let mut prev_s = a;
    let mut prev = tail_kernel(t - a, d, kp) * hist.eval_component(site, a).expect("in range");
    for i in 1..=refine {
        let s = if i == refine { b } else { a + h * i as f64 };
        let cur = tail_kernel(t - s, d, kp) * hist.eval_component(site, s).expect("in range");
        acc += 0.5 * (s - prev_s) * (prev + cur);
        prev = cur;
        prev_s = s;
    }
    acc
}

/// Remainder of the tail inside the trial panel `(committed, t - d]`.
pub fn tail_trial(
    t: f64,
    d: f64,
    site: usize,
    hv: &HistoryView<'_>,
    kp: KernelParams,
) -> Result<Complex> {
    let s_star = t - d;
    let last = hv.hist.last_time();
    if s_star <= last + NODE_MERGE_TOL {
        return Ok(Complex::new(0.0, 0.0));
    }
    let za = hv.hist.value(hv.hist.len() - 1, site);
    let zb = hv.eval_component(site, s_star)?;
    let ka = tail_kernel(t - last, d, kp);
    let kb = tail_kernel(d, d, kp);
    Ok(0.5 * (s_star - last) * (ka * za + kb * zb))
}

/// Full tail integral seen through a history view.
pub fn volterra_tail(
    t: f64,
    d: f64,
    site: usize,
    hv: &HistoryView<'_>,
    kp: KernelParams,
) -> Result<Complex> {
    Ok(tail_committed(t, d, site, hv.hist, kp, 1) + tail_trial(t, d, site, hv, kp)?)
}

/// The charge equation bundle: geometry, force and optional extra forcing.
pub struct ChargeEquation<'a> {
    system: &'a SystemConfig,
    green: &'a GreenMatrix,
    force: TruncatedForce<'a>,
    extra: Option<&'a dyn ExtraSource>,
    kp: KernelParams,
}

impl<'a> ChargeEquation<'a> {
    pub fn new(
        system: &'a SystemConfig,
        green: &'a GreenMatrix,
        spec: &'a PotentialSpec,
        truncation_enabled: bool,
    ) -> Result<Self> {
        if spec.n() != system.n() {
            return Err(Error::InvalidConfig(format!(
                "potential defined for {} sites, system has {}",
                spec.n(),
                system.n()
            )));
        }
        let radius = if truncation_enabled {
            match spec.truncation_radius {
                Some(r) if r > 0.0 => Some(r),
                Some(r) => {
                    return Err(Error::InvalidConfig(format!(
                        "truncation radius must be positive, got {r}"
                    )))
                }
                None => {
                    return Err(Error::InvalidConfig(String::from(
                        "truncation enabled but no truncation radius resolved on the potential",
                    )))
                }
            }
        } else {
            None
        };
        Ok(Self {
            system,
            green,
            force: TruncatedForce::new(&spec.family, radius),
            extra: None,
            kp: KernelParams::new(system.mass())?,
        })
    }

    pub fn with_extra_source(mut self, extra: &'a dyn ExtraSource) -> Self {
        self.extra = Some(extra);
        self
    }

    pub fn force(&self) -> &TruncatedForce<'a> {
        &self.force
    }

    /// Right-hand side of the charge system at time `t` with trial value
    /// `zeta_now`; the view must cover `[0, t)`.
    pub fn rhs(
        &self,
        t: f64,
        zeta_now: &[Complex],
        hv: &HistoryView<'_>,
        sources: &SourceSet,
        out: &mut [Complex],
    ) -> Result<()> {
        let n = self.system.n();
        if t > hv.max_time() + 1e-9 {
            return Err(Error::HistoryGap { t });
        }
        let mut lambda = vec![Complex::new(0.0, 0.0); n];
        sources.lambda_all(t, &mut lambda)?;
        let mut tails = vec![Complex::new(0.0, 0.0); n * n];
        for j in 0..n {
            for k in 0..n {
                let d = self.green.distance(j, k);
                tails[j * n + k] = volterra_tail(t, d, k, hv, self.kp)?;
            }
        }
        self.assemble(t, zeta_now, hv, &lambda, &tails, out)
    }

    /// Shared assembly used by both the public `rhs` and the solver's cached
    /// step path; `tails[j*n+k]` holds the full tail integral for pair (j,k).
    fn assemble(
        &self,
        t: f64,
        zeta_now: &[Complex],
        hv: &HistoryView<'_>,
        lambda: &[Complex],
        tails: &[Complex],
        out: &mut [Complex],
    ) -> Result<()> {
        let n = self.system.n();
        let m = self.system.mass();
        let mut scratch = Vec::new();
        self.force.eval_into(zeta_now, &mut scratch, out);
        for j in 0..n {
            let mut v = m * zeta_now[j] - 4.0 * PI * out[j] + 4.0 * PI * lambda[j];
            for k in 0..n {
                if k != j {
                    let d = self.green.distance(j, k);
                    if t >= d {
                        v += hv.eval_component(k, t - d)? / d;
                    }
                }
                v -= m * tails[j * n + k];
            }
            if let Some(extra) = self.extra {
                v += extra.eval(j, t);
            }
            out[j] = v;
        }
        Ok(())
    }

    /// Integrates the system over `[0, horizon]`.
    pub fn solve(
        &self,
        data: &InitialData,
        sources: &mut SourceSet,
        params: &SolverParams,
        horizon: f64,
    ) -> Result<ChargeHistory> {
        let n = self.system.n();
        data.validate(n)?;
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "horizon must be positive and finite, got {horizon}"
            )));
        }
        if !(params.dt > 0.0) || !(params.fixed_point_tol > 0.0) {
            return Err(Error::InvalidConfig(String::from(
                "solver step and tolerance must be positive",
            )));
        }
        if sources.last_node() != 0.0 {
            return Err(Error::InvalidConfig(String::from(
                "sources already advanced; build a fresh SourceSet per run",
            )));
        }

        let breakpoints = propagate_breakpoints(
            &self.green.pair_distances(),
            &params.extra_breakpoints,
            horizon,
            params.breakpoint_generations,
        );
        let mut plan = build_grid(params.dt, horizon, &breakpoints);
        let mut history = ChargeHistory::new(n, horizon, breakpoints, self.force.radius());

        // Initial node: the equation defines zdot(0) from the data.
        let mut zeta = data.zeta0.clone();
        let mut zdot = vec![Complex::new(0.0, 0.0); n];
        history.push(0.0, &zeta, &zdot);
        {
            let hv = HistoryView::committed(&history);
            let mut out = vec![Complex::new(0.0, 0.0); n];
            self.rhs(0.0, &zeta, &hv, sources, &mut out)?;
            for j in 0..n {
                history.derivs[j] = out[j];
            }
            zdot.copy_from_slice(&history.derivs[0..n]);
        }

        let slack_radius = self
            .force
            .radius()
            .map(|r| r * (1.0 + params.bound_slack));

        let mut lambda = vec![Complex::new(0.0, 0.0); n];
        let mut tails = vec![Complex::new(0.0, 0.0); n * n];
        let mut trial = vec![Complex::new(0.0, 0.0); n];
        let mut next = vec![Complex::new(0.0, 0.0); n];
        let mut f_trial = vec![Complex::new(0.0, 0.0); n];

        let mut idx = 1usize;
        let mut halvings_here = 0u32;
        while idx < plan.len() {
            let t0 = history.last_time();
            let t1 = plan[idx];
            let h = t1 - t0;

            // The trapezoid weight at the panel end must be the LEFT limit of
            // the right-hand side: at a breakpoint the forcing (or a switch
            // pair) may jump, and using the right limit would bias the whole
            // completing panel by O(width * jump). A sub-merge-tolerance
            // nudge selects the branch while perturbing smooth terms by
            // O(1e-10).
            let at_breakpoint = history
                .breakpoints
                .iter()
                .any(|&b| (b - t1).abs() <= NODE_MERGE_TOL * f64::max(1.0, horizon));
            let t_eval = if at_breakpoint {
                t1 - 1e-10 * f64::max(1.0, t1)
            } else {
                t1
            };

            // Step-invariant data: sources at the target time and the
            // committed part of every tail integral.
            sources.lambda_all(t_eval, &mut lambda)?;
            for j in 0..n {
                for k in 0..n {
                    let d = self.green.distance(j, k);
                    tails[j * n + k] = tail_committed(t_eval, d, k, &history, self.kp, 1);
                }
            }

            // Predictor: explicit Euler from the stored derivative.
            let base = history.len() - 1;
            for j in 0..n {
                trial[j] = history.value(base, j) + h * history.deriv(base, j);
            }

            let mut converged = false;
            let mut residual = f64::INFINITY;
            let mut iters = 0u32;
            while iters < params.max_fixed_point_iters {
                iters += 1;
                let hv = HistoryView::with_trial(&history, t1, &trial);
                let mut full = tails.clone();
                for j in 0..n {
                    for k in 0..n {
                        let d = self.green.distance(j, k);
                        full[j * n + k] += tail_trial(t_eval, d, k, &hv, self.kp)?;
                    }
                }
                self.assemble(t_eval, &trial, &hv, &lambda, &full, &mut f_trial)?;
                let mut scale: f64 = 1.0;
                let mut delta: f64 = 0.0;
                let mut finite = true;
                for j in 0..n {
                    next[j] = history.value(base, j) + 0.5 * h * (history.deriv(base, j) + f_trial[j]);
                    finite &= next[j].re.is_finite() && next[j].im.is_finite();
                    delta = delta.max((next[j] - trial[j]).norm());
                    scale = scale.max(next[j].norm());
                }
                if !finite {
                    // The map is expanding; f64::max would swallow the NaN
                    // deltas, so bail out to the halving path explicitly.
                    residual = f64::INFINITY;
                    break;
                }
                residual = delta / scale;
                let done = residual <= params.fixed_point_tol;
                trial.copy_from_slice(&next);
                if done {
                    converged = true;
                    break;
                }
            }
            if history.max_corrector_iters < iters {
                history.max_corrector_iters = iters;
            }

            if !converged {
                if halvings_here >= params.max_halvings {
                    return Err(Error::FixedPointDiverged {
                        t: t1,
                        residual,
                        iters,
                        halvings: halvings_here,
                    });
                }
                plan.insert(idx, t0 + 0.5 * h);
                halvings_here += 1;
                history.halvings += 1;
                continue;
            }
            halvings_here = 0;

            // Commit: re-evaluate the derivative at the accepted value so the
            // stored slope is exactly rhs(t1, zeta(t1)) — the right limit at
            // breakpoints, which is what the next panel integrates.
            {
                let hv = HistoryView::with_trial(&history, t1, &trial);
                if at_breakpoint {
                    sources.lambda_all(t1, &mut lambda)?;
                    for j in 0..n {
                        for k in 0..n {
                            let d = self.green.distance(j, k);
                            tails[j * n + k] = tail_committed(t1, d, k, &history, self.kp, 1);
                        }
                    }
                }
                let mut full = tails.clone();
                for j in 0..n {
                    for k in 0..n {
                        let d = self.green.distance(j, k);
                        full[j * n + k] += tail_trial(t1, d, k, &hv, self.kp)?;
                    }
                }
                self.assemble(t1, &trial, &hv, &lambda, &full, &mut zdot)?;
            }
            zeta.copy_from_slice(&trial);
            history.push(t1, &zeta, &zdot);
            sources.commit(t1)?;

            if let Some(bound) = slack_radius {
                if history.max_abs > bound {
                    history.bound_warning = true;
                }
            }
            idx += 1;
        }
        Ok(history)
    }
}

/// Convenience wrapper matching the operation layout: builds the equation
/// from the potential spec and solves.
pub fn solve_charges(
    system: &SystemConfig,
    green: &GreenMatrix,
    data: &InitialData,
    spec: &PotentialSpec,
    sources: &mut SourceSet,
    params: &SolverParams,
    horizon: f64,
) -> Result<ChargeHistory> {
    ChargeEquation::new(system, green, spec, params.truncation_enabled)?
        .solve(data, sources, params, horizon)
}

/// Breakpoint set: pair distances and declared forcing kinks, plus their
/// delay-propagated sums up to the generation cap, clipped to the horizon.
pub fn propagate_breakpoints(
    distances: &[f64],
    extra: &[f64],
    horizon: f64,
    generations: u32,
) -> Vec<f64> {
    let mut all: Vec<f64> = Vec::new();
    let mut frontier: Vec<f64> = Vec::new();
    for &s in distances.iter().chain(extra.iter()) {
        if s > NODE_MERGE_TOL && s <= horizon {
            frontier.push(s);
        }
    }
    let push_unique = |v: &mut Vec<f64>, x: f64| {
        if !v.iter().any(|&y| (y - x).abs() <= NODE_MERGE_TOL) {
            v.push(x);
        }
    };
    for &f in &frontier {
        push_unique(&mut all, f);
    }
    for _ in 1..generations.max(1) {
        let mut next_front = Vec::new();
        for &f in &frontier {
            for &d in distances {
                let s = f + d;
                if s <= horizon {
                    push_unique(&mut next_front, s);
                }
            }
        }
        for &f in &next_front {
            push_unique(&mut all, f);
        }
        if next_front.is_empty() {
            break;
        }
        frontier = next_front;
    }
    all.sort_by(f64::total_cmp);
    all
}

/// Strictly increasing node plan: the uniform base grid united with the
/// breakpoints, always ending exactly at the horizon.
pub fn build_grid(dt: f64, horizon: f64, breakpoints: &[f64]) -> Vec<f64> {
    let tol = NODE_MERGE_TOL * f64::max(1.0, horizon);
    let mut nodes = Vec::new();
    let steps = libm::floor(horizon / dt + 1e-9) as usize;
    for i in 0..=steps {
        let t = i as f64 * dt;
        nodes.push(if t > horizon { horizon } else { t });
    }
    if horizon - nodes.last().copied().unwrap_or(0.0) > tol {
        nodes.push(horizon);
    }
    nodes.extend(breakpoints.iter().copied().filter(|&b| b > tol && b < horizon - tol));
    nodes.sort_by(f64::total_cmp);
    nodes.dedup_by(|a, b| (*a - *b).abs() <= tol);
    *nodes.last_mut().unwrap() = horizon;
    nodes
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_system, PotentialFamily, PowerLawSite};

    fn c(re: f64, im: f64) -> Complex {
        Complex::new(re, im)
    }

    fn synthetic_history(
        n: usize,
        times: &[f64],
        f: impl Fn(f64) -> Vec<Complex>,
        fdot: impl Fn(f64) -> Vec<Complex>,
    ) -> ChargeHistory {
        let mut h = ChargeHistory::new(n, *times.last().unwrap(), vec![], None);
        for &t in times {
            h.push(t, &f(t), &fdot(t));
        }
        h
    }

    fn uniform_times(dt: f64, horizon: f64) -> Vec<f64> {
        build_grid(dt, horizon, &[])
    }

    #[test]
    fn zero_history_zero_sources_give_zero_rhs() {
        let (system, green) = build_system(1.0, &[[0.0; 3]], None).unwrap();
        let spec = PotentialSpec::new(
            PotentialFamily::PowerLaw(vec![PowerLawSite { gamma: 1.0, sigma: 1.0 }]),
            0.5,
            1.0,
        )
        .unwrap();
        let data = InitialData::zeros(1);
        let sources = SourceSet::new(&system, &green, &data, None, 1e-3).unwrap();
        let eq = ChargeEquation::new(&system, &green, &spec, false).unwrap();
        let hist = synthetic_history(
            1,
            &uniform_times(1e-3, 2.0),
            |_| vec![c(0.0, 0.0)],
            |_| vec![c(0.0, 0.0)],
        );
        let hv = HistoryView::committed(&hist);
        let mut out = vec![c(0.0, 0.0)];
        for &t in &[0.0, 0.5, 1.0, 2.0] {
            eq.rhs(t, &[c(0.0, 0.0)], &hv, &sources, &mut out).unwrap();
            assert_eq!(out[0], c(0.0, 0.0), "t={t}");
        }
    }

    /// Static single site: with F(z*) = 0 and constant history, the mass
    /// term, the self-source and the Volterra tail cancel.
    #[test]
    fn static_cancellation_in_rhs() {
        let (system, green) = build_system(1.0, &[[0.0; 3]], None).unwrap();
        // U = -2|z|^2 + |z|^4 has F(z) = (-2 + 2|z|^2) z, zero at |z| = 1.
        let spec = PotentialSpec::new(
            PotentialFamily::Polynomial(vec![vec![-2.0, 1.0]]),
            2.25,
            1.0,
        )
        .unwrap();
        let zstar = c(1.0, 0.0);
        let data = InitialData {
            zeta0: vec![zstar],
            zeta0_dot: vec![c(0.0, 0.0)],
            psi0_reg: vec![],
            pi0_reg: vec![],
        };
        let sources = SourceSet::new(&system, &green, &data, None, 1e-3).unwrap();
        let eq = ChargeEquation::new(&system, &green, &spec, false).unwrap();
        let hist = synthetic_history(
            1,
            &uniform_times(1e-3, 5.0),
            |_| vec![zstar],
            |_| vec![c(0.0, 0.0)],
        );
        let hv = HistoryView::committed(&hist);
        let mut out = vec![c(0.0, 0.0)];
        for &t in &[0.0, 0.5, 1.0, 2.5, 5.0] {
            eq.rhs(t, &[zstar], &hv, &sources, &mut out).unwrap();
            assert!(out[0].norm() <= 1e-8, "t={t}: rhs {}", out[0]);
        }
    }

    #[test]
    fn truncation_identity_inside_the_ball() {
        let family = PotentialFamily::PowerLaw(vec![
            PowerLawSite { gamma: 2.0, sigma: 1.5 },
            PowerLawSite { gamma: 0.7, sigma: 2.0 },
        ]);
        let plain = TruncatedForce::new(&family, None);
        let truncated = TruncatedForce::new(&family, Some(1.0));
        let inside = [c(0.4, -0.3), c(0.2, 0.5)];
        assert_eq!(plain.eval(&inside), truncated.eval(&inside));
        let outside = [c(1.4, -0.3), c(0.2, 0.5)];
        assert_ne!(plain.eval(&outside), truncated.eval(&outside));
    }

    #[test]
    fn truncated_force_is_lipschitz_and_linearly_bounded() {
        let spec = PotentialSpec::new(
            PotentialFamily::PowerLaw(vec![PowerLawSite { gamma: 1.5, sigma: 2.0 }]),
            0.0,
            1.0,
        )
        .unwrap();
        let lambda = 0.8;
        let force = truncate_nonlinearity(&spec, lambda);
        let lip = lipschitz_bound(&spec, lambda);
        assert!(lip > 0.0);
        // Deterministic sample pairs on a phase/radius lattice.
        let mut pts = Vec::new();
        for i in 0..40 {
            let r = 2.0 * lambda * (i as f64 + 0.5) / 40.0;
            let phi = 0.37 * i as f64;
            pts.push([Complex::from_polar(r, phi)]);
        }
        for a in &pts {
            let fa = force.eval(a);
            let ra = a[0].norm();
            if ra >= 2.0 * lambda - 1e-12 {
                assert!(fa[0].norm() <= lip * ra + 1e-12, "|F~| {} at r {}", fa[0].norm(), ra);
            }
            for b in &pts {
                let fb = force.eval(b);
                let dist = (a[0] - b[0]).norm();
                let diff = (fa[0] - fb[0]).norm();
                assert!(diff <= lip * dist + 1e-12, "pair ({}, {})", a[0], b[0]);
            }
        }
    }

    #[test]
    fn retraction_seam_is_smooth() {
        let lambda = 1.0;
        // C^1 across both seam edges: difference quotients match slopes.
        for &r in &[lambda, lambda + 0.05 * lambda] {
            let h = 1e-7;
            let below = (retracted_radius(r, lambda) - retracted_radius(r - h, lambda)) / h;
            let above = (retracted_radius(r + h, lambda) - retracted_radius(r, lambda)) / h;
            assert!((below - above).abs() < 1e-5, "kink at {r}: {below} vs {above}");
        }
        assert!(retracted_radius(5.0, lambda) == lambda);
        // Seam stays within the blend bound.
        let mut max_r = 0.0f64;
        for i in 0..=1000 {
            let r = lambda + 0.05 * lambda * i as f64 / 1000.0;
            max_r = max_r.max(retracted_radius(r, lambda));
        }
        assert!(max_r <= 1.0075 * lambda);
    }

    #[test]
    fn dense_output_is_exact_at_nodes_and_quartic_between() {
        let f = |t: f64| vec![c(t * t * t * t, -2.0 * t * t)];
        let fd = |t: f64| vec![c(4.0 * t * t * t, -4.0 * t)];
        let coarse = synthetic_history(1, &uniform_times(0.1, 1.0), f, fd);
        let fine = synthetic_history(1, &uniform_times(0.05, 1.0), f, fd);
        // Bitwise at nodes.
        let tn = coarse.times()[3];
        let (z, zd) = coarse.eval(tn).unwrap();
        assert_eq!(z[0], f(tn)[0]);
        assert_eq!(zd[0], fd(tn)[0]);
        // Quartic reproduction error scales like dt^4 (ratio ~16).
        let err = |h: &ChargeHistory, dt: f64| -> f64 {
            let mut worst = 0.0f64;
            let mut i = 0;
            while (i as f64 + 0.5) * dt < 1.0 {
                let t = (i as f64 + 0.5) * dt;
                let (z, _) = h.eval(t).unwrap();
                worst = worst.max((z[0] - f(t)[0]).norm());
                i += 1;
            }
            worst
        };
        let e1 = err(&coarse, 0.1);
        let e2 = err(&fine, 0.05);
        let ratio = e1 / e2;
        assert!((10.0..24.0).contains(&ratio), "observed ratio {ratio}");
    }

    #[test]
    fn dense_output_is_continuous_at_interior_nodes() {
        let f = |t: f64| vec![c((2.0 * t).sin(), (0.5 * t).cos())];
        let fd = |t: f64| vec![c(2.0 * (2.0 * t).cos(), -0.5 * (0.5 * t).sin())];
        let h = synthetic_history(1, &uniform_times(0.1, 1.0), f, fd);
        let tb = h.times()[5];
        let eps = 1e-9;
        let (lo, _) = h.eval(tb - eps).unwrap();
        let (hi, _) = h.eval(tb + eps).unwrap();
        let (at, _) = h.eval(tb).unwrap();
        assert!((lo[0] - at[0]).norm() <= 1e-8);
        assert!((hi[0] - at[0]).norm() <= 1e-8);
    }

    #[test]
    fn dense_output_rejects_out_of_range() {
        let h = synthetic_history(1, &uniform_times(0.1, 1.0), |_| vec![c(0.0, 0.0)], |_| {
            vec![c(0.0, 0.0)]
        });
        assert!(matches!(h.eval(-0.1), Err(Error::OutOfRange { .. })));
        assert!(matches!(h.eval(1.1), Err(Error::OutOfRange { .. })));
        assert!(h.eval(0.0).is_ok());
        assert!(h.eval(1.0).is_ok());
    }

    #[test]
    fn breakpoints_propagate_delay_sums() {
        let got = propagate_breakpoints(&[1.0], &[], 10.0, 3);
        assert_eq!(got, vec![1.0, 2.0, 3.0]);
        let got = propagate_breakpoints(&[1.0], &[0.5], 10.0, 3);
        assert_eq!(got, vec![0.5, 1.0, 1.5, 2.0, 2.5, 3.0]);
        let got = propagate_breakpoints(&[], &[0.7], 10.0, 3);
        assert_eq!(got, vec![0.7]);
        let got = propagate_breakpoints(&[4.0], &[], 7.0, 3);
        assert_eq!(got, vec![4.0]);
    }

    #[test]
    fn grid_contains_breakpoints_and_ends_at_horizon() {
        let bp = [0.25, 0.31459];
        let g = build_grid(0.1, 1.0, &bp);
        assert_eq!(g[0], 0.0);
        assert_eq!(*g.last().unwrap(), 1.0);
        for w in g.windows(2) {
            assert!(w[1] > w[0]);
        }
        for &b in &bp {
            assert!(g.iter().any(|&t| (t - b).abs() <= 1e-12), "missing {b}");
        }
    }

    #[test]
    fn zero_scenario_solves_to_exact_zero() {
        let (system, green) = build_system(1.0, &[[0.0; 3]], None).unwrap();
        let spec = PotentialSpec::new(
            PotentialFamily::PowerLaw(vec![PowerLawSite { gamma: 1.0, sigma: 1.0 }]),
            0.5,
            1.0,
        )
        .unwrap();
        let data = InitialData::zeros(1);
        let mut sources = SourceSet::new(&system, &green, &data, None, 1e-3).unwrap();
        let params = SolverParams {
            truncation_enabled: false,
            ..SolverParams::default()
        };
        let hist = solve_charges(&system, &green, &data, &spec, &mut sources, &params, 2.0).unwrap();
        assert!(hist.max_abs() <= 1e-14);
        assert!(!hist.bound_warning());
    }

    #[test]
    fn static_scenario_stays_on_the_equilibrium() {
        let (system, green) = build_system(1.0, &[[0.0; 3]], None).unwrap();
        let spec = PotentialSpec::new(
            PotentialFamily::Polynomial(vec![vec![-2.0, 1.0]]),
            2.25,
            1.0,
        )
        .unwrap();
        let zstar = c(1.0, 0.0);
        let data = InitialData {
            zeta0: vec![zstar],
            zeta0_dot: vec![c(0.0, 0.0)],
            psi0_reg: vec![],
            pi0_reg: vec![],
        };
        let mut sources = SourceSet::new(&system, &green, &data, None, 1e-3).unwrap();
        let params = SolverParams {
            truncation_enabled: false,
            ..SolverParams::default()
        };
        let hist = solve_charges(&system, &green, &data, &spec, &mut sources, &params, 3.0).unwrap();
        let mut worst = 0.0f64;
        for node in 0..hist.len() {
            worst = worst.max((hist.value(node, 0) - zstar).norm());
        }
        assert!(worst <= 1e-8, "drift from equilibrium: {worst}");
    }
}
