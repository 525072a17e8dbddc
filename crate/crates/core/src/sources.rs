//! Driving terms `lambda_j(t)` of the charge equations.
//!
//! `lambda_j` is the value at `y_j` of the free evolution of the full initial
//! data. It splits into the regular free field (spectral quadrature, see
//! [`crate::freefield`]), the diagonal self-term of site `j`, and cross terms
//! from every other site. The singular-part contributions are closed forms in
//! the initial charges: a retarded linear-in-`t` piece, a Yukawa piece and a
//! Bessel tail whose integrand depends only on fixed initial data. The tails
//! therefore reduce to the two kernel moments
//!
//! `M0(t; d) = int_d^t K(u, d) du`,  `M1(t; d) = int_d^t u K(u, d) du`,
//!
//! which are accumulated incrementally on the solver grid: O(1) work per step
//! per distinct pair distance.
//!
//! Note: the cross term `lambda_{j,k}` jumps by `-zeta0_k / (4 pi d)` when the
//! singular front from site `k` sweeps past `y_j` at `t = d`. The assembled
//! right-hand side of the charge system stays continuous because the explicit
//! delay term jumps by the opposite amount; both sides use the convention
//! `theta(0) = 1` so the cancellation is exact at the breakpoint itself.

use alloc::{vec, vec::Vec};

use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::freefield::FreeFieldEvaluator;
use crate::model::{GreenMatrix, InitialData, SystemConfig};
use crate::special::{tail_kernel, KernelParams};
use crate::Complex;

/// Times closer than this (relative to the horizon scale) are one grid node.
pub const NODE_MERGE_TOL: f64 = 1e-12;

/// Trapezoid accumulator for the kernel moments at one pair distance.
///
/// Committed nodes form a strictly increasing grid starting at 0. Evaluation
/// at an arbitrary `t` combines the committed prefix with one partial panel,
/// so reads never mutate state. Panels are split at the cone `u = d`, where
/// the kernel switches on with value `m/2`.
#[derive(Debug, Clone)]
pub struct KernelMoments {
    params: KernelParams,
    d: f64,
    nodes: Vec<f64>,
    m0: Vec<f64>,
    m1: Vec<f64>,
}

impl KernelMoments {
    pub fn new(mass: f64, d: f64) -> Result<Self> {
        let params = KernelParams::new(mass)?;
        Ok(Self {
            params,
            d,
            nodes: vec![0.0],
            m0: vec![0.0],
            m1: vec![0.0],
        })
    }

    pub fn distance(&self) -> f64 {
        self.d
    }

    pub fn last_node(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    /// Appends the committed grid node `t` (must exceed the current last).
    pub fn commit(&mut self, t: f64) {
        let a = self.last_node();
        debug_assert!(t > a);
        let (d0, d1) = self.panel(a, t);
        self.nodes.push(t);
        self.m0.push(self.m0.last().unwrap() + d0);
        self.m1.push(self.m1.last().unwrap() + d1);
    }

    /// `(M0(t), M1(t))` from the committed prefix plus one partial panel.
    ///
    /// For `t` beyond the committed grid by more than `stride`, integrates the
    /// remainder in fresh panels of width `stride` (standalone evaluation).
    pub fn eval_at(&self, t: f64, stride: f64) -> (f64, f64) {
        debug_assert!(t >= 0.0);
        if t <= self.d {
            return (0.0, 0.0);
        }
        // Last committed node <= t.
        let idx = match self.nodes.binary_search_by(|x| x.total_cmp(&t)) {
            Ok(i) => return (self.m0[i], self.m1[i]),
            Err(i) => i - 1,
        };
        let mut a = self.nodes[idx];
        let mut m0 = self.m0[idx];
        let mut m1 = self.m1[idx];
        while t - a > 1.5 * stride {
            let b = a + stride;
            let (d0, d1) = self.panel(a, b);
            m0 += d0;
            m1 += d1;
            a = b;
        }
        let (d0, d1) = self.panel(a, t);
        (m0 + d0, m1 + d1)
    }

    /// Trapezoid over `[a, b]`, clipped and split at the cone `u = d`.
    fn panel(&self, a: f64, b: f64) -> (f64, f64) {
        debug_assert!(b >= a);
        if b <= self.d {
            return (0.0, 0.0);
        }
        let lo = if a < self.d { self.d } else { a };
        let h = b - lo;
        if h <= 0.0 {
            return (0.0, 0.0);
        }
        let klo = tail_kernel(lo, self.d, self.params);
        let khi = tail_kernel(b, self.d, self.params);
        let d0 = 0.5 * h * (klo + khi);
        let d1 = 0.5 * h * (lo * klo + b * khi);
        (d0, d1)
    }
}

/// Assembled sources for one run: regular free field at the sites plus the
/// closed-form singular-part terms.
#[derive(Debug, Clone)]
pub struct SourceSet {
    mass: f64,
    n: usize,
    points: Vec<crate::geom::Vec3>,
    zeta0: Vec<Complex>,
    zeta0_dot: Vec<Complex>,
    green: GreenMatrix,
    free: Option<FreeFieldEvaluator>,
    /// Moment accumulators; index 0 is the diagonal distance 0, the rest match
    /// `distances`.
    moments: Vec<KernelMoments>,
    /// Distinct nonzero pair distances; `pair_moment[j*n+k]` indexes `moments`.
    pair_moment: Vec<usize>,
    /// Committed grid nodes (shared by all accumulators).
    nodes: Vec<f64>,
    /// `lambda_reg` values at committed nodes, flat `n`-major per node.
    lambda_reg_nodes: Vec<Complex>,
    /// Width used for fresh off-grid integration.
    stride: f64,
}

impl SourceSet {
    pub fn new(
        system: &SystemConfig,
        green: &GreenMatrix,
        data: &InitialData,
        free: Option<FreeFieldEvaluator>,
        stride: f64,
    ) -> Result<Self> {
        data.validate(system.n())?;
        if !(stride > 0.0) {
            return Err(Error::InvalidConfig(alloc::format!(
                "source quadrature stride must be positive, got {stride}"
            )));
        }
        let n = system.n();
        let mass = system.mass();
        let mut moments = vec![KernelMoments::new(mass, 0.0)?];
        let mut pair_moment = vec![0usize; n * n];
        for j in 0..n {
            for k in 0..n {
                if j == k {
                    continue;
                }
                let d = green.distance(j, k);
                let idx = match moments.iter().position(|m| (m.distance() - d).abs() <= NODE_MERGE_TOL) {
                    Some(i) => i,
                    None => {
                        moments.push(KernelMoments::new(mass, d)?);
                        moments.len() - 1
                    }
                };
                pair_moment[j * n + k] = idx;
            }
        }
        let mut set = Self {
            mass,
            n,
            points: system.points().to_vec(),
            zeta0: data.zeta0.clone(),
            zeta0_dot: data.zeta0_dot.clone(),
            green: green.clone(),
            free,
            moments,
            pair_moment,
            nodes: vec![0.0],
            lambda_reg_nodes: Vec::new(),
            stride,
        };
        set.push_lambda_reg(0.0)?;
        Ok(set)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn last_node(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    fn push_lambda_reg(&mut self, t: f64) -> Result<()> {
        match &self.free {
            None => {
                for _ in 0..self.n {
                    self.lambda_reg_nodes.push(Complex::new(0.0, 0.0));
                }
            }
            Some(free) => {
                if free.is_trivial() {
                    for _ in 0..self.n {
                        self.lambda_reg_nodes.push(Complex::new(0.0, 0.0));
                    }
                } else {
                    for j in 0..self.n {
                        let v = free.eval(self.point(j), t, false)?.value;
                        self.lambda_reg_nodes.push(v);
                    }
                }
            }
        }
        Ok(())
    }

    fn point(&self, j: usize) -> crate::geom::Vec3 {
        self.points[j]
    }

    /// Advances all accumulators to the committed grid node `t`.
    pub fn commit(&mut self, t: f64) -> Result<()> {
        let last = self.last_node();
        if t <= last {
            return Err(Error::HistoryGap { t });
        }
        for m in self.moments.iter_mut() {
            m.commit(t);
        }
        self.nodes.push(t);
        self.push_lambda_reg(t)
    }

    /// Regular free-field value at site `j`: stored at committed nodes,
    /// evaluated directly otherwise.
    pub fn lambda_reg(&self, j: usize, t: f64) -> Result<Complex> {
        if let Some(i) = self.find_node(t) {
            return Ok(self.lambda_reg_nodes[i * self.n + j]);
        }
        match &self.free {
            None => Ok(Complex::new(0.0, 0.0)),
            Some(free) => Ok(free.eval(self.point(j), t, false)?.value),
        }
    }

    fn find_node(&self, t: f64) -> Option<usize> {
        let i = match self.nodes.binary_search_by(|x| x.total_cmp(&t)) {
            Ok(i) => return Some(i),
            Err(i) => i,
        };
        if i < self.nodes.len() && (self.nodes[i] - t).abs() <= NODE_MERGE_TOL {
            return Some(i);
        }
        if i > 0 && (self.nodes[i - 1] - t).abs() <= NODE_MERGE_TOL {
            return Some(i - 1);
        }
        None
    }

    /// Self-term of site `j` (limit of its own evolved singular data).
    pub fn lambda_diag(&self, j: usize, t: f64) -> Complex {
        let z0 = self.zeta0[j];
        let zd = self.zeta0_dot[j];
        let lin = z0 + t * zd;
        let base = -(self.mass * lin - zd) / (4.0 * PI);
        let (m0, m1) = self.moments[0].eval_at(t, self.stride);
        base + self.mass / (4.0 * PI) * (lin * m0 - zd * m1)
    }

    /// Cross term: field of site `k` evaluated at `y_j` (`j != k`).
    pub fn lambda_cross(&self, j: usize, k: usize, t: f64) -> Result<Complex> {
        if j == k {
            return Err(Error::IndexContract(
                "lambda_cross requires distinct sites; use lambda_diag".into(),
            ));
        }
        let d = self.green.distance(j, k);
        let z0 = self.zeta0[k];
        let zd = self.zeta0_dot[k];
        let lin = z0 + t * zd;
        let mut v = lin * self.green.entry(j, k);
        if t >= d {
            v -= (z0 + (t - d) * zd) / (4.0 * PI * d);
        }
        let idx = self.pair_moment[j * self.n + k];
        let (m0, m1) = self.moments[idx].eval_at(t, self.stride);
        v += self.mass / (4.0 * PI) * (lin * m0 - zd * m1);
        Ok(v)
    }

    /// `lambda_j(t)`: regular part plus diagonal plus all cross terms.
    pub fn lambda_total(&self, j: usize, t: f64) -> Result<Complex> {
        let mut v = self.lambda_reg(j, t)? + self.lambda_diag(j, t);
        for k in 0..self.n {
            if k != j {
                v += self.lambda_cross(j, k, t)?;
            }
        }
        Ok(v)
    }

    /// All `lambda_j(t)` at once.
    pub fn lambda_all(&self, t: f64, out: &mut [Complex]) -> Result<()> {
        debug_assert_eq!(out.len(), self.n);
        for j in 0..self.n {
            out[j] = self.lambda_total(j, t)?;
        }
        Ok(())
    }
}
