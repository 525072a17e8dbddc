//! Physical system definition: interaction points and their Yukawa Green
//! matrix, the nonlinear potential family with Wirtinger gradients, and the
//! coercivity/truncation data.

use alloc::{format, vec, vec::Vec};
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geom::{dist, Vec3};
use crate::Complex;

/// Default minimal admissible distance between interaction points. Green
/// matrix entries blow up like `1/d`, so coincident points are rejected.
pub const DEFAULT_EPS_SEP: f64 = 1e-9;

/// Mass and interaction point positions.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    mass: f64,
    points: Vec<Vec3>,
    eps_sep: f64,
}

impl SystemConfig {
    #[inline]
    pub fn mass(&self) -> f64 {
        self.mass
    }

    #[inline]
    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.points.len()
    }

    #[inline]
    pub fn eps_sep(&self) -> f64 {
        self.eps_sep
    }
}

/// Symmetric matrix `g_jk = exp(-m d_jk) / (4 pi d_jk)` with zero diagonal,
/// plus the cached pairwise distances the solver needs for its breakpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct GreenMatrix {
    n: usize,
    entries: Vec<f64>,
    distances: Vec<f64>,
}

impl GreenMatrix {
    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn entry(&self, j: usize, k: usize) -> f64 {
        self.entries[j * self.n + k]
    }

    #[inline]
    pub fn distance(&self, j: usize, k: usize) -> f64 {
        self.distances[j * self.n + k]
    }

    /// Distinct nonzero pair distances, ascending.
    pub fn pair_distances(&self) -> Vec<f64> {
        let mut ds = Vec::new();
        for j in 0..self.n {
            for k in (j + 1)..self.n {
                let d = self.distance(j, k);
                if !ds.iter().any(|&x: &f64| (x - d).abs() <= 1e-12) {
                    ds.push(d);
                }
            }
        }
        ds.sort_by(f64::total_cmp);
        ds
    }

    /// Quadratic form `G(zeta) = sum_{j,k} g_jk zeta_j conj(zeta_k)`.
    ///
    /// Real for every `zeta` by symmetry of the matrix; the imaginary round-off
    /// residue is discarded.
    pub fn quadratic_form(&self, zeta: &[Complex]) -> f64 {
        debug_assert_eq!(zeta.len(), self.n);
        let mut acc = Complex::new(0.0, 0.0);
        for j in 0..self.n {
            for k in 0..self.n {
                acc += self.entry(j, k) * zeta[j] * zeta[k].conj();
            }
        }
        acc.re
    }
}

/// Yukawa kernel `exp(-m r) / (4 pi r)`.
#[inline]
pub fn green_function(mass: f64, r: f64) -> f64 {
    libm::exp(-mass * r) / (4.0 * PI * r)
}

/// Validates the configuration and builds the Green matrix.
pub fn build_system(mass: f64, points: &[Vec3], eps_sep: Option<f64>) -> Result<(SystemConfig, GreenMatrix)> {
    let eps_sep = eps_sep.unwrap_or(DEFAULT_EPS_SEP);
    if !(mass > 0.0) || !mass.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "field mass must be positive and finite, got {mass}"
        )));
    }
    if points.is_empty() {
        return Err(Error::InvalidConfig("at least one interaction point is required".into()));
    }
    if !(eps_sep > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "eps_sep must be positive, got {eps_sep}"
        )));
    }
    for (i, p) in points.iter().enumerate() {
        if p.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidConfig(format!("point {i} has non-finite coordinates")));
        }
    }
    let n = points.len();
    let mut entries = vec![0.0; n * n];
    let mut distances = vec![0.0; n * n];
    for j in 0..n {
        for k in (j + 1)..n {
            let d = dist(points[j], points[k]);
            if d < eps_sep {
                return Err(Error::InvalidConfig(format!(
                    "points {j} and {k} are {d:.3e} apart, below the separation bound {eps_sep:.3e}"
                )));
            }
            let g = green_function(mass, d);
            entries[j * n + k] = g;
            entries[k * n + j] = g;
            distances[j * n + k] = d;
            distances[k * n + j] = d;
        }
    }
    let config = SystemConfig {
        mass,
        points: points.to_vec(),
        eps_sep,
    };
    let green = GreenMatrix { n, entries, distances };
    Ok((config, green))
}

/// A real-valued potential `U` on C^n together with its Wirtinger gradient
/// `F_j = d U / d conj(zeta_j)`.
pub trait Potential {
    fn n(&self) -> usize;
    fn value(&self, zeta: &[Complex]) -> f64;
    fn force_into(&self, zeta: &[Complex], out: &mut [Complex]);

    fn force(&self, zeta: &[Complex]) -> Vec<Complex> {
        let mut out = vec![Complex::new(0.0, 0.0); self.n()];
        self.force_into(zeta, &mut out);
        out
    }
}

/// Per-site power-law term `gamma/(sigma+1) * |zeta|^(2(sigma+1))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawSite {
    pub gamma: f64,
    pub sigma: f64,
}

/// Built-in potential families. Both have analytic Wirtinger gradients:
/// power law gives `F_j = gamma_j |zeta_j|^(2 sigma_j) zeta_j`, the
/// polynomial-in-`|zeta_j|^2` family gives
/// `F_j = sum_p c_{j,p} p |zeta_j|^(2(p-1)) zeta_j`.
#[derive(Debug, Clone, PartialEq)]
pub enum PotentialFamily {
    PowerLaw(Vec<PowerLawSite>),
    /// `sites[j][p-1]` is the coefficient of `|zeta_j|^(2p)`.
    Polynomial(Vec<Vec<f64>>),
}

impl PotentialFamily {
    fn site_count(&self) -> usize {
        match self {
            PotentialFamily::PowerLaw(s) => s.len(),
            PotentialFamily::Polynomial(s) => s.len(),
        }
    }
}

impl Potential for PotentialFamily {
    fn n(&self) -> usize {
        self.site_count()
    }

    fn value(&self, zeta: &[Complex]) -> f64 {
        match self {
            PotentialFamily::PowerLaw(sites) => {
                let mut u = 0.0;
                for (site, z) in sites.iter().zip(zeta) {
                    let r2 = z.norm_sqr();
                    u += site.gamma / (site.sigma + 1.0) * libm::pow(r2, site.sigma + 1.0);
                }
                u
            }
            PotentialFamily::Polynomial(sites) => {
                let mut u = 0.0;
                for (coeffs, z) in sites.iter().zip(zeta) {
                    let r2 = z.norm_sqr();
                    let mut pw = r2;
                    for &c in coeffs {
                        u += c * pw;
                        pw *= r2;
                    }
                }
                u
            }
        }
    }

    fn force_into(&self, zeta: &[Complex], out: &mut [Complex]) {
        match self {
            PotentialFamily::PowerLaw(sites) => {
                for ((site, z), o) in sites.iter().zip(zeta).zip(out.iter_mut()) {
                    let r2 = z.norm_sqr();
                    let factor = if site.sigma == 0.0 {
                        site.gamma
                    } else {
                        site.gamma * libm::pow(r2, site.sigma)
                    };
                    *o = factor * z;
                }
            }
            PotentialFamily::Polynomial(sites) => {
                for ((coeffs, z), o) in sites.iter().zip(zeta).zip(out.iter_mut()) {
                    let r2 = z.norm_sqr();
                    let mut factor = 0.0;
                    let mut pw = 1.0;
                    for (p, &c) in coeffs.iter().enumerate() {
                        factor += c * ((p + 1) as f64) * pw;
                        pw *= r2;
                    }
                    *o = factor * z;
                }
            }
        }
    }
}

/// Potential family plus its declared coercivity constants and (optionally)
/// the truncation radius derived from the initial energy.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSpec {
    pub family: PotentialFamily,
    pub coercivity_a: f64,
    pub coercivity_b: f64,
    pub truncation_radius: Option<f64>,
}

impl PotentialSpec {
    pub fn new(family: PotentialFamily, a: f64, b: f64) -> Result<Self> {
        if !(b > 0.0) || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "coercivity constants must satisfy b > 0 (got a = {a}, b = {b})"
            )));
        }
        Ok(Self {
            family,
            coercivity_a: a,
            coercivity_b: b,
            truncation_radius: None,
        })
    }

    pub fn n(&self) -> usize {
        self.family.site_count()
    }
}

/// Evaluates `U(zeta)` and the Wirtinger gradient `F(zeta)`.
pub fn eval_potential(spec: &PotentialSpec, zeta: &[Complex]) -> Result<(f64, Vec<Complex>)> {
    if zeta.len() != spec.n() {
        return Err(Error::IndexContract(format!(
            "potential is defined on C^{}, got a vector of length {}",
            spec.n(),
            zeta.len()
        )));
    }
    let u = spec.family.value(zeta);
    let f = spec.family.force(zeta);
    if !u.is_finite() || f.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite {
            context: "potential evaluation",
        });
    }
    Ok((u, f))
}

/// Truncation radius `Lambda = sqrt((H + a)/b)` derived from the initial
/// energy and the declared coercivity constants.
pub fn coercivity_radius(spec: &PotentialSpec, initial_energy: f64) -> Result<f64> {
    let shifted = initial_energy + spec.coercivity_a;
    if shifted < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "initial energy {initial_energy} + a = {shifted} is negative; declared coercivity constants cannot be valid"
        )));
    }
    Ok(libm::sqrt(shifted / spec.coercivity_b))
}

/// Spot-checks the declared lower bound `U - G >= b |zeta|^2 - a` on a
/// deterministic sample of the disk of the given radius. This cannot certify
/// the bound globally; it catches misdeclared constants.
pub fn verify_coercivity(
    spec: &PotentialSpec,
    green: &GreenMatrix,
    radius: f64,
    samples: usize,
) -> Result<()> {
    let n = spec.n();
    let mut rng = SplitMix::new(0x9e37_79b9_7f4a_7c15);
    let mut zeta = vec![Complex::new(0.0, 0.0); n];
    let mut worst = f64::INFINITY;
    for _ in 0..samples {
        // Uniform direction on the unit sphere of C^n scaled by a uniform
        // radius; crude but deterministic and covering.
        let mut norm2 = 0.0;
        for z in zeta.iter_mut() {
            let re = rng.normal_ish();
            let im = rng.normal_ish();
            *z = Complex::new(re, im);
            norm2 += z.norm_sqr();
        }
        let r = radius * rng.uniform();
        let scale = if norm2 > 0.0 { r / libm::sqrt(norm2) } else { 0.0 };
        for z in zeta.iter_mut() {
            *z *= scale;
        }
        let u = spec.family.value(&zeta);
        let g = green.quadratic_form(&zeta);
        let margin = u - g - spec.coercivity_b * r * r + spec.coercivity_a;
        if margin < worst {
            worst = margin;
        }
    }
    if worst < -1e-9 {
        return Err(Error::InvalidConfig(format!(
            "declared coercivity constants violated on the sampled disk: margin {worst:.3e} at radius <= {radius}"
        )));
    }
    Ok(())
}

/// One Gaussian component `amplitude * exp(-|x - center|^2 / (2 width^2))`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianComponent {
    pub amplitude: Complex,
    pub center: Vec3,
    pub width: f64,
}

impl GaussianComponent {
    #[inline]
    pub fn eval(&self, x: Vec3) -> Complex {
        let r = dist(x, self.center);
        self.amplitude * libm::exp(-r * r / (2.0 * self.width * self.width))
    }
}

/// Initial charges, charge velocities and the regular parts of the initial
/// field, restricted to finite Gaussian sums.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialData {
    pub zeta0: Vec<Complex>,
    pub zeta0_dot: Vec<Complex>,
    pub psi0_reg: Vec<GaussianComponent>,
    pub pi0_reg: Vec<GaussianComponent>,
}

impl InitialData {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.zeta0.len() != n || self.zeta0_dot.len() != n {
            return Err(Error::InvalidConfig(format!(
                "initial charge vectors must have length {n} (got {} and {})",
                self.zeta0.len(),
                self.zeta0_dot.len()
            )));
        }
        for g in self.psi0_reg.iter().chain(self.pi0_reg.iter()) {
            if !(g.width > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "Gaussian width must be positive, got {}",
                    g.width
                )));
            }
        }
        Ok(())
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            zeta0: vec![Complex::new(0.0, 0.0); n],
            zeta0_dot: vec![Complex::new(0.0, 0.0); n],
            psi0_reg: Vec::new(),
            pi0_reg: Vec::new(),
        }
    }
}

/// Tiny deterministic generator for the coercivity sampling; the pipeline is
/// otherwise seed-free.
struct SplitMix {
    state: u64,
}

impl SplitMix {
    fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Symmetric, roughly bell-shaped variate (sum of uniforms); only the
    /// direction distribution matters for the sampling.
    fn normal_ish(&mut self) -> f64 {
        self.uniform() + self.uniform() + self.uniform() - 1.5
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_green_matrix_is_zero() {
        let (_, g) = build_system(1.0, &[[0.0, 0.0, 0.0]], None).unwrap();
        assert_eq!(g.n(), 1);
        assert_eq!(g.entry(0, 0), 0.0);
    }

    #[test]
    fn two_point_entry_matches_closed_form() {
        let (_, g) = build_system(1.0, &[[0.0; 3], [1.0, 0.0, 0.0]], None).unwrap();
        let expected = libm::exp(-1.0) / (4.0 * PI);
        assert!((g.entry(0, 1) - expected).abs() < 1e-16);
        assert!((expected - 2.9274915762e-2).abs() < 1e-11);

        let (_, g) = build_system(2.0, &[[0.0; 3], [0.5, 0.0, 0.0]], None).unwrap();
        let expected = libm::exp(-1.0) / (2.0 * PI);
        assert!((g.entry(0, 1) - expected).abs() < 1e-16);
        assert!((expected - 5.8549831524e-2).abs() < 1e-11);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(build_system(0.0, &[[0.0; 3]], None).is_err());
        assert!(build_system(-1.0, &[[0.0; 3]], None).is_err());
        assert!(build_system(1.0, &[], None).is_err());
        assert!(build_system(1.0, &[[0.0; 3], [0.0, 0.0, 1e-12]], None).is_err());
    }

    #[test]
    fn quartic_potential_hand_value() {
        // U = |zeta|^4 / 2 is the power law with gamma = 1, sigma = 1.
        let spec = PotentialSpec::new(
            PotentialFamily::PowerLaw(vec![PowerLawSite { gamma: 1.0, sigma: 1.0 }]),
            0.5,
            1.0,
        )
        .unwrap();
        let (u, f) = eval_potential(&spec, &[Complex::new(0.0, 0.0)]).unwrap();
        assert_eq!(u, 0.0);
        assert_eq!(f[0], Complex::new(0.0, 0.0));

        let (u, f) = eval_potential(&spec, &[Complex::new(1.0, 1.0)]).unwrap();
        assert!((u - 2.0).abs() < 1e-15);
        assert!((f[0] - Complex::new(2.0, 2.0)).norm() < 1e-15);
    }

    #[test]
    fn potential_overflow_is_reported() {
        let spec = PotentialSpec::new(
            PotentialFamily::PowerLaw(vec![PowerLawSite { gamma: 1.0, sigma: 200.0 }]),
            0.0,
            1.0,
        )
        .unwrap();
        let err = eval_potential(&spec, &[Complex::new(1e7, 0.0)]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
    }

    #[test]
    fn coercivity_radius_arithmetic() {
        let spec = PotentialSpec::new(
            PotentialFamily::PowerLaw(vec![PowerLawSite { gamma: 1.0, sigma: 1.0 }]),
            0.0,
            1.0,
        )
        .unwrap();
        assert_eq!(coercivity_radius(&spec, 1.0).unwrap(), 1.0);

        let spec = PotentialSpec::new(
            PotentialFamily::PowerLaw(vec![PowerLawSite { gamma: 1.0, sigma: 1.0 }]),
            1.0,
            4.0,
        )
        .unwrap();
        assert_eq!(coercivity_radius(&spec, 3.0).unwrap(), 1.0);

        let spec = PotentialSpec::new(
            PotentialFamily::PowerLaw(vec![PowerLawSite { gamma: 1.0, sigma: 1.0 }]),
            -2.0,
            1.0,
        )
        .unwrap();
        assert!(coercivity_radius(&spec, 1.0).is_err());
    }

    #[test]
    fn sampled_coercivity_accepts_valid_and_rejects_invalid() {
        // U - G = |z|^4/2 >= |z|^2 - 1/2 holds (min of r^4/2 - r^2 is -1/2).
        let (_, green) = build_system(1.0, &[[0.0; 3]], None).unwrap();
        let ok = PotentialSpec::new(
            PotentialFamily::PowerLaw(vec![PowerLawSite { gamma: 1.0, sigma: 1.0 }]),
            0.5,
            1.0,
        )
        .unwrap();
        verify_coercivity(&ok, &green, 3.0, 4000).unwrap();

        // a = 0 fails: margin dips to -1/2 inside the disk.
        let bad = PotentialSpec::new(
            PotentialFamily::PowerLaw(vec![PowerLawSite { gamma: 1.0, sigma: 1.0 }]),
            0.0,
            1.0,
        )
        .unwrap();
        assert!(verify_coercivity(&bad, &green, 3.0, 4000).is_err());
    }

    #[test]
    fn quadratic_form_is_real_valued() {
        let (_, g) = build_system(1.5, &[[0.0; 3], [0.8, 0.3, -0.2], [-1.0, 0.4, 0.9]], None).unwrap();
        let zeta = [
            Complex::new(0.3, -1.2),
            Complex::new(-0.7, 0.25),
            Complex::new(1.1, 0.6),
        ];
        // Recompute keeping the imaginary part to check it is round-off only.
        let mut acc = Complex::new(0.0, 0.0);
        for j in 0..3 {
            for k in 0..3 {
                acc += g.entry(j, k) * zeta[j] * zeta[k].conj();
            }
        }
        let n2: f64 = zeta.iter().map(|z| z.norm_sqr()).sum();
        assert!(acc.im.abs() <= 1e-14 * n2);
        assert_eq!(acc.re, g.quadratic_form(&zeta));
    }
}
