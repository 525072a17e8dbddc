//! Scenario builders shared by the integration suites.

// Each suite uses a subset of these helpers.
#![allow(dead_code)]

use kgpoint_core::freefield::{FreeFieldEvaluator, QuadratureParams};
use kgpoint_core::model::{
    build_system, GaussianComponent, GreenMatrix, InitialData, PotentialFamily, PotentialSpec,
    PowerLawSite, SystemConfig,
};
use kgpoint_core::Complex;

pub struct Setup {
    pub system: SystemConfig,
    pub green: GreenMatrix,
    pub spec: PotentialSpec,
    pub data: InitialData,
    pub free: Option<FreeFieldEvaluator>,
}

impl Setup {
    pub fn free_ref(&self) -> Option<&FreeFieldEvaluator> {
        self.free.as_ref()
    }
}

/// Single site at the origin, linear force `F(z) = z`, complex Gaussian
/// pulse centered off the site; charges start at rest. The initial charge is
/// chosen so the boundary condition holds at t = 0 (`psi0_reg(y) = F(zeta0)`),
/// i.e. the data lie in the domain of the generator; otherwise a defect front
/// radiates from the site and the conserved energy differs from the naive
/// t = 0 value.
pub fn linear_single_site() -> Setup {
    let (system, green) = build_system(1.0, &[[0.0; 3]], None).unwrap();
    let mut spec = PotentialSpec::new(
        PotentialFamily::PowerLaw(vec![PowerLawSite { gamma: 1.0, sigma: 0.0 }]),
        0.0,
        1.0,
    )
    .unwrap();
    spec.truncation_radius = Some(3.0);
    let amplitude = Complex::new(0.38, 0.12);
    let center = [0.6, 0.0, 0.0];
    let width = 1.25f64;
    // F(z) = z, so compatibility reads zeta0 = psi0_reg(origin).
    let zeta0 = amplitude * (-(0.6f64 * 0.6) / (2.0 * width * width)).exp();
    let data = InitialData {
        zeta0: vec![zeta0],
        zeta0_dot: vec![Complex::new(0.0, 0.0)],
        psi0_reg: vec![GaussianComponent {
            amplitude,
            center,
            width,
        }],
        pi0_reg: vec![],
    };
    let free = FreeFieldEvaluator::new(1.0, &data, QuadratureParams::default()).unwrap();
    Setup {
        system,
        green,
        spec,
        data,
        free: Some(free),
    }
}

/// Free Gaussian pulse with no singular data (the charge starts at zero and
/// the boundary condition is deliberately violated at t = 0; useful for
/// support/identity checks that need vanishing singular parts).
pub fn gaussian_probe() -> Setup {
    let mut setup = linear_single_site();
    setup.data.zeta0 = vec![Complex::new(0.0, 0.0)];
    setup.free =
        Some(FreeFieldEvaluator::new(1.0, &setup.data, QuadratureParams::default()).unwrap());
    setup
}

/// Single site with the quartic double-well `U = -2|z|^2 + |z|^4`, sitting on
/// the equilibrium circle `|z*| = 1`.
pub fn static_single_site() -> Setup {
    let (system, green) = build_system(1.0, &[[0.0; 3]], None).unwrap();
    let mut spec =
        PotentialSpec::new(PotentialFamily::Polynomial(vec![vec![-2.0, 1.0]]), 2.25, 1.0).unwrap();
    // H(0) = U - G = -1, so Lambda = sqrt((-1 + 2.25)/1).
    spec.truncation_radius = Some(1.25f64.sqrt());
    let data = InitialData {
        zeta0: vec![Complex::new(1.0, 0.0)],
        zeta0_dot: vec![Complex::new(0.0, 0.0)],
        psi0_reg: vec![],
        pi0_reg: vec![],
    };
    Setup {
        system,
        green,
        spec,
        data,
        free: None,
    }
}

/// Two sites one unit apart with quartic self-interactions and nonzero
/// initial charges; exercises delay terms, cross sources and breakpoints.
pub fn two_site() -> Setup {
    let (system, green) = build_system(1.0, &[[0.0; 3], [1.0, 0.0, 0.0]], None).unwrap();
    let mut spec = PotentialSpec::new(
        PotentialFamily::PowerLaw(vec![
            PowerLawSite { gamma: 1.0, sigma: 1.0 },
            PowerLawSite { gamma: 1.0, sigma: 1.0 },
        ]),
        1.06,
        1.0,
    )
    .unwrap();
    spec.truncation_radius = Some(2.5);
    // Compatible initial charges: with no regular field the boundary
    // conditions couple the sites, F_j(z_j) = g z_k; the symmetric root is
    // z = sqrt(g12). Generic asymmetric velocities are unconstrained.
    let s = green.entry(0, 1).sqrt();
    let data = InitialData {
        zeta0: vec![Complex::new(s, 0.0), Complex::new(s, 0.0)],
        zeta0_dot: vec![Complex::new(0.2, 0.0), Complex::new(0.0, 0.1)],
        psi0_reg: vec![],
        pi0_reg: vec![],
    };
    Setup {
        system,
        green,
        spec,
        data,
        free: None,
    }
}
