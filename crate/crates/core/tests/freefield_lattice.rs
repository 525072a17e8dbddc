//! Cross-validation of the spectral free-field evaluator against the
//! regularized lattice solver (independent route: leapfrog finite
//! differences on a periodic box).

use std::sync::OnceLock;

use kgpoint_core::freefield::{FreeFieldEvaluator, QuadratureParams};
use kgpoint_core::model::{GaussianComponent, InitialData};
use kgpoint_core::oracle::{LatticeParams, LatticeSolver};
use kgpoint_core::Complex;

fn data() -> InitialData {
    InitialData {
        zeta0: vec![],
        zeta0_dot: vec![],
        psi0_reg: vec![GaussianComponent {
            amplitude: Complex::new(1.0, 0.0),
            center: [0.0; 3],
            width: 1.0,
        }],
        pi0_reg: vec![],
    }
}

struct Evolved {
    at_half: Vec<Vec<Complex>>, // lattice values on the sample cube at t=0.5
    at_point: Complex,          // lattice value at (0.3, 0, 0), t = 0.7
    at_one: Vec<Vec<Complex>>,  // sample cube at t=1.0
    sample_coords: Vec<f64>,
}

/// One shared lattice evolution (128^3 is the expensive part of this suite).
fn evolved() -> &'static Evolved {
    static CELL: OnceLock<Evolved> = OnceLock::new();
    CELL.get_or_init(|| {
        let params = LatticeParams {
            grid_n: 128,
            spacing: 0.1,
            dt: 0.0125,
            mollifier_width: 0.2,
        };
        let d = data();
        let mut solver = LatticeSolver::new(1.0, params).unwrap();
        solver
            .initialize(&d.psi0_reg, &d.pi0_reg, None, &[])
            .unwrap();

        // 20^3 sample cube: lattice indices 45, 47, ..., 83 (x in [-1.9, 1.9]).
        let idxs: Vec<usize> = (0..20).map(|q| 45 + 2 * q).collect();
        let sample_coords: Vec<f64> = idxs.iter().map(|&i| solver.coord(i)).collect();
        let collect = |s: &LatticeSolver| -> Vec<Vec<Complex>> {
            let mut rows = Vec::new();
            for &i in &idxs {
                for &j in &idxs {
                    let mut row = Vec::with_capacity(idxs.len());
                    for &k in &idxs {
                        row.push(s.value(i, j, k));
                    }
                    rows.push(row);
                }
            }
            rows
        };

        solver.evolve_to(0.5, |_| vec![]).unwrap();
        let at_half = collect(&solver);
        solver.evolve_to(0.7, |_| vec![]).unwrap();
        // (0.3, 0, 0) = lattice node (67, 64, 64) since coord(i) = 0.1 i - 6.4.
        assert!((solver.coord(67) - 0.3).abs() < 1e-12);
        assert!((solver.coord(64) - 0.0).abs() < 1e-12);
        let at_point = solver.value(67, 64, 64);
        solver.evolve_to(1.0, |_| vec![]).unwrap();
        let at_one = collect(&solver);
        Evolved {
            at_half,
            at_point,
            at_one,
            sample_coords,
        }
    })
}

fn spectral() -> FreeFieldEvaluator {
    FreeFieldEvaluator::new(1.0, &data(), QuadratureParams::default()).unwrap()
}

fn relative_l2(lattice: &[Vec<Complex>], coords: &[f64], ev: &FreeFieldEvaluator, t: f64) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    let n = coords.len();
    let mut flat = 0usize;
    for i in 0..n {
        for j in 0..n {
            let row = &lattice[flat];
            flat += 1;
            for k in 0..n {
                let x = [coords[i], coords[j], coords[k]];
                let want = ev.eval(x, t, false).unwrap().value;
                num += (row[k] - want).norm_sqr();
                den += want.norm_sqr();
            }
        }
    }
    (num / den).sqrt()
}

#[test]
fn lattice_matches_spectral_in_l2_at_half() {
    let e = evolved();
    let err = relative_l2(&e.at_half, &e.sample_coords, &spectral(), 0.5);
    assert!(err <= 1e-3, "relative L2 error {err} at t = 0.5");
}

#[test]
fn lattice_matches_spectral_in_l2_at_one() {
    let e = evolved();
    let err = relative_l2(&e.at_one, &e.sample_coords, &spectral(), 1.0);
    assert!(err <= 1e-3, "relative L2 error {err} at t = 1.0");
}

#[test]
fn lattice_matches_spectral_pointwise() {
    let e = evolved();
    let want = spectral().eval([0.3, 0.0, 0.0], 0.7, false).unwrap().value;
    let diff = (e.at_point - want).norm();
    assert!(diff <= 1e-4, "lattice {} vs spectral {want}, diff {diff}", e.at_point);
}
