mod common;

use common::{gaussian_probe, static_single_site, two_site};
use kgpoint_core::charges::{solve_charges, ChargeHistory, SolverParams};
use kgpoint_core::field::FieldEvaluator;
use kgpoint_core::model::green_function;
use kgpoint_core::sources::SourceSet;
use kgpoint_core::Complex;

fn solve(setup: &common::Setup, dt: f64, horizon: f64) -> ChargeHistory {
    let mut sources = SourceSet::new(
        &setup.system,
        &setup.green,
        &setup.data,
        setup.free.clone(),
        dt,
    )
    .unwrap();
    let params = SolverParams {
        dt,
        ..SolverParams::default()
    };
    solve_charges(
        &setup.system,
        &setup.green,
        &setup.data,
        &setup.spec,
        &mut sources,
        &params,
        horizon,
    )
    .unwrap()
}

#[test]
fn static_field_is_the_yukawa_profile() {
    let setup = static_single_site();
    let hist = solve(&setup, 1e-3, 3.0);
    let field = FieldEvaluator::new(
        &setup.system,
        &setup.green,
        &setup.data,
        &setup.spec,
        None,
        &hist,
    )
    .unwrap();
    let zstar = Complex::new(1.0, 0.0);
    for &t in &[0.0, 0.7, 1.9, 3.0] {
        for &x in &[[0.4f64, 0.0, 0.0], [0.0, -1.2, 0.5], [2.0, 2.0, 1.0]] {
            let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
            let got = field.eval_field(x, t).unwrap();
            let want = zstar * green_function(1.0, r);
            assert!(
                (got - want).norm() <= 1e-6,
                "t={t} x={x:?}: {got} vs {want}"
            );
            let reg = field.eval_regular_part(x, t).unwrap();
            assert!(reg.norm() <= 1e-6, "regular part {reg} at t={t} x={x:?}");
        }
        // Finite at the interaction point itself.
        let reg0 = field.eval_regular_part([0.0; 3], t).unwrap();
        assert!(reg0.norm() <= 1e-6, "regular part at site: {reg0}");
        let res = field.boundary_residual(0, t).unwrap();
        assert!(res.norm() <= 1e-8, "residual {res} at t={t}");
    }
}

#[test]
fn initial_time_reproduces_the_data_decomposition() {
    let setup = two_site();
    let hist = solve(&setup, 1e-3, 0.01);
    let field = FieldEvaluator::new(
        &setup.system,
        &setup.green,
        &setup.data,
        &setup.spec,
        None,
        &hist,
    )
    .unwrap();
    for &x in &[[0.3f64, 0.4, -0.2], [1.5, 0.1, 0.3], [-0.8, 0.0, 0.0]] {
        let got = field.eval_field(x, 0.0).unwrap();
        let mut want = Complex::new(0.0, 0.0);
        for (j, y) in setup.system.points().iter().enumerate() {
            let r = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2) + (x[2] - y[2]).powi(2)).sqrt();
            want += setup.data.zeta0[j] * green_function(1.0, r);
        }
        assert!((got - want).norm() <= 1e-10, "x={x:?}: {got} vs {want}");
    }
}

#[test]
fn outside_all_cones_the_field_is_free() {
    let setup = gaussian_probe();
    let hist = solve(&setup, 1e-3, 1.0);
    let field = FieldEvaluator::new(
        &setup.system,
        &setup.green,
        &setup.data,
        &setup.spec,
        setup.free_ref(),
        &hist,
    )
    .unwrap();
    let t = 1.0;
    // |x| > t and zero singular initial data: only the free part remains.
    for &x in &[[2.5, 0.0, 0.0], [0.0, 3.0, 1.0], [-1.2, -1.2, 1.0]] {
        let got = field.eval_field(x, t).unwrap();
        let want = setup.free_ref().unwrap().eval(x, t, false).unwrap().value;
        assert!((got - want).norm() <= 1e-14, "x={x:?}");
    }
}

#[test]
fn field_minus_singular_parts_matches_regular_part() {
    let setup = two_site();
    let hist = solve(&setup, 1e-3, 1.5);
    let field = FieldEvaluator::new(
        &setup.system,
        &setup.green,
        &setup.data,
        &setup.spec,
        None,
        &hist,
    )
    .unwrap();
    let t = 1.3;
    let (zeta, _) = hist.eval(t).unwrap();
    for &x in &[[0.5f64, 0.8, 0.0], [1.4, -0.6, 0.4], [-0.9, 0.2, -0.7]] {
        let full = field.eval_field(x, t).unwrap();
        let mut sub = full;
        for (j, y) in setup.system.points().iter().enumerate() {
            let r = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2) + (x[2] - y[2]).powi(2)).sqrt();
            sub -= zeta[j] * green_function(1.0, r);
        }
        let reg = field.eval_regular_part(x, t).unwrap();
        assert!((sub - reg).norm() <= 1e-10, "x={x:?}: {sub} vs {reg}");
    }
}

#[test]
fn evaluation_at_an_interaction_point_is_rejected_for_the_full_field() {
    let setup = static_single_site();
    let hist = solve(&setup, 1e-3, 0.5);
    let field = FieldEvaluator::new(
        &setup.system,
        &setup.green,
        &setup.data,
        &setup.spec,
        None,
        &hist,
    )
    .unwrap();
    assert!(field.eval_field([0.0; 3], 0.2).is_err());
    assert!(field.eval_field([0.0, 0.0, 1e-12], 0.2).is_err());
}

#[test]
fn snapshot_covers_grid_and_flags_cone_shell() {
    let setup = static_single_site();
    let hist = solve(&setup, 1e-3, 1.0);
    let field = FieldEvaluator::new(
        &setup.system,
        &setup.green,
        &setup.data,
        &setup.spec,
        None,
        &hist,
    )
    .unwrap();
    let grid = kgpoint_core::field::GridSpec {
        center: [0.0; 3],
        half_width: 2.0,
        resolution: 8,
    };
    let snap = field
        .snapshot(
            kgpoint_core::field::SnapshotDomain::Grid(grid),
            1.0,
            true,
            0.3,
        )
        .unwrap();
    assert_eq!(snap.values.len(), 512);
    assert_eq!(snap.derivatives.as_ref().unwrap().len(), 512);
    assert_eq!(snap.cone_exclusion, 0.3);
    // The shell |r - t| < 0.3 at t = 1 intersects the box.
    assert!(snap.flagged.iter().any(|&f| f));
    assert!(snap.flagged.iter().any(|&f| !f));
}

#[test]
fn regular_part_at_initial_time_is_the_gaussian_data() {
    use common::linear_single_site;
    let setup = linear_single_site();
    let hist = solve(&setup, 1e-3, 0.01);
    let field = FieldEvaluator::new(
        &setup.system,
        &setup.green,
        &setup.data,
        &setup.spec,
        setup.free_ref(),
        &hist,
    )
    .unwrap();
    for &x in &[[0.0f64, 0.0, 0.0], [0.6, 0.0, 0.0], [1.0, -0.5, 0.3]] {
        let got = field.eval_regular_part(x, 0.0).unwrap();
        let want = setup.data.psi0_reg[0].eval(x);
        assert!((got - want).norm() <= 1e-9, "x={x:?}: {got} vs {want}");
    }
}
