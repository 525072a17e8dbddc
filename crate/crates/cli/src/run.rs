//! Run orchestration: resolve the scenario, solve, emit artifacts, and
//! drive the optional oracle-comparison and convergence-study modes.

use std::path::{Path, PathBuf};

use kgpoint_core::charges::{ChargeEquation, ChargeHistory, SolverParams};
use kgpoint_core::diagnostics::{
    apriori_check, coercivity_check_radius, energy_from_samples, initial_energy_analytic,
    observed_orders, EnergyGridSpec, EnergyReport,
};
use kgpoint_core::field::{FieldEvaluator, GridSpec, SnapshotDomain};
use kgpoint_core::model::{coercivity_radius, verify_coercivity};
use kgpoint_core::oracle::{brute_force_charges, BruteForceParams, ManufacturedForcing};
use kgpoint_core::sources::SourceSet;
use kgpoint_core::Complex;

use crate::outputs::{
    git_blob_hash, write_charges_csv, write_energy_csv, write_manifest, write_residuals_csv,
    write_snapshot_binary, write_snapshot_text, AprioriOutcome, Checks, Manifest, ResolvedParams,
};
use crate::scenario::{Built, Scenario};
use crate::{CliError, Result};

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub threads: Option<usize>,
    pub no_truncation: bool,
    pub oracle: bool,
    pub convergence: Option<Vec<f64>>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("."),
            threads: None,
            no_truncation: false,
            oracle: false,
            convergence: None,
        }
    }
}

pub struct RunOutcome {
    pub history: ChargeHistory,
    pub energy: Option<EnergyReport>,
    pub max_residual_abs: Option<f64>,
    pub oracle_deviation: Option<(f64, f64)>,
    pub convergence_orders: Option<Vec<f64>>,
    pub manifest_path: PathBuf,
}

/// Resolves the truncation radius: declared value, or derived from the
/// initial energy (analytic when the regular data vanish, grid quadrature
/// otherwise).
pub fn resolve_truncation_radius(
    built: &Built,
    energy_grid: Option<&EnergyGridSpec>,
    pool: &rayon::ThreadPool,
) -> Result<f64> {
    if let Some(r) = built.spec.truncation_radius {
        return Ok(r);
    }
    let h0 = if built.data.psi0_reg.is_empty() && built.data.pi0_reg.is_empty() {
        initial_energy_analytic(&built.system, &built.green, &built.spec, &built.data)
            .map_err(CliError::Solver)?
    } else {
        // Grid surrogate at t = 0 with a single-node history carrying the
        // initial data.
        let n = built.system.n();
        let hist = ChargeHistory::from_parts(
            n,
            vec![0.0],
            built.data.zeta0.clone(),
            built.data.zeta0_dot.clone(),
            0.0,
        );
        let field = FieldEvaluator::new(
            &built.system,
            &built.green,
            &built.data,
            &built.spec,
            built.free.as_ref(),
            &hist,
        )
        .map_err(CliError::Solver)?;
        let default_grid = EnergyGridSpec {
            center: [0.0; 3],
            half_width: f64::max(
                8.0 / built.system.mass(),
                max_site_extent(&built.system) + 5.0 / built.system.mass() + 1.0,
            ),
            resolution: 48,
        };
        let grid = energy_grid.unwrap_or(&default_grid);
        let samples = crate::par::sample_regular_field_par(pool, &field, grid, 0.0)?;
        energy_from_samples(
            &samples,
            grid,
            &built.system,
            &built.green,
            &built.spec,
            &hist,
            0.0,
        )
        .map_err(CliError::Solver)?
        .total
    };
    coercivity_radius(&built.spec, h0).map_err(|e| CliError::Validation(e.to_string()))
}

fn max_site_extent(system: &kgpoint_core::model::SystemConfig) -> f64 {
    system
        .points()
        .iter()
        .flat_map(|p| p.iter())
        .fold(0.0f64, |acc, c| acc.max(c.abs()))
}

fn energy_grid_of(scenario: &Scenario, built: &Built) -> Option<EnergyGridSpec> {
    scenario.outputs.energy.as_ref().map(|section| EnergyGridSpec {
        center: section.center,
        half_width: section.half_width.unwrap_or_else(|| {
            EnergyGridSpec::default_for(&built.system, built.horizon, section.resolution).half_width
        }),
        resolution: section.resolution,
    })
}

/// Solves the configured scenario (no outputs written); shared by the
/// execute path, the oracle/convergence modes and the acceptance suite.
pub fn solve_built(built: &Built, params: &SolverParams) -> Result<ChargeHistory> {
    let mut sources = SourceSet::new(
        &built.system,
        &built.green,
        &built.data,
        built.free.clone(),
        params.dt,
    )
    .map_err(CliError::Solver)?;
    let eq = ChargeEquation::new(&built.system, &built.green, &built.spec, params.truncation_enabled)
        .map_err(CliError::Solver)?;
    match &built.targets {
        Some(targets) => {
            let forcing = ManufacturedForcing::new(
                &built.system,
                &built.green,
                &built.spec,
                params.truncation_enabled,
                targets.clone(),
            )
            .map_err(CliError::Solver)?;
            let eq = eq.with_extra_source(&forcing);
            eq.solve(&built.data, &mut sources, params, built.horizon)
                .map_err(CliError::Solver)
        }
        None => eq
            .solve(&built.data, &mut sources, params, built.horizon)
            .map_err(CliError::Solver),
    }
}

/// Full scenario execution with artifacts.
pub fn execute(scenario_path: &Path, opts: &RunOptions) -> Result<RunOutcome> {
    let (scenario, bytes) = Scenario::load(scenario_path)?;
    let scenario_hash = git_blob_hash(&bytes);
    let truncation_override = opts.no_truncation.then_some(false);
    let mut built = scenario.build(truncation_override)?;
    let pool = crate::par::build_pool(opts.threads)?;

    std::fs::create_dir_all(&opts.out_dir)?;

    // Truncation radius and coercivity spot check.
    let energy_grid = energy_grid_of(&scenario, &built);
    let radius = if built.params.truncation_enabled || built.spec.truncation_radius.is_some() {
        let r = resolve_truncation_radius(&built, energy_grid.as_ref(), &pool)?;
        built.spec.truncation_radius = Some(r);
        Some(r)
    } else {
        None
    };
    let coercivity_ok = {
        let check_radius = coercivity_check_radius(radius, &built.data);
        verify_coercivity(&built.spec, &built.green, check_radius, 4000)
            .map(|_| true)
            .map_err(|e| CliError::Validation(e.to_string()))?
    };

    let history = solve_built(&built, &built.params)?;

    let field = FieldEvaluator::new(
        &built.system,
        &built.green,
        &built.data,
        &built.spec,
        built.free.as_ref(),
        &history,
    )
    .map_err(CliError::Solver)?;

    let mut artifacts = Vec::new();

    // Residual series at the solver nodes (refined quadrature inside).
    let residuals = par_residuals(&pool, &field, history.times())?;
    let residual_abs: Vec<Vec<f64>> = residuals
        .iter()
        .map(|row| row.iter().map(|z| z.norm()).collect())
        .collect();
    let max_residual = residual_abs
        .iter()
        .flat_map(|r| r.iter().copied())
        .fold(0.0f64, f64::max);

    if let Some(name) = &scenario.outputs.charges {
        let path = Scenario::resolve_path(&opts.out_dir, name);
        write_charges_csv(&path, &history, &residual_abs)?;
        artifacts.push(path.display().to_string());
    }
    if let Some(name) = &scenario.outputs.residuals {
        let path = Scenario::resolve_path(&opts.out_dir, name);
        write_residuals_csv(&path, history.times(), &residuals)?;
        artifacts.push(path.display().to_string());
    }

    // Energy series.
    let mut energy_report = None;
    if let (Some(section), Some(grid)) = (&scenario.outputs.energy, energy_grid.as_ref()) {
        let mut rows = Vec::new();
        for &t in &section.times {
            let samples = crate::par::sample_regular_field_par(&pool, &field, grid, t)?;
            rows.push(
                energy_from_samples(
                    &samples,
                    grid,
                    &built.system,
                    &built.green,
                    &built.spec,
                    &history,
                    t,
                )
                .map_err(CliError::Solver)?,
            );
        }
        let report = EnergyReport {
            grid: grid.clone(),
            rows,
        };
        let path = Scenario::resolve_path(&opts.out_dir, &section.path);
        write_energy_csv(&path, &report)?;
        artifacts.push(path.display().to_string());
        energy_report = Some(report);
    }

    // Snapshots.
    if let Some(section) = &scenario.outputs.snapshots {
        for &t in &section.times {
            let domain = SnapshotDomain::Grid(GridSpec {
                center: section.grid.center,
                half_width: section.grid.half_width,
                resolution: section.grid.resolution,
            });
            let snap = crate::par::snapshot_par(
                &pool,
                &field,
                domain,
                t,
                section.with_derivative,
                section.cone_exclusion,
            )?;
            let name = format!("{}_{t}.dat", section.prefix);
            let path = Scenario::resolve_path(&opts.out_dir, &name);
            if section.binary {
                write_snapshot_binary(&path, &snap)?;
            } else {
                write_snapshot_text(&path, &snap)?;
            }
            artifacts.push(path.display().to_string());
        }
    }

    // Oracle comparison mode.
    let mut oracle_outcome = None;
    if opts.oracle {
        let fine_dt = built.params.dt / 100.0;
        let deviation = oracle_deviation(&built, &history, fine_dt)?;
        let tol = 1e-4 * history.max_abs().max(1e-12);
        oracle_outcome = Some((deviation, tol));
    }

    // Convergence study mode.
    let mut convergence_orders = None;
    if let Some(dts) = &opts.convergence {
        let orders = convergence_study(&built, dts)?;
        convergence_orders = Some(orders);
    }

    let apriori = radius.map(|r| {
        let rep = apriori_check(&history, r);
        AprioriOutcome {
            max_abs: rep.max_abs,
            radius: rep.radius,
            margin: rep.margin,
            pass: rep.pass,
        }
    });

    let manifest = Manifest {
        scenario_hash,
        resolved: ResolvedParams {
            mass: built.system.mass(),
            sites: built.system.n(),
            horizon: built.horizon,
            dt: built.params.dt,
            truncation_enabled: built.params.truncation_enabled,
            truncation_radius: radius,
            breakpoints: history.breakpoints().to_vec(),
            grid_nodes: history.len(),
            halvings: history.halvings(),
            max_corrector_iters: history.max_corrector_iters(),
        },
        checks: Checks {
            coercivity_sampled_ok: coercivity_ok,
            apriori,
            max_abs_charge: history.max_abs(),
            max_residual_abs: Some(max_residual),
            energy_relative_drift: energy_report.as_ref().map(|r| r.relative_drift()),
            oracle_deviation: oracle_outcome.map(|(d, _)| d),
            oracle_tolerance: oracle_outcome.map(|(_, t)| t),
        },
        artifacts: artifacts.clone(),
    };
    let manifest_path = opts.out_dir.join("manifest.json");
    write_manifest(&manifest_path, &manifest)?;

    // Gates for the check modes.
    if let Some((dev, tol)) = oracle_outcome {
        if dev > tol {
            return Err(CliError::CheckFailed(format!(
                "oracle deviation {dev:.3e} exceeds tolerance {tol:.3e}"
            )));
        }
    }
    if let Some(orders) = &convergence_orders {
        for o in orders {
            if !(1.9..=2.1).contains(o) {
                return Err(CliError::CheckFailed(format!(
                    "observed order {o:.3} outside [1.9, 2.1] (all: {orders:?})"
                )));
            }
        }
    }

    Ok(RunOutcome {
        history,
        energy: energy_report,
        max_residual_abs: Some(max_residual),
        oracle_deviation: oracle_outcome,
        convergence_orders,
        manifest_path,
    })
}

fn par_residuals(
    pool: &rayon::ThreadPool,
    field: &FieldEvaluator<'_>,
    times: &[f64],
) -> Result<Vec<Vec<Complex>>> {
    crate::par::residual_series_par(pool, field, times)
}

/// Max-norm deviation between the configured run and the brute-force solver.
pub fn oracle_deviation(built: &Built, history: &ChargeHistory, fine_dt: f64) -> Result<f64> {
    let params = BruteForceParams {
        fine_dt,
        blowup_guard: 1e6,
        truncation_radius: if built.params.truncation_enabled {
            built.spec.truncation_radius
        } else {
            None
        },
    };
    let forcing = match &built.targets {
        Some(targets) => Some(
            ManufacturedForcing::new(
                &built.system,
                &built.green,
                &built.spec,
                built.params.truncation_enabled,
                targets.clone(),
            )
            .map_err(CliError::Solver)?,
        ),
        None => None,
    };
    let oracle = brute_force_charges(
        &built.system,
        &built.green,
        &built.data,
        &built.spec,
        built.free.as_ref(),
        &params,
        built.horizon,
        forcing
            .as_ref()
            .map(|f| f as &dyn kgpoint_core::charges::ExtraSource),
    )
    .map_err(CliError::Solver)?;
    let mut worst = 0.0f64;
    for (node, &t) in history.times().iter().enumerate() {
        let (want, _) = oracle.eval(t).map_err(CliError::Solver)?;
        for j in 0..history.n() {
            worst = worst.max((history.value(node, j) - want[j]).norm());
        }
    }
    Ok(worst)
}

/// Step-size sweep: error per dt against the manufactured targets when
/// available, otherwise against a finest run at `min(dt)/4`; prints the
/// table and returns the observed orders.
pub fn convergence_study(built: &Built, dts: &[f64]) -> Result<Vec<f64>> {
    if dts.len() < 3 {
        return Err(CliError::Validation(
            "convergence mode needs at least three step sizes".into(),
        ));
    }
    let mut sorted = dts.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let reference_hist;
    let reference: Box<dyn Fn(f64) -> kgpoint_core::error::Result<Vec<Complex>>> =
        match &built.targets {
            Some(targets) => {
                let targets = targets.clone();
                Box::new(move |t| Ok(targets.iter().map(|trg| trg.value(t)).collect()))
            }
            None => {
                let params = SolverParams {
                    dt: sorted.last().unwrap() / 4.0,
                    ..built.params.clone()
                };
                reference_hist = solve_built(built, &params)?;
                Box::new(move |t| Ok(reference_hist.eval(t)?.0))
            }
        };

    let mut errors = Vec::new();
    for &dt in &sorted {
        let params = SolverParams {
            dt,
            ..built.params.clone()
        };
        let hist = solve_built(built, &params)?;
        let mut worst = 0.0f64;
        for (node, &t) in hist.times().iter().enumerate() {
            let want = reference(t).map_err(CliError::Solver)?;
            for j in 0..hist.n() {
                worst = worst.max((hist.value(node, j) - want[j]).norm());
            }
        }
        errors.push(worst);
    }
    let report = observed_orders(&sorted, &errors).map_err(CliError::Solver)?;
    println!("dt            max_error     order");
    for i in 0..sorted.len() {
        if i == 0 {
            println!("{:<13.6e} {:<13.6e} -", sorted[i], errors[i]);
        } else {
            println!(
                "{:<13.6e} {:<13.6e} {:.3}",
                sorted[i],
                errors[i],
                report.orders[i - 1]
            );
        }
    }
    if report.saturated {
        println!("errors at round-off floor; order check not applicable");
        return Ok(Vec::new());
    }
    Ok(report.orders)
}
