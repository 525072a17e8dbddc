//! Scenario file schema (JSON) and conversion into the core types.
//!
//! The format is deliberately flat and diff-friendly; complex numbers are
//! `[re, im]` pairs. Unknown fields are rejected so typos surface as
//! validation errors with a line reference.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use kgpoint_core::charges::SolverParams;
use kgpoint_core::freefield::{FreeFieldEvaluator, QuadratureParams};
use kgpoint_core::model::{
    build_system, GaussianComponent, GreenMatrix, InitialData, PotentialFamily, PotentialSpec,
    PowerLawSite, SystemConfig,
};
use kgpoint_core::oracle::ManufacturedTarget;
use kgpoint_core::Complex;

use crate::{CliError, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub system: SystemSection,
    pub potential: PotentialSection,
    #[serde(default)]
    pub initial: InitialSection,
    pub run: RunSection,
    #[serde(default)]
    pub quadrature: QuadratureSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manufactured: Option<ManufacturedSection>,
    #[serde(default)]
    pub outputs: OutputsSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub mass: f64,
    pub points: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_sep: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSection {
    pub family: FamilySection,
    pub a: f64,
    pub b: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation_radius: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilySection {
    PowerLaw(Vec<PowerLawSection>),
    Polynomial(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerLawSection {
    pub gamma: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    #[serde(default)]
    pub zeta0: Vec<[f64; 2]>,
    #[serde(default)]
    pub zeta0_dot: Vec<[f64; 2]>,
    #[serde(default)]
    pub psi0_reg: Vec<GaussianSection>,
    #[serde(default)]
    pub pi0_reg: Vec<GaussianSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianSection {
    pub amplitude: [f64; 2],
    pub center: [f64; 3],
    pub width: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub horizon: f64,
    pub dt: f64,
    #[serde(default = "default_fixed_point_tol")]
    pub fixed_point_tol: f64,
    #[serde(default = "default_max_iters")]
    pub max_fixed_point_iters: u32,
    #[serde(default = "default_generations")]
    pub breakpoint_generations: u32,
    #[serde(default = "default_true")]
    pub truncation: bool,
    #[serde(default)]
    pub extra_breakpoints: Vec<f64>,
}

fn default_fixed_point_tol() -> f64 {
    1e-12
}

fn default_max_iters() -> u32 {
    50
}

fn default_generations() -> u32 {
    3
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSection {
    #[serde(default = "default_quad_tol")]
    pub tolerance: f64,
    #[serde(default = "default_panel_budget")]
    pub panel_budget: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kmax_override: Option<f64>,
}

impl Default for QuadratureSection {
    fn default() -> Self {
        Self {
            tolerance: default_quad_tol(),
            panel_budget: default_panel_budget(),
            kmax_override: None,
        }
    }
}

fn default_quad_tol() -> f64 {
    1e-10
}

fn default_panel_budget() -> usize {
    1 << 14
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManufacturedSection {
    pub targets: Vec<TargetSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetSection {
    Constant { value: [f64; 2] },
    ExpDecay { amp: [f64; 2], rate: f64 },
    KinkedExp {
        amp: [f64; 2],
        rate: f64,
        kink_time: f64,
        kick: [f64; 2],
    },
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub charges: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residuals: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy: Option<EnergySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshots: Option<SnapshotSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergySection {
    pub path: String,
    pub times: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_width: Option<f64>,
    #[serde(default = "default_energy_resolution")]
    pub resolution: usize,
    #[serde(default)]
    pub center: [f64; 3],
}

fn default_energy_resolution() -> usize {
    64
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotSection {
    pub times: Vec<f64>,
    pub grid: SnapshotGridSection,
    #[serde(default = "default_snapshot_prefix")]
    pub prefix: String,
    #[serde(default)]
    pub binary: bool,
    #[serde(default = "default_cone_exclusion")]
    pub cone_exclusion: f64,
    #[serde(default)]
    pub with_derivative: bool,
}

fn default_snapshot_prefix() -> String {
    "snapshot".into()
}

fn default_cone_exclusion() -> f64 {
    1e-9
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotGridSection {
    #[serde(default)]
    pub center: [f64; 3],
    pub half_width: f64,
    pub resolution: usize,
}

/// Scenario resolved into core types, ready to run.
pub struct Built {
    pub system: SystemConfig,
    pub green: GreenMatrix,
    pub spec: PotentialSpec,
    pub data: InitialData,
    pub free: Option<FreeFieldEvaluator>,
    pub targets: Option<Vec<ManufacturedTarget>>,
    pub params: SolverParams,
    pub horizon: f64,
}

fn c(v: [f64; 2]) -> Complex {
    Complex::new(v[0], v[1])
}

impl Scenario {
    pub fn load(path: &Path) -> Result<(Self, Vec<u8>)> {
        let bytes = std::fs::read(path).map_err(|e| {
            CliError::Validation(format!("cannot read {}: {e}", path.display()))
        })?;
        let scenario: Scenario = serde_json::from_slice(&bytes).map_err(|e| {
            CliError::Validation(format!(
                "{}:{}:{}: {e}",
                path.display(),
                e.line(),
                e.column()
            ))
        })?;
        Ok((scenario, bytes))
    }

    /// Validates and converts into core types. `truncation_override` is the
    /// `--no-truncation` flag.
    pub fn build(&self, truncation_override: Option<bool>) -> Result<Built> {
        let system_points = &self.system.points;
        let (system, green) = build_system(self.system.mass, system_points, self.system.eps_sep)
            .map_err(|e| CliError::Validation(e.to_string()))?;

        let family = match &self.potential.family {
            FamilySection::PowerLaw(sites) => PotentialFamily::PowerLaw(
                sites
                    .iter()
                    .map(|s| PowerLawSite {
                        gamma: s.gamma,
                        sigma: s.sigma,
                    })
                    .collect(),
            ),
            FamilySection::Polynomial(sites) => PotentialFamily::Polynomial(sites.clone()),
        };
        let mut spec = PotentialSpec::new(family, self.potential.a, self.potential.b)
            .map_err(|e| CliError::Validation(e.to_string()))?;
        spec.truncation_radius = self.potential.truncation_radius;
        if spec.n() != system.n() {
            return Err(CliError::Validation(format!(
                "potential has {} sites, system has {}",
                spec.n(),
                system.n()
            )));
        }

        let targets = match &self.manufactured {
            None => None,
            Some(section) => {
                if section.targets.len() != system.n() {
                    return Err(CliError::Validation(format!(
                        "manufactured section needs {} targets, got {}",
                        system.n(),
                        section.targets.len()
                    )));
                }
                Some(
                    section
                        .targets
                        .iter()
                        .map(|t| match t {
                            TargetSection::Constant { value } => ManufacturedTarget::Constant {
                                value: c(*value),
                            },
                            TargetSection::ExpDecay { amp, rate } => ManufacturedTarget::ExpDecay {
                                amp: c(*amp),
                                rate: *rate,
                            },
                            TargetSection::KinkedExp {
                                amp,
                                rate,
                                kink_time,
                                kick,
                            } => ManufacturedTarget::KinkedExp {
                                amp: c(*amp),
                                rate: *rate,
                                kink_time: *kink_time,
                                kick: c(*kick),
                            },
                        })
                        .collect(),
                )
            }
        };

        let data = if let Some(targets) = &targets {
            // Manufactured runs derive their initial data from the targets.
            let targets: &Vec<ManufacturedTarget> = targets;
            InitialData {
                zeta0: targets.iter().map(|t| t.value(0.0)).collect(),
                zeta0_dot: targets.iter().map(|t| t.derivative(0.0)).collect(),
                psi0_reg: Vec::new(),
                pi0_reg: Vec::new(),
            }
        } else {
            let gaussians = |list: &[GaussianSection]| -> Vec<GaussianComponent> {
                list.iter()
                    .map(|g| GaussianComponent {
                        amplitude: c(g.amplitude),
                        center: g.center,
                        width: g.width,
                    })
                    .collect()
            };
            let n = system.n();
            let pad = |v: &[[f64; 2]]| -> Vec<Complex> {
                if v.is_empty() {
                    vec![Complex::new(0.0, 0.0); n]
                } else {
                    v.iter().map(|&z| c(z)).collect()
                }
            };
            InitialData {
                zeta0: pad(&self.initial.zeta0),
                zeta0_dot: pad(&self.initial.zeta0_dot),
                psi0_reg: gaussians(&self.initial.psi0_reg),
                pi0_reg: gaussians(&self.initial.pi0_reg),
            }
        };
        data.validate(system.n())
            .map_err(|e| CliError::Validation(e.to_string()))?;

        if !(self.run.horizon > 0.0) {
            return Err(CliError::Validation(format!(
                "horizon must be positive, got {}",
                self.run.horizon
            )));
        }

        let quad = QuadratureParams {
            tolerance: self.quadrature.tolerance,
            panel_budget: self.quadrature.panel_budget,
            kmax_override: self.quadrature.kmax_override,
        };
        let free = if data.psi0_reg.is_empty() && data.pi0_reg.is_empty() {
            None
        } else {
            Some(
                FreeFieldEvaluator::new(system.mass(), &data, quad)
                    .map_err(|e| CliError::Validation(e.to_string()))?,
            )
        };

        let mut extra_breakpoints = self.run.extra_breakpoints.clone();
        if let Some(targets) = &targets {
            for t in targets.iter() {
                extra_breakpoints.extend(t.kink_times());
            }
        }

        let params = SolverParams {
            dt: self.run.dt,
            fixed_point_tol: self.run.fixed_point_tol,
            max_fixed_point_iters: self.run.max_fixed_point_iters,
            breakpoint_generations: self.run.breakpoint_generations,
            truncation_enabled: truncation_override.unwrap_or(self.run.truncation),
            max_halvings: 10,
            bound_slack: 1e-3,
            extra_breakpoints,
        };

        Ok(Built {
            system,
            green,
            spec,
            data,
            free,
            targets,
            params,
            horizon: self.run.horizon,
        })
    }

    /// Resolves a relative output path against the output directory.
    pub fn resolve_path(out_dir: &Path, name: &str) -> PathBuf {
        let p = Path::new(name);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            out_dir.join(p)
        }
    }
}
