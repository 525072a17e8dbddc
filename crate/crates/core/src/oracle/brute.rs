//! Brute-force reference solver for the charge system: forward Euler with
//! left-rectangle Volterra sums on a uniform fine grid.
//!
//! First order and slow, but unambiguous, and it shares no stepping or
//! quadrature code with [`crate::charges`]: kernel values are precomputed on
//! the uniform lattice, the source moments use left rectangles, delayed
//! arguments are snapped to the grid node below.

use alloc::{vec, vec::Vec};
use core::f64::consts::PI;

use crate::charges::{ChargeHistory, ExtraSource, TruncatedForce};
use crate::error::{Error, Result};
use crate::freefield::FreeFieldEvaluator;
use crate::model::{GreenMatrix, InitialData, PotentialSpec, SystemConfig};
use crate::sources::NODE_MERGE_TOL;
use crate::special::{tail_kernel, KernelParams};
use crate::Complex;

#[derive(Debug, Clone, PartialEq)]
pub struct BruteForceParams {
    pub fine_dt: f64,
    /// Magnitude treated as a blow-up.
    pub blowup_guard: f64,
    /// Optional truncation radius (match the run under test).
    pub truncation_radius: Option<f64>,
}

impl Default for BruteForceParams {
    fn default() -> Self {
        Self {
            fine_dt: 1e-5,
            blowup_guard: 1e6,
            truncation_radius: None,
        }
    }
}

/// Integrates the charge system over `[0, horizon]` on the uniform fine grid.
///
/// The regular free field enters through `free`; it is sampled on a coarse
/// auxiliary grid (step 1e-3) and interpolated by cubic Hermite, which is
/// orders of magnitude below the Euler error.
pub fn brute_force_charges(
    system: &SystemConfig,
    green: &GreenMatrix,
    data: &InitialData,
    spec: &PotentialSpec,
    free: Option<&FreeFieldEvaluator>,
    params: &BruteForceParams,
    horizon: f64,
    extra: Option<&dyn ExtraSource>,
) -> Result<ChargeHistory> {
    let n = system.n();
    data.validate(n)?;
    if !(horizon > 0.0) || !(params.fine_dt > 0.0) {
        return Err(Error::InvalidConfig(
            "horizon and fine_dt must be positive".into(),
        ));
    }
    let dt = params.fine_dt;
    let steps = libm::round(horizon / dt) as usize;
    if steps == 0 {
        return Err(Error::InvalidConfig("horizon shorter than one step".into()));
    }
    let m = system.mass();
    let kp = KernelParams::new(m)?;
    let force = TruncatedForce::new(&spec.family, params.truncation_radius);

    // Distinct distances (0 first) and kernel tables on the lattice.
    let mut distances = vec![0.0f64];
    let mut pair_class = vec![0usize; n * n];
    for j in 0..n {
        for k in 0..n {
            if j == k {
                continue;
            }
            let d = green.distance(j, k);
            let idx = match distances.iter().position(|&x| (x - d).abs() <= NODE_MERGE_TOL) {
                Some(i) => i,
                None => {
                    distances.push(d);
                    distances.len() - 1
                }
            };
            pair_class[j * n + k] = idx;
        }
    }
    let tables: Vec<Vec<f64>> = distances
        .iter()
        .map(|&d| (0..=steps).map(|i| tail_kernel(i as f64 * dt, d, kp)).collect())
        .collect();

    // Regular free field at the sites: coarse samples + Hermite interpolation.
    let lambda_reg = match free {
        Some(f) if !f.is_trivial() => Some(LambdaRegTable::build(f, system, horizon)?),
        _ => None,
    };

    // Left-rectangle moments per distance class, advanced incrementally.
    let mut m0 = vec![0.0f64; distances.len()];
    let mut m1 = vec![0.0f64; distances.len()];

    let mut times = Vec::with_capacity(steps + 1);
    let mut values: Vec<Complex> = Vec::with_capacity((steps + 1) * n);
    let mut derivs: Vec<Complex> = Vec::with_capacity((steps + 1) * n);
    times.push(0.0);
    values.extend_from_slice(&data.zeta0);

    let mut f_now = vec![Complex::new(0.0, 0.0); n];
    let mut zeta = data.zeta0.clone();
    let mut scratch = Vec::new();
    let mut force_out = vec![Complex::new(0.0, 0.0); n];
    let guard = params.blowup_guard;

    for i in 0..=steps {
        let t = i as f64 * dt;

        force.eval_into(&zeta, &mut scratch, &mut force_out);
        for j in 0..n {
            // lambda_j(t) from the closed forms with left-rectangle moments.
            let mut lam = match &lambda_reg {
                Some(table) => table.eval(j, t),
                None => Complex::new(0.0, 0.0),
            };
            {
                let z0 = data.zeta0[j];
                let zd = data.zeta0_dot[j];
                let lin = z0 + t * zd;
                lam += -(m * lin - zd) / (4.0 * PI) + m / (4.0 * PI) * (lin * m0[0] - zd * m1[0]);
            }
            for k in 0..n {
                if k == j {
                    continue;
                }
                let d = green.distance(j, k);
                let z0 = data.zeta0[k];
                let zd = data.zeta0_dot[k];
                let lin = z0 + t * zd;
                let mut cross = lin * green.entry(j, k);
                if t >= d {
                    cross -= (z0 + (t - d) * zd) / (4.0 * PI * d);
                }
                let cls = pair_class[j * n + k];
                cross += m / (4.0 * PI) * (lin * m0[cls] - zd * m1[cls]);
                lam += cross;
            }

            let mut v = m * zeta[j] + 4.0 * PI * lam - 4.0 * PI * force_out[j];

            // Sharp delay terms, snapped to the node below.
            for k in 0..n {
                if k == j {
                    continue;
                }
                let d = green.distance(j, k);
                if t >= d {
                    let l = libm::floor((t - d) / dt + 1e-9) as usize;
                    v += values[l * n + k] / d;
                }
            }

            // Volterra tails: left rectangles over the stored history.
            for k in 0..n {
                let cls = if k == j { 0 } else { pair_class[j * n + k] };
                let table = &tables[cls];
                let mut acc = Complex::new(0.0, 0.0);
                for l in 0..i {
                    let kv = table[i - l];
                    if kv != 0.0 {
                        acc += kv * values[l * n + k];
                    }
                }
                v -= m * acc * dt;
            }

            if let Some(extra) = extra {
                v += extra.eval(j, t);
            }
            f_now[j] = v;
        }

        derivs.extend_from_slice(&f_now);

        if i < steps {
            // Advance the moments to t_{i+1} with the left-rectangle sample.
            for (cls, table) in tables.iter().enumerate() {
                m0[cls] += table[i] * dt;
                m1[cls] += (i as f64 * dt) * table[i] * dt;
            }
            for j in 0..n {
                zeta[j] += dt * f_now[j];
            }
            let norm2: f64 = zeta.iter().map(|z| z.norm_sqr()).sum();
            if !norm2.is_finite() || norm2 > guard * guard {
                return Err(Error::OracleUnstable {
                    t: t + dt,
                    magnitude: libm::sqrt(norm2),
                });
            }
            times.push(t + dt);
            values.extend_from_slice(&zeta);
        }
    }

    Ok(ChargeHistory::from_parts(n, times, values, derivs, horizon))
}

/// Coarse Hermite table of the regular free field at the sites.
struct LambdaRegTable {
    n: usize,
    step: f64,
    values: Vec<Complex>,
    derivs: Vec<Complex>,
}

impl LambdaRegTable {
    fn build(free: &FreeFieldEvaluator, system: &SystemConfig, horizon: f64) -> Result<Self> {
        let step = 1e-3;
        let count = libm::ceil(horizon / step) as usize + 2;
        let n = system.n();
        let mut values = Vec::with_capacity(count * n);
        let mut derivs = Vec::with_capacity(count * n);
        for i in 0..count {
            let t = i as f64 * step;
            for j in 0..n {
                let out = free.eval(system.points()[j], t, true)?;
                values.push(out.value);
                derivs.push(out.derivative.unwrap());
            }
        }
        Ok(Self {
            n,
            step,
            values,
            derivs,
        })
    }

    fn eval(&self, j: usize, t: f64) -> Complex {
        let count = self.values.len() / self.n;
        let pos = t / self.step;
        let i = (libm::floor(pos) as usize).min(count - 2);
        let tau = pos - i as f64;
        let va = self.values[i * self.n + j];
        let vb = self.values[(i + 1) * self.n + j];
        let da = self.derivs[i * self.n + j];
        let db = self.derivs[(i + 1) * self.n + j];
        let t2 = tau * tau;
        let t3 = t2 * tau;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + tau;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * va + h01 * vb + self.step * (h10 * da + h11 * db)
    }
}
