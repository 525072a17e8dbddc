//! Deterministic parallel sweeps. Work is split into independent chunks
//! evaluated by rayon and reassembled in index order, so results are bitwise
//! identical for every thread count.

use rayon::prelude::*;

use kgpoint_core::diagnostics::{grid_free_table, EnergyGridSpec, RegularFieldSamples};
use kgpoint_core::field::{FieldEvaluator, FieldSnapshot, SnapshotDomain};
use kgpoint_core::Complex;

use crate::{CliError, Result};

/// Builds a rayon pool with the requested thread count (0 or None = default).
pub fn build_pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        if t > 0 {
            builder = builder.num_threads(t);
        }
    }
    builder
        .build()
        .map_err(|e| CliError::Validation(format!("thread pool: {e}")))
}

/// Parallel version of the sequential regular-field grid sweep.
pub fn sample_regular_field_par(
    pool: &rayon::ThreadPool,
    field: &FieldEvaluator<'_>,
    grid: &EnergyGridSpec,
    t: f64,
) -> Result<RegularFieldSamples> {
    let res = grid.resolution;
    let table = grid_free_table(field, grid, t).map_err(CliError::Solver)?;
    let shell = 1e-9;
    let slabs: Vec<kgpoint_core::error::Result<Vec<(Complex, Complex)>>> = pool.install(|| {
        (0..res)
            .into_par_iter()
            .map(|i| {
                let mut slab = Vec::with_capacity(res * res);
                for j in 0..res {
                    for k in 0..res {
                        let p = grid.point(i, j, k);
                        let (v, d, _) = match &table {
                            Some(tab) => {
                                field.regular_pair_with_free(p, t, Some(shell), tab.eval(p)?)?
                            }
                            None => field.regular_pair(p, t, Some(shell))?,
                        };
                        slab.push((v, d));
                    }
                }
                Ok(slab)
            })
            .collect()
    });
    let count = res * res * res;
    let mut psi_reg = Vec::with_capacity(count);
    let mut psi_dot_reg = Vec::with_capacity(count);
    for slab in slabs {
        for (v, d) in slab.map_err(CliError::Solver)? {
            psi_reg.push(v);
            psi_dot_reg.push(d);
        }
    }
    Ok(RegularFieldSamples {
        psi_reg,
        psi_dot_reg,
    })
}

/// Boundary-condition residuals at the given times, parallel over times.
pub fn residual_series_par(
    pool: &rayon::ThreadPool,
    field: &FieldEvaluator<'_>,
    times: &[f64],
) -> Result<Vec<Vec<Complex>>> {
    let n = field.history().n();
    let rows: Vec<kgpoint_core::error::Result<Vec<Complex>>> = pool.install(|| {
        times
            .par_iter()
            .map(|&t| {
                let mut row = Vec::with_capacity(n);
                for j in 0..n {
                    row.push(field.boundary_residual(j, t)?);
                }
                Ok(row)
            })
            .collect()
    });
    rows.into_iter()
        .map(|r| r.map_err(CliError::Solver))
        .collect()
}

/// Parallel field snapshot (chunked over points, reassembled in order).
pub fn snapshot_par(
    pool: &rayon::ThreadPool,
    field: &FieldEvaluator<'_>,
    domain: SnapshotDomain,
    t: f64,
    with_derivative: bool,
    cone_exclusion: f64,
) -> Result<FieldSnapshot> {
    let len = domain.len();
    let chunk = 512usize;
    let chunks: Vec<kgpoint_core::error::Result<Vec<(Complex, Complex, bool)>>> =
        pool.install(|| {
            (0..len.div_ceil(chunk))
                .into_par_iter()
                .map(|ci| {
                    let lo = ci * chunk;
                    let hi = usize::min(lo + chunk, len);
                    let mut out = Vec::with_capacity(hi - lo);
                    for flat in lo..hi {
                        let x = domain.point(flat);
                        out.push(field.eval_field_with_derivative(x, t, cone_exclusion)?);
                    }
                    Ok(out)
                })
                .collect()
        });
    let mut values = Vec::with_capacity(len);
    let mut derivatives = with_derivative.then(|| Vec::with_capacity(len));
    let mut flagged = Vec::with_capacity(len);
    for chunk in chunks {
        for (v, d, fl) in chunk.map_err(CliError::Solver)? {
            values.push(v);
            if let Some(ders) = derivatives.as_mut() {
                ders.push(d);
            }
            flagged.push(fl);
        }
    }
    Ok(FieldSnapshot {
        domain,
        time: t,
        values,
        derivatives,
        cone_exclusion,
        flagged,
    })
}
