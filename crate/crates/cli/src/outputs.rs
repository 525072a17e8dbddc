//! Machine-readable run artifacts: CSV series, snapshot files and the JSON
//! run manifest. All numbers are written in shortest round-trip form, so
//! artifacts are bit-faithful and byte-stable across runs and thread counts.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use kgpoint_core::charges::ChargeHistory;
use kgpoint_core::diagnostics::EnergyReport;
use kgpoint_core::field::{FieldSnapshot, SnapshotDomain};

use crate::Result;

/// `charges.csv`: one row per solver node with the charge values, the charge
/// velocities and the boundary-condition residual magnitudes.
pub fn write_charges_csv(
    path: &Path,
    history: &ChargeHistory,
    residual_abs: &[Vec<f64>],
) -> Result<()> {
    let n = history.n();
    let mut out = String::new();
    out.push('t');
    for j in 1..=n {
        out.push_str(&format!(",re_zeta_{j},im_zeta_{j}"));
    }
    for j in 1..=n {
        out.push_str(&format!(",re_zdot_{j},im_zdot_{j}"));
    }
    for j in 1..=n {
        out.push_str(&format!(",residual_{j}_abs"));
    }
    out.push('\n');
    for (node, &t) in history.times().iter().enumerate() {
        out.push_str(&format!("{t}"));
        for j in 0..n {
            let z = history.value(node, j);
            out.push_str(&format!(",{},{}", z.re, z.im));
        }
        for j in 0..n {
            let z = history.deriv(node, j);
            out.push_str(&format!(",{},{}", z.re, z.im));
        }
        for j in 0..n {
            out.push_str(&format!(",{}", residual_abs[node][j]));
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// `residuals.csv`: complex residual per site per node.
pub fn write_residuals_csv(
    path: &Path,
    times: &[f64],
    residuals: &[Vec<kgpoint_core::Complex>],
) -> Result<()> {
    let n = residuals.first().map_or(0, |r| r.len());
    let mut out = String::new();
    out.push('t');
    for j in 1..=n {
        out.push_str(&format!(",re_residual_{j},im_residual_{j}"));
    }
    out.push('\n');
    for (row, &t) in times.iter().enumerate() {
        out.push_str(&format!("{t}"));
        for j in 0..n {
            let z = residuals[row][j];
            out.push_str(&format!(",{},{}", z.re, z.im));
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// `energy.csv`: the conserved-quantity time series.
pub fn write_energy_csv(path: &Path, report: &EnergyReport) -> Result<()> {
    let mut out = String::from("t,kinetic,gradient,mass_term,potential,total,est_error\n");
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.time, r.kinetic, r.gradient, r.mass_term, r.potential, r.total, r.est_error
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn snapshot_header(snapshot: &FieldSnapshot, binary: bool) -> String {
    let mut head = String::new();
    head.push_str("kgpoint snapshot\n");
    head.push_str(&format!("time {}\n", snapshot.time));
    head.push_str(&format!("cone_exclusion {}\n", snapshot.cone_exclusion));
    match &snapshot.domain {
        SnapshotDomain::Grid(g) => {
            head.push_str(&format!(
                "grid center {} {} {} half_width {} resolution {}\n",
                g.center[0], g.center[1], g.center[2], g.half_width, g.resolution
            ));
        }
        SnapshotDomain::Points(p) => {
            head.push_str(&format!("points {}\n", p.len()));
        }
    }
    head.push_str(&format!(
        "columns x y z re_psi im_psi{}\n",
        if snapshot.derivatives.is_some() {
            " re_psi_dot im_psi_dot"
        } else {
            ""
        }
    ));
    head.push_str(if binary { "format binary_f64_le\n" } else { "format text\n" });
    head.push_str("end_header\n");
    head
}

/// Plain-text snapshot: header block then one row per point.
pub fn write_snapshot_text(path: &Path, snapshot: &FieldSnapshot) -> Result<()> {
    let mut out = snapshot_header(snapshot, false);
    for i in 0..snapshot.values.len() {
        let p = snapshot.domain.point(i);
        let v = snapshot.values[i];
        out.push_str(&format!("{} {} {} {} {}", p[0], p[1], p[2], v.re, v.im));
        if let Some(d) = &snapshot.derivatives {
            out.push_str(&format!(" {} {}", d[i].re, d[i].im));
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Packed snapshot: the text header, then little-endian f64 rows in the same
/// column order as the text format.
pub fn write_snapshot_binary(path: &Path, snapshot: &FieldSnapshot) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    file.write_all(snapshot_header(snapshot, true).as_bytes())?;
    for i in 0..snapshot.values.len() {
        let p = snapshot.domain.point(i);
        let v = snapshot.values[i];
        let mut row = vec![p[0], p[1], p[2], v.re, v.im];
        if let Some(d) = &snapshot.derivatives {
            row.push(d[i].re);
            row.push(d[i].im);
        }
        for x in row {
            file.write_all(&x.to_le_bytes())?;
        }
    }
    file.flush()?;
    Ok(())
}

/// Run manifest: resolved parameters, invariant outcomes, artifact list.
#[derive(Debug, Serialize)]
pub struct Manifest {
    /// Git-style blob hash of the scenario file.
    pub scenario_hash: String,
    pub resolved: ResolvedParams,
    pub checks: Checks,
    pub artifacts: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct ResolvedParams {
    pub mass: f64,
    pub sites: usize,
    pub horizon: f64,
    pub dt: f64,
    pub truncation_enabled: bool,
    pub truncation_radius: Option<f64>,
    pub breakpoints: Vec<f64>,
    pub grid_nodes: usize,
    pub halvings: u32,
    pub max_corrector_iters: u32,
}

#[derive(Debug, Serialize)]
pub struct Checks {
    pub coercivity_sampled_ok: bool,
    pub apriori: Option<AprioriOutcome>,
    pub max_abs_charge: f64,
    pub max_residual_abs: Option<f64>,
    pub energy_relative_drift: Option<f64>,
    pub oracle_deviation: Option<f64>,
    pub oracle_tolerance: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct AprioriOutcome {
    pub max_abs: f64,
    pub radius: f64,
    pub margin: f64,
    pub pass: bool,
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    let mut text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Git blob hash (`sha1("blob <len>\0" + bytes)`) of the scenario content.
pub fn git_blob_hash(bytes: &[u8]) -> String {
    let mut payload = format!("blob {}\0", bytes.len()).into_bytes();
    payload.extend_from_slice(bytes);
    let digest = sha1(&payload);
    let mut out = String::with_capacity(40);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Minimal SHA-1 (provenance hashing only, not security).
fn sha1(data: &[u8]) -> [u8; 20] {
    let mut h: [u32; 5] = [0x67452301, 0xEFCDAB89, 0x98BADCFE, 0x10325476, 0xC3D2E1F0];
    let ml = (data.len() as u64) * 8;
    let mut msg = data.to_vec();
    msg.push(0x80);
    while msg.len() % 64 != 56 {
        msg.push(0);
    }
    msg.extend_from_slice(&ml.to_be_bytes());
    let mut w = [0u32; 80];
    for chunk in msg.chunks_exact(64) {
        for (i, word) in chunk.chunks_exact(4).enumerate() {
            w[i] = u32::from_be_bytes([word[0], word[1], word[2], word[3]]);
        }
        for i in 16..80 {
            w[i] = (w[i - 3] ^ w[i - 8] ^ w[i - 14] ^ w[i - 16]).rotate_left(1);
        }
        let (mut a, mut b, mut c, mut d, mut e) = (h[0], h[1], h[2], h[3], h[4]);
        for (i, &wi) in w.iter().enumerate() {
            let (f, k) = match i {
                0..=19 => ((b & c) | ((!b) & d), 0x5A827999u32),
                20..=39 => (b ^ c ^ d, 0x6ED9EBA1),
                40..=59 => ((b & c) | (b & d) | (c & d), 0x8F1BBCDC),
                _ => (b ^ c ^ d, 0xCA62C1D6),
            };
            let temp = a
                .rotate_left(5)
                .wrapping_add(f)
                .wrapping_add(e)
                .wrapping_add(k)
                .wrapping_add(wi);
            e = d;
            d = c;
            c = b.rotate_left(30);
            b = a;
            a = temp;
        }
        h[0] = h[0].wrapping_add(a);
        h[1] = h[1].wrapping_add(b);
        h[2] = h[2].wrapping_add(c);
        h[3] = h[3].wrapping_add(d);
        h[4] = h[4].wrapping_add(e);
    }
    let mut out = [0u8; 20];
    for (i, word) in h.iter().enumerate() {
        out[i * 4..(i + 1) * 4].copy_from_slice(&word.to_be_bytes());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha1_known_vectors() {
        // sha1("abc") = a9993e364706816aba3e25717850c26c9cd0d89d
        let d = sha1(b"abc");
        let hex: String = d.iter().map(|b| format!("{b:02x}")).collect();
        assert_eq!(hex, "a9993e364706816aba3e25717850c26c9cd0d89d");
        // Empty string.
        let d = sha1(b"");
        let hex: String = d.iter().map(|b| format!("{b:02x}")).collect();
        assert_eq!(hex, "da39a3ee5e6b4b0d3255bfef95601890afd80709");
    }

    #[test]
    fn git_blob_hash_matches_git() {
        // `echo -n 'hello' | git hash-object --stdin`
        assert_eq!(
            git_blob_hash(b"hello"),
            "b6fc4c620b67d95f953a5c1c1230aaab5db5a1b0"
        );
    }
}
