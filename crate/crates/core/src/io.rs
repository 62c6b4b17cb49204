//! CSV file formats.
//!
//! | file | header |
//! |------|--------|
//! | energy trajectory | `t_fs,site1_cm1,...,siteN_cm1` (empty field = missing) |
//! | density trace | `t_fs,pop_1..pop_N,re_rho_m_n,im_rho_m_n,...` (1-based pairs) |
//! | propagator record | `t_fs,re_U_1_1,im_U_1_1,re_U_1_2,...` (row-major, 1-based) |
//! | spectral density | `omega_cm1,J_cm1` |
//! | spectrum | `omega_cm1,intensity` |
//! | correlation | `t_fs,C_cm2` |
//! | raw cosine transform | `omega_cm1,raw_cm1` |
//! | overlay | `omega_cm1,intensity,experiment` |
//!
//! Numbers are written with Rust's shortest round-trip formatting, so output
//! is byte-stable for identical values.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{DensityMatrix, EnergyTrajectory};
use crate::noise::{CorrelationFunction, SpectralDensity};
use crate::propagator::{DensityTrace, Method, PropagatorRecord, TraceMetadata};
use crate::spectra::Spectrum;

/// Largest tolerated fraction of missing samples per site.
pub const MAX_MISSING_FRACTION: f64 = 0.10;

fn parse_f64(field: &str, what: &str) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| Error::Format(format!("cannot parse {what} value {field:?}")))
}

/// Reads an energy trajectory; gaps are filled by linear interpolation
/// (nearest value at the ends).
pub fn read_trajectory_csv<R: Read>(reader: R, label: &str) -> Result<EnergyTrajectory> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() < 2 || &headers[0] != "t_fs" {
        return Err(Error::Format("trajectory header must start with t_fs followed by site columns".into()));
    }
    let n_sites = headers.len() - 1;
    let mut times = Vec::new();
    let mut columns: Vec<Vec<Option<f64>>> = vec![Vec::new(); n_sites];
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != headers.len() {
            return Err(Error::Format(format!("row {} has {} fields", times.len() + 1, rec.len())));
        }
        times.push(parse_f64(&rec[0], "time")?);
        for m in 0..n_sites {
            let f = rec[m + 1].trim();
            columns[m].push(if f.is_empty() { None } else { Some(parse_f64(f, "energy")?) });
        }
    }
    if times.len() < 2 {
        return Err(Error::Format("trajectory needs at least two rows".into()));
    }
    let dt = times[1] - times[0];
    if !(dt > 0.0) {
        return Err(Error::Format("time column must increase".into()));
    }
    for (k, t) in times.iter().enumerate() {
        if (t - times[0] - k as f64 * dt).abs() > 1e-6 * dt.max(1.0) {
            return Err(Error::Format(format!("non-uniform time step at row {}", k + 1)));
        }
    }
    let mut filled = Vec::with_capacity(n_sites);
    for (m, col) in columns.iter().enumerate() {
        let missing = col.iter().filter(|v| v.is_none()).count();
        if missing as f64 > MAX_MISSING_FRACTION * col.len() as f64 {
            return Err(Error::Format(format!(
                "site {} is missing {missing} of {} samples (more than 10%)",
                m + 1,
                col.len()
            )));
        }
        filled.push(fill_gaps(col)?);
    }
    EnergyTrajectory::from_columns(dt, &filled, label)
}

fn fill_gaps(col: &[Option<f64>]) -> Result<Vec<f64>> {
    let known: Vec<(usize, f64)> = col.iter().enumerate().filter_map(|(k, v)| v.map(|x| (k, x))).collect();
    if known.is_empty() {
        return Err(Error::Format("site column has no values".into()));
    }
    let mut out = Vec::with_capacity(col.len());
    let mut next = 0;
    for k in 0..col.len() {
        while next < known.len() && known[next].0 < k {
            next += 1;
        }
        let v = match (next.checked_sub(1).map(|p| known[p]), known.get(next).copied()) {
            (_, Some((i, x))) if i == k => x,
            (Some((i0, x0)), Some((i1, x1))) => x0 + (x1 - x0) * (k - i0) as f64 / (i1 - i0) as f64,
            (Some((_, x0)), None) => x0,
            (None, Some((_, x1))) => x1,
            (None, None) => unreachable!(),
        };
        out.push(v);
    }
    Ok(out)
}

pub fn write_trajectory_csv<W: Write>(traj: &EnergyTrajectory, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["t_fs".to_string()];
    header.extend((1..=traj.n_sites()).map(|m| format!("site{m}_cm1")));
    w.write_record(&header)?;
    for k in 0..traj.n_frames() {
        let mut row = vec![(k as f64 * traj.dt_frame()).to_string()];
        row.extend(traj.frames().row(k).iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// All 0-based upper-triangle pairs.
pub fn all_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|m| ((m + 1)..n).map(move |k| (m, k))).collect()
}

pub fn write_trace_csv<W: Write>(trace: &DensityTrace, pairs: &[(usize, usize)], writer: W) -> Result<()> {
    let n = trace.n_sites();
    if pairs.iter().any(|(m, k)| *m >= n || *k >= n || m == k) {
        return Err(Error::invalid("coherence pair out of range"));
    }
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["t_fs".to_string()];
    header.extend((1..=n).map(|m| format!("pop_{m}")));
    for (m, k) in pairs {
        header.push(format!("re_rho_{}_{}", m + 1, k + 1));
        header.push(format!("im_rho_{}_{}", m + 1, k + 1));
    }
    w.write_record(&header)?;
    for (t, rho) in trace.times.iter().zip(&trace.rho) {
        let mut row = vec![t.to_string()];
        row.extend(rho.populations().iter().map(f64::to_string));
        for (m, k) in pairs {
            let z = rho.elements()[(*m, *k)];
            row.push(z.re.to_string());
            row.push(z.im.to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a density trace. Every off-diagonal pair must be present so that the
/// full matrix can be rebuilt.
pub fn read_trace_csv<R: Read>(reader: R) -> Result<DensityTrace> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let n = headers.iter().filter(|h| h.starts_with("pop_")).count();
    if n == 0 || &headers[0] != "t_fs" {
        return Err(Error::Format("trace header must be t_fs,pop_1..pop_N,...".into()));
    }
    let mut pair_cols = Vec::new();
    for (m, k) in all_pairs(n) {
        let re = format!("re_rho_{}_{}", m + 1, k + 1);
        let im = format!("im_rho_{}_{}", m + 1, k + 1);
        let ri = headers.iter().position(|h| h == re);
        let ii = headers.iter().position(|h| h == im);
        match (ri, ii) {
            (Some(a), Some(b)) => pair_cols.push((m, k, a, b)),
            _ => return Err(Error::Format(format!("trace lacks coherence columns for pair ({}, {})", m + 1, k + 1))),
        }
    }
    let mut times = Vec::new();
    let mut rho = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        times.push(parse_f64(&rec[0], "time")?);
        let mut mat = DMatrix::<Complex64>::zeros(n, n);
        for m in 0..n {
            mat[(m, m)] = Complex64::new(parse_f64(&rec[m + 1], "population")?, 0.0);
        }
        for (m, k, a, b) in &pair_cols {
            let z = Complex64::new(parse_f64(&rec[*a], "coherence")?, parse_f64(&rec[*b], "coherence")?);
            mat[(*m, *k)] = z;
            mat[(*k, *m)] = z.conj();
        }
        rho.push(DensityMatrix::from_raw(mat));
    }
    if times.is_empty() {
        return Err(Error::Format("trace has no rows".into()));
    }
    Ok(DensityTrace {
        times,
        rho,
        metadata: TraceMetadata { method: Method::Md, temperature: None, seed: 0, n_traj: 0 },
    })
}

pub fn write_propagator_csv<W: Write>(record: &PropagatorRecord, writer: W) -> Result<()> {
    let n = record.n_sites();
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["t_fs".to_string()];
    for m in 1..=n {
        for k in 1..=n {
            header.push(format!("re_U_{m}_{k}"));
            header.push(format!("im_U_{m}_{k}"));
        }
    }
    w.write_record(&header)?;
    for (t, u) in record.times.iter().zip(&record.mean_u) {
        let mut row = vec![t.to_string()];
        for m in 0..n {
            for k in 0..n {
                row.push(u[(m, k)].re.to_string());
                row.push(u[(m, k)].im.to_string());
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_propagator_csv<R: Read>(reader: R) -> Result<PropagatorRecord> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let cols = headers.len().saturating_sub(1);
    let n = ((cols / 2) as f64).sqrt().round() as usize;
    if headers.len() < 3 || &headers[0] != "t_fs" || 2 * n * n != cols {
        return Err(Error::Format("propagator header must be t_fs followed by 2·N² columns".into()));
    }
    let mut times = Vec::new();
    let mut mean_u = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        times.push(parse_f64(&rec[0], "time")?);
        let mut u = DMatrix::<Complex64>::zeros(n, n);
        for m in 0..n {
            for k in 0..n {
                let base = 1 + 2 * (m * n + k);
                u[(m, k)] = Complex64::new(parse_f64(&rec[base], "U")?, parse_f64(&rec[base + 1], "U")?);
            }
        }
        mean_u.push(u);
    }
    Ok(PropagatorRecord { times, mean_u })
}

fn write_columns<W: Write>(header: [&str; 2], x: &[f64], y: &[f64], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(header)?;
    for (a, b) in x.iter().zip(y) {
        w.write_record([a.to_string(), b.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads any two-column numeric CSV with a header row.
pub fn read_two_columns<R: Read>(reader: R) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut x = Vec::new();
    let mut y = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() < 2 {
            return Err(Error::Format("expected two columns".into()));
        }
        x.push(parse_f64(&rec[0], "x")?);
        y.push(parse_f64(&rec[1], "y")?);
    }
    Ok((x, y))
}

pub fn write_spectral_density_csv<W: Write>(omega: &[f64], j: &[f64], writer: W) -> Result<()> {
    write_columns(["omega_cm1", "J_cm1"], omega, j, writer)
}

pub fn read_spectral_density_csv<R: Read>(reader: R) -> Result<SpectralDensity> {
    let (omega, j) = read_two_columns(reader)?;
    SpectralDensity::tabulated(omega, j)
}

pub fn write_spectrum_csv<W: Write>(spec: &Spectrum, writer: W) -> Result<()> {
    write_columns(["omega_cm1", "intensity"], &spec.omega, &spec.intensity, writer)
}

/// Unclipped cosine transform of a correlator, without thermal reweighting.
pub fn write_cosine_transform_csv<W: Write>(omega: &[f64], raw: &[f64], writer: W) -> Result<()> {
    write_columns(["omega_cm1", "raw_cm1"], omega, raw, writer)
}

/// Spectrum on its (shifted) grid next to experimental values resampled onto
/// the same grid.
pub fn write_overlay_csv<W: Write>(spec: &Spectrum, experiment: &[f64], writer: W) -> Result<()> {
    if experiment.len() != spec.omega.len() {
        return Err(Error::invalid("experiment must be resampled onto the spectrum grid"));
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["omega_cm1", "intensity", "experiment"])?;
    for ((x, y), e) in spec.omega.iter().zip(&spec.intensity).zip(experiment) {
        w.write_record([x.to_string(), y.to_string(), e.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_correlation_csv<W: Write>(corr: &CorrelationFunction, writer: W) -> Result<()> {
    let t: Vec<f64> = corr.lags().collect();
    write_columns(["t_fs", "C_cm2"], &t, &corr.values, writer)
}

/// Linear interpolation of tabulated `(x, y)` onto `grid`; zero outside.
pub fn resample(x: &[f64], y: &[f64], grid: &[f64]) -> Vec<f64> {
    grid.iter()
        .map(|g| {
            if x.len() < 2 || *g < x[0] || *g > x[x.len() - 1] {
                return 0.0;
            }
            let k = x.partition_point(|v| v <= g).clamp(1, x.len() - 1);
            let f = (g - x[k - 1]) / (x[k] - x[k - 1]);
            y[k - 1] + f * (y[k] - y[k - 1])
        })
        .collect()
}
