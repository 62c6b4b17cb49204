//! Observables derived from density traces and cross-method comparison.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::propagator::DensityTrace;

/// Outcome of a lifetime measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Lifetime {
    Found { lifetime_fs: f64 },
    NotFound { reason: String },
}

impl Lifetime {
    pub fn value(&self) -> Option<f64> {
        match self {
            Lifetime::Found { lifetime_fs } => Some(*lifetime_fs),
            Lifetime::NotFound { .. } => None,
        }
    }
}

/// Local maxima of `values`, refined by parabolic interpolation. A leading
/// sample larger than its neighbour counts as a maximum.
pub fn envelope(times: &[f64], values: &[f64]) -> Vec<(f64, f64)> {
    let n = values.len();
    let mut out = Vec::new();
    if n >= 2 && values[0] > values[1] {
        out.push((times[0], values[0]));
    }
    for k in 1..n.saturating_sub(1) {
        let (a, b, c) = (values[k - 1], values[k], values[k + 1]);
        if b >= a && b > c {
            let denom = a - 2.0 * b + c;
            let (dt, peak) = if denom < 0.0 {
                let delta = 0.5 * (a - c) / denom;
                (delta, b - 0.25 * (a - c) * delta)
            } else {
                (0.0, b)
            };
            let step = if dt >= 0.0 { times[k + 1] - times[k] } else { times[k] - times[k - 1] };
            out.push((times[k] + dt * step, peak));
        }
    }
    out
}

/// Time after which the peak envelope of `values` stays below
/// `threshold × (largest envelope maximum)`.
pub fn envelope_lifetime(times: &[f64], values: &[f64], threshold: f64) -> Result<Lifetime> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::invalid(format!("threshold must lie in (0, 1), got {threshold}")));
    }
    if times.len() != values.len() {
        return Err(Error::invalid("times and values differ in length"));
    }
    let env = envelope(times, values);
    if env.len() < 3 {
        return Ok(Lifetime::NotFound { reason: format!("only {} envelope maxima", env.len()) });
    }
    let reference = env.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let level = threshold * reference;
    let last_above = env.iter().rposition(|p| p.1 >= level).expect("maximum is above its own fraction");
    if last_above + 1 == env.len() {
        return Ok(Lifetime::NotFound { reason: "envelope never falls below the threshold".into() });
    }
    let (t0, e0) = env[last_above];
    let (t1, e1) = env[last_above + 1];
    let t = t0 + (e0 - level) / (e0 - e1) * (t1 - t0);
    Ok(Lifetime::Found { lifetime_fs: t })
}

/// Lifetime of the pairwise coherence `2|ρ_mn(t)|` (0-based sites).
pub fn coherence_lifetime(trace: &DensityTrace, m: usize, n: usize, threshold: f64) -> Result<Lifetime> {
    let dim = trace.n_sites();
    if m == n || m >= dim || n >= dim {
        return Err(Error::invalid(format!("invalid coherence pair ({m}, {n}) for {dim} sites")));
    }
    envelope_lifetime(&trace.times, &trace.coherence_series(m, n), threshold)
}

/// Least-squares slope of dephasing rate against temperature.
pub fn dephasing_slope(temperatures: &[f64], rates: &[f64]) -> Result<f64> {
    if temperatures.len() != rates.len() || temperatures.len() < 2 {
        return Err(Error::invalid("need at least two (temperature, rate) pairs"));
    }
    let n = temperatures.len() as f64;
    let tm = temperatures.iter().sum::<f64>() / n;
    let rm = rates.iter().sum::<f64>() / n;
    let sxx: f64 = temperatures.iter().map(|t| (t - tm).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::invalid("temperatures are degenerate"));
    }
    let sxy: f64 = temperatures.iter().zip(rates).map(|(t, r)| (t - tm) * (r - rm)).sum();
    Ok(sxy / sxx)
}

/// Least-squares rate `k` of `values ≈ A exp(−k t)` over `[t_min, t_max]`.
pub fn fit_exponential_decay(times: &[f64], values: &[f64], t_min: f64, t_max: f64) -> Result<f64> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(t, v)| **t >= t_min && **t <= t_max && **v > 0.0)
        .map(|(t, v)| (*t, v.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::invalid("not enough positive points to fit a decay"));
    }
    let (ts, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    Ok(-dephasing_slope(&ts, &ys)?)
}

/// Observable compared between two traces (0-based sites).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Observable {
    Population { site: usize },
    Coherence { m: usize, n: usize },
    AllPopulations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceComparison {
    pub rmsd: f64,
    pub max_abs_dev: f64,
    pub time_of_max_dev: f64,
}

fn series(trace: &DensityTrace, obs: Observable) -> Result<Vec<Vec<f64>>> {
    let dim = trace.n_sites();
    match obs {
        Observable::Population { site } if site < dim => Ok(vec![trace.population_series(site)]),
        Observable::Coherence { m, n } if m != n && m < dim && n < dim => Ok(vec![trace.coherence_series(m, n)]),
        Observable::AllPopulations => Ok((0..dim).map(|s| trace.population_series(s)).collect()),
        _ => Err(Error::invalid(format!("observable {obs:?} is not valid for {dim} sites"))),
    }
}

/// RMSD and maximum deviation of an observable between two traces on the
/// same time grid.
pub fn compare_traces(a: &DensityTrace, b: &DensityTrace, obs: Observable) -> Result<TraceComparison> {
    if a.times.len() != b.times.len() || a.times.iter().zip(&b.times).any(|(x, y)| (x - y).abs() > 1e-9) {
        return Err(Error::invalid("traces are on different time grids"));
    }
    if a.n_sites() != b.n_sites() {
        return Err(Error::invalid("traces describe different numbers of sites"));
    }
    let sa = series(a, obs)?;
    let sb = series(b, obs)?;
    let mut sum_sq = 0.0;
    let mut count = 0usize;
    let mut max_dev = 0.0;
    let mut t_max = a.times.first().copied().unwrap_or(0.0);
    for (xa, xb) in sa.iter().zip(&sb) {
        for (k, (u, v)) in xa.iter().zip(xb).enumerate() {
            let d = (u - v).abs();
            sum_sq += d * d;
            count += 1;
            if d > max_dev {
                max_dev = d;
                t_max = a.times[k];
            }
        }
    }
    let rmsd = if count > 0 { (sum_sq / count as f64).sqrt() } else { 0.0 };
    // sqrt of a mean of equal squares can round one ulp above the maximum
    Ok(TraceComparison { rmsd: rmsd.min(max_dev), max_abs_dev: max_dev, time_of_max_dev: t_max })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DensityMatrix;
    use crate::propagator::{Method, TraceMetadata};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use num_complex::Complex64;
    use proptest::prelude::*;

    fn synthetic(omega: f64, decay: Option<f64>, t_max: f64) -> (Vec<f64>, Vec<f64>) {
        let times: Vec<f64> = (0..=(t_max as usize)).map(|k| k as f64).collect();
        let values = times.iter().map(|t| decay.map_or(1.0, |d| (-t / d).exp()) * (omega * t).cos().abs()).collect();
        (times, values)
    }

    #[test]
    fn damped_envelope_lifetime() {
        let (t, v) = synthetic(0.08, Some(200.0), 1500.0);
        let life = envelope_lifetime(&t, &v, (-1f64).exp()).unwrap().value().unwrap();
        assert!((life / 200.0 - 1.0).abs() < 0.1, "{life}");
    }

    #[test]
    fn undamped_is_not_found() {
        let (t, v) = synthetic(0.08, None, 1500.0);
        assert!(envelope_lifetime(&t, &v, 0.3).unwrap().value().is_none());
    }

    #[test]
    fn too_few_maxima() {
        let t: Vec<f64> = (0..100).map(|k| k as f64).collect();
        let v: Vec<f64> = t.iter().map(|x| (-x / 10.0).exp()).collect();
        assert!(matches!(envelope_lifetime(&t, &v, 0.5).unwrap(), Lifetime::NotFound { .. }));
        assert!(envelope_lifetime(&t, &v, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn lifetime_monotone_in_threshold(tau in 50.0f64..400.0, omega in 0.03f64..0.2, lo in 0.05f64..0.9, gap in 0.01f64..0.5) {
            let hi = (lo + gap).min(0.95);
            let (t, v) = synthetic(omega, Some(tau), 3000.0);
            let a = envelope_lifetime(&t, &v, lo).unwrap().value();
            let b = envelope_lifetime(&t, &v, hi).unwrap().value();
            if let (Some(a), Some(b)) = (a, b) {
                prop_assert!(a >= b - 1e-9);
            }
        }

        #[test]
        fn slope_ignores_constant_offset(c in -100.0f64..100.0, a in -2.0f64..2.0) {
            let temps = [77.0, 150.0, 220.0, 300.0];
            let rates: Vec<f64> = temps.iter().map(|t| a * t + (t * 0.37).sin()).collect();
            let shifted: Vec<f64> = rates.iter().map(|r| r + c).collect();
            let s0 = dephasing_slope(&temps, &rates).unwrap();
            let s1 = dephasing_slope(&temps, &shifted).unwrap();
            prop_assert!((s0 - s1).abs() < 1e-10);
        }
    }

    #[test]
    fn slope_examples() {
        assert_relative_eq!(dephasing_slope(&[77.0, 300.0], &[37.3, 145.5]).unwrap(), 0.4852, epsilon = 1e-4);
        assert_eq!(dephasing_slope(&[77.0, 300.0], &[0.0, 0.0]).unwrap(), 0.0);
        let t = [10.0, 50.0, 120.0, 300.0];
        let r: Vec<f64> = t.iter().map(|x| 0.52 * x).collect();
        assert!((dephasing_slope(&t, &r).unwrap() - 0.52).abs() < 1e-12);
        assert!(dephasing_slope(&[77.0, 77.0], &[1.0, 2.0]).is_err());
        assert!(dephasing_slope(&[77.0], &[1.0]).is_err());
    }

    fn trace_from_pops(pops: &[Vec<f64>]) -> DensityTrace {
        let rho = pops
            .iter()
            .map(|p| {
                DensityMatrix::from_raw(DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
                    p.len(),
                    p.iter().map(|x| Complex64::from(*x)),
                )))
            })
            .collect();
        DensityTrace {
            times: (0..pops.len()).map(|k| k as f64 * 10.0).collect(),
            rho,
            metadata: TraceMetadata { method: Method::Md, temperature: None, seed: 0, n_traj: 1 },
        }
    }

    #[test]
    fn compare_examples() {
        let a = trace_from_pops(&[vec![1.0, 0.0], vec![0.6, 0.4], vec![0.5, 0.5]]);
        let same = compare_traces(&a, &a, Observable::AllPopulations).unwrap();
        assert_eq!(same, TraceComparison { rmsd: 0.0, max_abs_dev: 0.0, time_of_max_dev: 0.0 });
        let b = trace_from_pops(&[vec![0.9, 0.1], vec![0.5, 0.5], vec![0.4, 0.6]]);
        let cmp = compare_traces(&a, &b, Observable::Population { site: 0 }).unwrap();
        assert_relative_eq!(cmp.max_abs_dev, 0.1, epsilon = 1e-12);
        assert_relative_eq!(cmp.rmsd, 0.1, epsilon = 1e-12);
        let short = trace_from_pops(&[vec![1.0, 0.0]]);
        assert!(compare_traces(&a, &short, Observable::AllPopulations).is_err());
        assert!(compare_traces(&a, &b, Observable::Coherence { m: 0, n: 0 }).is_err());
    }

    #[test]
    fn exponential_fit() {
        let t: Vec<f64> = (0..200).map(|k| k as f64).collect();
        let v: Vec<f64> = t.iter().map(|x| 0.5 * (-0.01 * x).exp()).collect();
        assert_relative_eq!(fit_exponential_decay(&t, &v, 0.0, 199.0).unwrap(), 0.01, epsilon = 1e-12);
    }
}
