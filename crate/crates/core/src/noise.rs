//! Classical bath records and their statistics.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{EnergyTrajectory, SiteSystem, ThermalParams};
use crate::units::HBAR_CM1_FS;

/// Source of site-energy fluctuations for each trajectory of an ensemble.
#[derive(Debug, Clone)]
pub enum FluctuationModel {
    /// Windows of a recorded trajectory. The deviation of each site from its
    /// record-wide mean is added to the system's mean energy.
    Recorded {
        trajectory: Arc<EnergyTrajectory>,
        window: f64,
    },
    /// Independent stationary AR(1) processes per site.
    Ar1 {
        sigma: Vec<f64>,
        tau: Vec<f64>,
        dt: f64,
    },
    /// Gaussian offsets drawn once per trajectory and held fixed.
    StaticDisorder {
        sigma: Vec<f64>,
    },
    None,
}

impl FluctuationModel {
    /// AR(1) noise with one correlation time shared by all sites.
    pub fn ar1(sigma: Vec<f64>, tau: f64, dt: f64) -> Self {
        let n = sigma.len();
        FluctuationModel::Ar1 { sigma, tau: vec![tau; n], dt }
    }

    pub fn validate(&self, n_sites: usize) -> Result<()> {
        match self {
            FluctuationModel::Recorded { trajectory, window } => {
                if trajectory.n_sites() != n_sites {
                    return Err(Error::invalid(format!(
                        "recorded trajectory has {} sites, system has {n_sites}",
                        trajectory.n_sites()
                    )));
                }
                if !(*window > 0.0) || *window > trajectory.duration() + 1e-9 {
                    return Err(Error::invalid(format!(
                        "window {window} fs does not fit a {} fs record",
                        trajectory.duration()
                    )));
                }
            }
            FluctuationModel::Ar1 { sigma, tau, dt } => {
                if sigma.len() != n_sites || tau.len() != n_sites {
                    return Err(Error::invalid("AR(1) parameters must be given per site"));
                }
                check_sigmas(sigma)?;
                if tau.iter().any(|t| !(*t > 0.0)) {
                    return Err(Error::invalid("AR(1) tau must be positive"));
                }
                if !(*dt > 0.0) {
                    return Err(Error::invalid("AR(1) dt must be positive"));
                }
            }
            FluctuationModel::StaticDisorder { sigma } => {
                if sigma.len() != n_sites {
                    return Err(Error::invalid("static disorder sigma must be given per site"));
                }
                check_sigmas(sigma)?;
            }
            FluctuationModel::None => {}
        }
        Ok(())
    }

    /// Site energies on the integration grid `k * dt`, `k = 0..=n_steps`, as
    /// an `(n_steps + 1) × n_sites` matrix.
    pub(crate) fn realize<R: Rng>(
        &self,
        system: &SiteSystem,
        n_steps: usize,
        dt: f64,
        rng: &mut R,
    ) -> Result<DMatrix<f64>> {
        let n = system.n_sites();
        let means = system.mean_energies();
        let mut out = DMatrix::from_fn(n_steps + 1, n, |_, m| means[m]);
        let t_total = n_steps as f64 * dt;
        match self {
            FluctuationModel::None => {}
            FluctuationModel::StaticDisorder { sigma } => {
                for (m, s) in sigma.iter().enumerate() {
                    let z: f64 = rng.sample(StandardNormal);
                    out.column_mut(m).add_scalar_mut(s * z);
                }
            }
            FluctuationModel::Ar1 { sigma, tau, dt: dt_noise } => {
                let n_noise = (t_total / dt_noise).ceil() as usize + 1;
                let mut series = vec![0.0; n_noise.max(2)];
                for m in 0..n {
                    ar1_fill(sigma[m], tau[m], *dt_noise, rng, &mut series);
                    for k in 0..=n_steps {
                        out[(k, m)] += interpolate(&series, *dt_noise, k as f64 * dt);
                    }
                }
            }
            FluctuationModel::Recorded { trajectory, window } => {
                if *window + 1e-9 < t_total {
                    return Err(Error::invalid(format!(
                        "fluctuation window {window} fs is shorter than t_total {t_total} fs"
                    )));
                }
                let segment = sample_window(trajectory, *window, rng)?;
                let record_means = trajectory.site_means();
                let mut col = vec![0.0; segment.n_frames()];
                for m in 0..n {
                    for (k, v) in col.iter_mut().enumerate() {
                        *v = segment.frames()[(k, m)] - record_means[m];
                    }
                    for k in 0..=n_steps {
                        out[(k, m)] += interpolate(&col, segment.dt_frame(), k as f64 * dt);
                    }
                }
            }
        }
        Ok(out)
    }
}

fn check_sigmas(sigma: &[f64]) -> Result<()> {
    if sigma.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
        return Err(Error::invalid("sigma must be finite and non-negative"));
    }
    Ok(())
}

/// Linear interpolation of a uniformly sampled series at time `t`.
fn interpolate(series: &[f64], dt: f64, t: f64) -> f64 {
    let x = t / dt;
    let k = x.floor() as usize;
    if k + 1 >= series.len() {
        return series[series.len() - 1];
    }
    let frac = x - k as f64;
    if frac < 1e-12 {
        series[k]
    } else {
        series[k] + frac * (series[k + 1] - series[k])
    }
}

/// Fills `out` with a stationary zero-mean AR(1) realisation.
pub(crate) fn ar1_fill<R: Rng>(sigma: f64, tau: f64, dt: f64, rng: &mut R, out: &mut [f64]) {
    let phi = (-dt / tau).exp();
    let kick = sigma * (1.0 - phi * phi).sqrt();
    let mut x = sigma * rng.sample::<f64, _>(StandardNormal);
    for v in out.iter_mut() {
        *v = x;
        x = phi * x + kick * rng.sample::<f64, _>(StandardNormal);
    }
}

/// Zero-mean stationary Gaussian AR(1) series with marginal `N(0, σ²)` and
/// autocorrelation `exp(-t/τ)`:
///
/// `x_{k+1} = φ x_k + σ √(1 − φ²) ξ_k`, `φ = exp(−dt/τ)`.
pub fn ar1_generate(sigma: f64, tau: f64, dt: f64, n_steps: usize, seed: u64) -> Result<Vec<f64>> {
    if !(tau > 0.0) || !(dt > 0.0) {
        return Err(Error::invalid(format!("AR(1) needs tau > 0 and dt > 0 (tau = {tau}, dt = {dt})")));
    }
    check_sigmas(&[sigma])?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![0.0; n_steps];
    ar1_fill(sigma, tau, dt, &mut rng, &mut out);
    Ok(out)
}

/// Multi-site AR(1) trajectory, each site an independent stream of `seed`.
pub fn ar1_trajectory(
    means: &[f64],
    sigma: &[f64],
    tau: &[f64],
    dt: f64,
    n_frames: usize,
    seed: u64,
) -> Result<EnergyTrajectory> {
    if sigma.len() != means.len() || tau.len() != means.len() {
        return Err(Error::invalid("AR(1) parameters must be given per site"));
    }
    if tau.iter().any(|t| !(*t > 0.0)) || !(dt > 0.0) {
        return Err(Error::invalid("AR(1) needs tau > 0 and dt > 0"));
    }
    check_sigmas(sigma)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut columns = Vec::with_capacity(means.len());
    for m in 0..means.len() {
        rng.set_stream(m as u64);
        let mut col = vec![0.0; n_frames];
        ar1_fill(sigma[m], tau[m], dt, &mut rng, &mut col);
        col.iter_mut().for_each(|v| *v += means[m]);
        columns.push(col);
    }
    EnergyTrajectory::from_columns(dt, &columns, format!("ar1 seed={seed}"))
}

/// Number of frames spanned by a window of `window` fs.
fn window_frames(traj: &EnergyTrajectory, window: f64) -> Result<usize> {
    if !(window >= 0.0) {
        return Err(Error::invalid("window length must be non-negative"));
    }
    let len = (window / traj.dt_frame()).round() as usize + 1;
    if len > traj.n_frames() || window > traj.duration() + 1e-9 {
        return Err(Error::invalid(format!("window {window} fs longer than the {} fs trajectory", traj.duration())));
    }
    Ok(len.max(2))
}

/// Contiguous window with a uniformly random start frame.
pub fn sample_window<R: Rng + ?Sized>(
    traj: &EnergyTrajectory,
    window_length: f64,
    rng: &mut R,
) -> Result<EnergyTrajectory> {
    let len = window_frames(traj, window_length)?;
    let start = rng.random_range(0..=traj.n_frames() - len);
    traj.segment(start, len)
}

/// Destroys cross-site correlations by cyclically shifting every site but
/// the first by an independent non-zero offset.
pub fn decorrelate(traj: &EnergyTrajectory, seed: u64) -> Result<EnergyTrajectory> {
    let n_frames = traj.n_frames();
    let n_sites = traj.n_sites();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let src = traj.frames();
    let mut out = src.clone();
    for m in 1..n_sites {
        let offset = rng.random_range(1..n_frames);
        for k in 0..n_frames {
            out[((k + offset) % n_frames, m)] = src[(k, m)];
        }
    }
    EnergyTrajectory::new(traj.dt_frame(), out, format!("{} (decorrelated seed={seed})", traj.label))
}

/// Lagged bath correlator `C(kΔt)` in cm⁻².
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationFunction {
    pub dt_lag: f64,
    pub values: Vec<f64>,
    pub site_pair: (usize, usize),
    pub n_samples: usize,
}

impl CorrelationFunction {
    /// Autocorrelation given directly as values on a lag grid, e.g. from a
    /// closed form.
    pub fn from_values(dt_lag: f64, values: Vec<f64>) -> Result<Self> {
        if !(dt_lag > 0.0) || values.len() < 2 {
            return Err(Error::invalid("correlation needs dt_lag > 0 and at least two lags"));
        }
        Ok(Self { dt_lag, values, site_pair: (0, 0), n_samples: 0 })
    }

    pub fn is_autocorrelation(&self) -> bool {
        self.site_pair.0 == self.site_pair.1
    }

    pub fn lags(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(move |k| k as f64 * self.dt_lag)
    }

    /// First lag at which `C(t)/C(0)` drops below `level`.
    pub fn decay_time(&self, level: f64) -> Option<f64> {
        let c0 = *self.values.first()?;
        self.lags().zip(&self.values).find(|(_, c)| **c < level * c0).map(|(t, _)| t)
    }

    /// Pointwise scaling.
    pub fn scaled(&self, factor: f64) -> Self {
        Self { values: self.values.iter().map(|v| v * factor).collect(), ..self.clone() }
    }
}

/// Biased estimator `C(kΔt) = (1/N) Σ_j δε_m(t_j + kΔt) δε_n(t_j)`.
pub fn correlation(traj: &EnergyTrajectory, m: usize, n: usize, max_lag: f64) -> Result<CorrelationFunction> {
    if m >= traj.n_sites() || n >= traj.n_sites() {
        return Err(Error::invalid("site index out of range"));
    }
    if !(max_lag >= 0.0) || max_lag >= traj.duration() {
        return Err(Error::invalid(format!("max lag {max_lag} fs must be below the {} fs record", traj.duration())));
    }
    let big_n = traj.n_frames();
    let max_k = (max_lag / traj.dt_frame()).round() as usize;
    let dm = centered(traj, m);
    let dn = centered(traj, n);
    let values = (0..=max_k)
        .map(|k| {
            let s: f64 = dm[k..].iter().zip(&dn[..big_n - k]).map(|(a, b)| a * b).sum();
            s / big_n as f64
        })
        .collect();
    Ok(CorrelationFunction { dt_lag: traj.dt_frame(), values, site_pair: (m, n), n_samples: big_n })
}

fn centered(traj: &EnergyTrajectory, m: usize) -> Vec<f64> {
    let col = traj.frames().column(m);
    let mean = col.mean();
    col.iter().map(|v| v - mean).collect()
}

/// Fits `C(t)/C(0) = exp(-t/τ)` by least squares on `log C` over lags up to
/// `t_max` and returns τ in fs.
pub fn fit_correlation_time(corr: &CorrelationFunction, t_max: f64) -> Result<f64> {
    let c0 = corr.values[0];
    if !(c0 > 0.0) {
        return Err(Error::invalid("correlation has no variance"));
    }
    let pts: Vec<(f64, f64)> = corr
        .lags()
        .zip(&corr.values)
        .take_while(|(t, _)| *t <= t_max + 1e-9)
        .filter(|(_, c)| **c > 0.0)
        .map(|(t, c)| (t, (c / c0).ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::invalid("not enough positive lags to fit a correlation time"));
    }
    // slope through the origin: log C(t)/C(0) = -t/τ
    let sxx: f64 = pts.iter().map(|(t, _)| t * t).sum();
    let sxy: f64 = pts.iter().map(|(t, y)| t * y).sum();
    let slope = sxy / sxx;
    if !(slope < 0.0) {
        return Err(Error::invalid("correlation does not decay"));
    }
    Ok(-1.0 / slope)
}

/// System-bath spectral density.
#[derive(Debug, Clone, PartialEq)]
pub enum SpectralDensity {
    /// `J(ω) = 2λ γ_c ω / (ω² + γ_c²)`, with `cutoff_rate` in fs⁻¹.
    DrudeLorentz { lambda: f64, cutoff_rate: f64 },
    /// Piecewise-linear table on an increasing ω grid (cm⁻¹).
    Tabulated { omega: Vec<f64>, j: Vec<f64> },
}

impl SpectralDensity {
    pub const DEFAULT_LAMBDA_CM1: f64 = 35.0;
    pub const DEFAULT_CUTOFF_TIME_FS: f64 = 50.0;

    pub fn drude_lorentz(lambda: f64, cutoff_time_fs: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !(cutoff_time_fs > 0.0) {
            return Err(Error::invalid("Drude-Lorentz needs lambda >= 0 and a positive cutoff time"));
        }
        Ok(SpectralDensity::DrudeLorentz { lambda, cutoff_rate: 1.0 / cutoff_time_fs })
    }

    pub fn tabulated(omega: Vec<f64>, j: Vec<f64>) -> Result<Self> {
        if omega.len() != j.len() || omega.len() < 2 {
            return Err(Error::invalid("tabulated spectral density needs matching grids of length >= 2"));
        }
        if omega.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("spectral density grid must be strictly increasing"));
        }
        if omega.iter().zip(&j).any(|(w, v)| !v.is_finite() || (*w > 0.0 && *v < 0.0)) {
            return Err(Error::invalid("spectral density must be finite and non-negative for ω > 0"));
        }
        Ok(SpectralDensity::Tabulated { omega, j })
    }

    pub fn zero() -> Self {
        SpectralDensity::DrudeLorentz { lambda: 0.0, cutoff_rate: 1.0 / Self::DEFAULT_CUTOFF_TIME_FS }
    }

    /// `J(ω)` in cm⁻¹; zero for `ω ≤ 0` and outside a tabulated grid.
    pub fn eval(&self, omega: f64) -> f64 {
        if !(omega > 0.0) {
            return 0.0;
        }
        match self {
            SpectralDensity::DrudeLorentz { lambda, cutoff_rate } => {
                let gc = cutoff_rate * HBAR_CM1_FS;
                2.0 * lambda * gc * omega / (omega * omega + gc * gc)
            }
            SpectralDensity::Tabulated { omega: grid, j } => {
                if omega < grid[0] || omega > grid[grid.len() - 1] {
                    return 0.0;
                }
                let k = grid.partition_point(|w| *w <= omega).min(grid.len() - 1).max(1);
                let (w0, w1) = (grid[k - 1], grid[k]);
                let v = j[k - 1] + (omega - w0) / (w1 - w0) * (j[k] - j[k - 1]);
                v.max(0.0)
            }
        }
    }
}

/// Evaluates a Drude-Lorentz spectral density.
pub fn drude_lorentz_eval(sd: &SpectralDensity, omega: f64) -> Result<f64> {
    match sd {
        SpectralDensity::DrudeLorentz { .. } => Ok(sd.eval(omega)),
        SpectralDensity::Tabulated { .. } => Err(Error::invalid("expected a Drude-Lorentz spectral density")),
    }
}

/// Apodised cosine transform `(2/πℏ) ∫₀^T C(t) w(t) cos(ωt/ℏ) dt` on `omega`
/// (cm⁻¹), trapezoidal over the available lags. `window` is the width `T_w`
/// of the half-Gaussian `exp(−t²/2T_w²)`; `None` uses half the lag range.
pub fn cosine_transform(corr: &CorrelationFunction, omega: &[f64], window: Option<f64>) -> Vec<f64> {
    let n = corr.values.len();
    let t_range = (n - 1) as f64 * corr.dt_lag;
    let tw = window.unwrap_or(0.5 * t_range);
    let weighted: Vec<f64> = corr.lags().zip(&corr.values).map(|(t, c)| c * (-t * t / (2.0 * tw * tw)).exp()).collect();
    omega
        .iter()
        .map(|w| {
            let freq = w / HBAR_CM1_FS;
            let mut acc = 0.0;
            for (k, c) in weighted.iter().enumerate() {
                let edge = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
                acc += edge * c * (freq * k as f64 * corr.dt_lag).cos();
            }
            2.0 / (PI * HBAR_CM1_FS) * acc * corr.dt_lag
        })
        .collect()
}

/// Spectral density from a bath autocorrelation:
/// `J(ω) = (2/πℏ) tanh(βℏω/2) ∫₀^∞ C(t) cos(ωt) dt`.
///
/// Negative values of the noisy transform are clipped to zero so the result
/// satisfies the [`SpectralDensity::Tabulated`] invariant; use
/// [`cosine_transform`] for the unclipped, un-reweighted transform.
pub fn spectral_density(
    corr: &CorrelationFunction,
    thermal: &ThermalParams,
    omega: &[f64],
    window: Option<f64>,
) -> Result<SpectralDensity> {
    if !corr.is_autocorrelation() {
        return Err(Error::invalid("spectral density requires an autocorrelation (m = n)"));
    }
    let raw = cosine_transform(corr, omega, window);
    let j = omega
        .iter()
        .zip(raw)
        .map(|(w, r)| if *w > 0.0 { ((thermal.beta() * w / 2.0).tanh() * r).max(0.0) } else { 0.0 })
        .collect();
    SpectralDensity::tabulated(omega.to_vec(), j)
}
