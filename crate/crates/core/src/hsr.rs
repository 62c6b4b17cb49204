//! Haken-Strobl-Reineker pure-dephasing model with site-dependent rates.
//!
//! `dρ/dt = −(i/ħ)[H̄, ρ] − D ∘ ρ` with `D_mn = (γ_m + γ_n)/2` for `m ≠ n`
//! and `D_mm = 0`, the Lindblad generator of independent site projectors.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{check_hermitian, DensityMatrix};
use crate::propagator::{DensityTrace, Method, TraceMetadata};
use crate::units::HBAR_CM1_FS;

/// Largest internal RK4 step, fs.
pub const MAX_STEP_FS: f64 = 0.5;
/// Bound on `ω_max·h` per RK4 step; keeps the accumulated phase error of
/// the fastest Bohr frequency below ~1e-8 over picoseconds.
const PHASE_PER_STEP: f64 = 0.01;
const TRACE_DRIFT_LIMIT: f64 = 1e-6;

/// Markovian dephasing rate `2σ²τ/ħ²` in fs⁻¹ for a site with energy
/// standard deviation `sigma` (cm⁻¹) and correlation time `tau` (fs).
pub fn dephasing_rate(sigma: f64, tau: f64) -> Result<f64> {
    Ok(dephasing_width_cm1(sigma, tau)? / HBAR_CM1_FS)
}

/// The same rate expressed as an energy width `2σ²τ/ħ` in cm⁻¹.
pub fn dephasing_width_cm1(sigma: f64, tau: f64) -> Result<f64> {
    if !(sigma >= 0.0 && sigma.is_finite()) || !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::invalid(format!("dephasing rate needs sigma >= 0 and tau > 0 (got {sigma}, {tau})")));
    }
    Ok(2.0 * sigma * sigma * tau / HBAR_CM1_FS)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateProvenance {
    pub sigma: f64,
    pub tau: f64,
    pub temperature: Option<f64>,
}

/// Per-site pure-dephasing rates in fs⁻¹.
#[derive(Debug, Clone, PartialEq)]
pub struct DephasingRates {
    pub rates: Vec<f64>,
    pub provenance: Vec<Option<RateProvenance>>,
}

impl DephasingRates {
    /// Rates given directly in fs⁻¹.
    pub fn explicit(rates: Vec<f64>) -> Result<Self> {
        if rates.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
            return Err(Error::invalid("dephasing rates must be finite and non-negative"));
        }
        let provenance = vec![None; rates.len()];
        Ok(Self { rates, provenance })
    }

    /// Rates from per-site energy statistics.
    pub fn from_statistics(sigma: &[f64], tau: &[f64], temperature: Option<f64>) -> Result<Self> {
        if sigma.len() != tau.len() {
            return Err(Error::invalid("sigma and tau must be given for every site"));
        }
        let mut rates = Vec::with_capacity(sigma.len());
        let mut provenance = Vec::with_capacity(sigma.len());
        for (s, t) in sigma.iter().zip(tau) {
            rates.push(dephasing_rate(*s, *t)?);
            provenance.push(Some(RateProvenance { sigma: *s, tau: *t, temperature }));
        }
        Ok(Self { rates, provenance })
    }

    /// Energy-width form of each rate, cm⁻¹.
    pub fn widths_cm1(&self) -> Vec<f64> {
        self.rates.iter().map(|r| r * HBAR_CM1_FS).collect()
    }
}

struct Generator<'a> {
    h: &'a DMatrix<f64>,
    damping: DMatrix<f64>,
}

impl Generator<'_> {
    fn apply(&self, rho: &DMatrix<Complex64>, out: &mut DMatrix<Complex64>) {
        let n = rho.nrows();
        let scale = Complex64::new(0.0, -1.0 / HBAR_CM1_FS);
        for i in 0..n {
            for j in 0..n {
                let mut comm = Complex64::new(0.0, 0.0);
                for k in 0..n {
                    comm += rho[(k, j)] * self.h[(i, k)] - rho[(i, k)] * self.h[(k, j)];
                }
                out[(i, j)] = scale * comm - rho[(i, j)] * self.damping[(i, j)];
            }
        }
    }
}

/// Integrates the HSR equation from `rho0` at `t_grid[0]` and records `ρ` at
/// every grid time with fixed-step RK4 (step ≤ 0.5 fs, smaller when the
/// Hamiltonian's spectral width demands it).
pub fn hsr_propagate(
    rho0: &DensityMatrix,
    h_mean: &DMatrix<f64>,
    rates: &DephasingRates,
    t_grid: &[f64],
) -> Result<DensityTrace> {
    let n = rho0.dim();
    check_hermitian(h_mean)?;
    if h_mean.nrows() != n || rates.rates.len() != n {
        return Err(Error::invalid("density matrix, Hamiltonian and rates must share a dimension"));
    }
    if t_grid.is_empty() || t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("time grid must be non-empty and strictly increasing"));
    }
    let damping = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { 0.5 * (rates.rates[i] + rates.rates[j]) });
    let eig = nalgebra::SymmetricEigen::new(h_mean.clone()).eigenvalues;
    let spread = eig.max() - eig.min();
    let fastest = spread / HBAR_CM1_FS + rates.rates.iter().cloned().fold(0.0, f64::max);
    let max_step = if fastest > 0.0 { MAX_STEP_FS.min(PHASE_PER_STEP / fastest) } else { MAX_STEP_FS };
    let gen = Generator { h: h_mean, damping };

    let mut rho = rho0.elements().clone();
    let mut k1 = DMatrix::zeros(n, n);
    let mut k2 = DMatrix::zeros(n, n);
    let mut k3 = DMatrix::zeros(n, n);
    let mut k4 = DMatrix::zeros(n, n);
    let mut out = Vec::with_capacity(t_grid.len());
    out.push(DensityMatrix::from_raw(rho.clone()));
    for w in t_grid.windows(2) {
        let span = w[1] - w[0];
        let n_sub = (span / max_step).ceil().max(1.0) as usize;
        let h = Complex64::from(span / n_sub as f64);
        let half = h * 0.5;
        for _ in 0..n_sub {
            gen.apply(&rho, &mut k1);
            gen.apply(&(&rho + &k1 * half), &mut k2);
            gen.apply(&(&rho + &k2 * half), &mut k3);
            gen.apply(&(&rho + &k3 * h), &mut k4);
            rho += (&k1 + (&k2 + &k3) * Complex64::from(2.0) + &k4) * (h / 6.0);
        }
        let tr = rho.trace();
        if (tr.re - 1.0).abs() > TRACE_DRIFT_LIMIT || tr.im.abs() > TRACE_DRIFT_LIMIT || !tr.re.is_finite() {
            return Err(Error::Unstable(format!("trace drifted to {tr} at t = {} fs", w[1])));
        }
        out.push(DensityMatrix::from_raw(rho.clone()));
    }
    Ok(DensityTrace {
        times: t_grid.to_vec(),
        rho: out,
        metadata: TraceMetadata { method: Method::Hsr, temperature: None, seed: 0, n_traj: 0 },
    })
}
