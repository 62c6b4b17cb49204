//! Stochastic Schrödinger propagation and ensemble averaging.
//!
//! Each trajectory sees its own realisation of the site-energy fluctuations
//! and evolves unitarily under a piecewise-constant Hamiltonian. The reduced
//! density matrix is the plain average of the resulting pure states.
//!
//! Trajectories are grouped into fixed-size chunks that run in parallel; the
//! chunk partial sums are always added in chunk order, so the result is
//! bit-identical for any number of worker threads.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_hermitian, eigen_unchecked, DensityMatrix, ExcitonBasis, PureState, SiteSystem};
use crate::noise::{FluctuationModel, SpectralDensity};
use crate::qjc;
use crate::units::HBAR_CM1_FS;

const CHUNK: usize = 8;
const COMPONENT_CUTOFF: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "MD")]
    Md,
    #[serde(rename = "QJC")]
    Qjc,
    #[serde(rename = "HSR")]
    Hsr,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Md => "MD",
            Method::Qjc => "QJC",
            Method::Hsr => "HSR",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    /// Excitation localised on one site (0-based).
    Site(usize),
    Density(DensityMatrix),
}

impl InitialState {
    pub fn density(&self, n: usize) -> Result<DensityMatrix> {
        match self {
            InitialState::Site(m) => Ok(PureState::site(n, *m)?.to_density()),
            InitialState::Density(rho) => {
                if rho.dim() != n {
                    return Err(Error::invalid("initial density matrix has the wrong dimension"));
                }
                Ok(rho.clone())
            }
        }
    }

    /// `(weight, state)` decomposition used to seed every trajectory.
    fn components(&self, n: usize) -> Result<Vec<(f64, DVector<Complex64>)>> {
        match self {
            InitialState::Site(m) => Ok(vec![(1.0, PureState::site(n, *m)?.into_raw())]),
            InitialState::Density(rho) => {
                if rho.dim() != n {
                    return Err(Error::invalid("initial density matrix has the wrong dimension"));
                }
                Ok(rho.pure_components(COMPONENT_CUTOFF).into_iter().map(|(w, s)| (w, s.into_raw())).collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Integration step, fs.
    pub dt: f64,
    pub t_total: f64,
    /// Spacing of recorded output times, fs; must be a multiple of `dt`.
    pub output_interval: f64,
    pub n_traj: usize,
    pub seed: u64,
    pub method: Method,
    pub initial_state: InitialState,
    pub record_propagator: bool,
}

impl SimConfig {
    pub fn new(dt: f64, t_total: f64, n_traj: usize, seed: u64) -> Self {
        Self {
            dt,
            t_total,
            output_interval: dt,
            n_traj,
            seed,
            method: Method::Md,
            initial_state: InitialState::Site(0),
            record_propagator: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_total >= self.dt) {
            return Err(Error::invalid(format!("t_total ({}) must be at least dt ({})", self.t_total, self.dt)));
        }
        if self.n_traj == 0 {
            return Err(Error::invalid("n_traj must be at least 1"));
        }
        self.stride()?;
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_total / self.dt).round() as usize
    }

    fn stride(&self) -> Result<usize> {
        let ratio = self.output_interval / self.dt;
        let stride = ratio.round();
        if !(stride >= 1.0) || (ratio - stride).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::invalid(format!(
                "output_interval ({}) must be a positive multiple of dt ({})",
                self.output_interval, self.dt
            )));
        }
        Ok(stride as usize)
    }

    pub fn output_times(&self) -> Vec<f64> {
        let stride = self.stride().unwrap_or(1);
        (0..=self.n_steps() / stride).map(|k| (k * stride) as f64 * self.dt).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMetadata {
    pub method: Method,
    pub temperature: Option<f64>,
    pub seed: u64,
    pub n_traj: usize,
}

/// Ensemble-averaged reduced density matrix on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityTrace {
    pub times: Vec<f64>,
    pub rho: Vec<DensityMatrix>,
    pub metadata: TraceMetadata,
}

impl DensityTrace {
    pub fn n_sites(&self) -> usize {
        self.rho.first().map_or(0, DensityMatrix::dim)
    }

    /// Site populations at output index `k`.
    pub fn populations(&self, k: usize) -> Vec<f64> {
        self.rho[k].populations()
    }

    /// Population of `site` over time.
    pub fn population_series(&self, site: usize) -> Vec<f64> {
        self.rho.iter().map(|r| r.elements()[(site, site)].re).collect()
    }

    /// `2|ρ_mn(t)|` over time.
    pub fn coherence_series(&self, m: usize, n: usize) -> Vec<f64> {
        self.rho.iter().map(|r| 2.0 * r.elements()[(m, n)].norm()).collect()
    }
}

/// Ensemble-averaged propagator `⟨U(t, 0)⟩` in the site basis.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagatorRecord {
    pub times: Vec<f64>,
    pub mean_u: Vec<DMatrix<Complex64>>,
}

impl PropagatorRecord {
    pub fn n_sites(&self) -> usize {
        self.mean_u.first().map_or(0, DMatrix::nrows)
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleResult {
    pub trace: DensityTrace,
    pub propagator: Option<PropagatorRecord>,
}

/// Single-trajectory output of [`run_trajectory`].
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub states: Vec<PureState>,
    /// `U(t, 0)` at every output time, present when requested in the config.
    pub propagators: Vec<DMatrix<Complex64>>,
}

/// Generator for stream `stream` of trajectory `index`: ChaCha8 keyed by the
/// master seed with the stream id derived from the trajectory index, so
/// trajectories never share random numbers and their order is irrelevant.
pub(crate) fn trajectory_rng(seed: u64, index: usize, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((index as u64) * 2 + stream);
    rng
}

/// Unitary step factors `exp(-i E_M dt / ħ)` for a basis.
#[inline]
pub(crate) fn step_phases(basis: &ExcitonBasis, dt: f64, out: &mut Vec<Complex64>) {
    out.clear();
    out.extend(basis.energies.iter().map(|e| Complex64::cis(-e * dt / HBAR_CM1_FS)));
}

/// `a = Vᵀ ψ` for a real orthogonal `V`.
#[inline]
pub(crate) fn to_eigen(basis: &ExcitonBasis, psi: &DVector<Complex64>, a: &mut [Complex64]) {
    let v = &basis.coefficients;
    let n = psi.len();
    for (big_m, am) in a.iter_mut().enumerate() {
        let col = v.column(big_m);
        let mut acc = Complex64::new(0.0, 0.0);
        for m in 0..n {
            acc += psi[m] * col[m];
        }
        *am = acc;
    }
}

/// `ψ = V a`.
#[inline]
pub(crate) fn from_eigen(basis: &ExcitonBasis, a: &[Complex64], psi: &mut DVector<Complex64>) {
    let v = &basis.coefficients;
    psi.fill(Complex64::new(0.0, 0.0));
    for (big_m, am) in a.iter().enumerate() {
        let col = v.column(big_m);
        for m in 0..psi.len() {
            psi[m] += am * col[m];
        }
    }
}

#[inline]
fn apply_unitary(basis: &ExcitonBasis, phases: &[Complex64], psi: &mut DVector<Complex64>, scratch: &mut [Complex64]) {
    to_eigen(basis, psi, scratch);
    for (a, p) in scratch.iter_mut().zip(phases) {
        *a *= p;
    }
    from_eigen(basis, scratch, psi);
}

/// `V diag(phases) Vᵀ`.
fn step_matrix(basis: &ExcitonBasis, phases: &[Complex64]) -> DMatrix<Complex64> {
    let v = &basis.coefficients;
    let n = v.nrows();
    DMatrix::from_fn(n, n, |i, j| {
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 0..n {
            acc += phases[k] * (v[(i, k)] * v[(j, k)]);
        }
        acc
    })
}

/// One exact exponential step `ψ' = exp(−i H dt/ħ) ψ` via eigendecomposition.
pub fn step_unitary(psi: &PureState, h: &DMatrix<f64>, dt: f64) -> Result<PureState> {
    check_hermitian(h)?;
    if h.nrows() != psi.dim() {
        return Err(Error::invalid("state and Hamiltonian dimensions differ"));
    }
    let basis = eigen_unchecked(h.clone());
    let mut phases = Vec::new();
    step_phases(&basis, dt, &mut phases);
    let mut out = psi.amplitudes().clone();
    let mut scratch = vec![Complex64::new(0.0, 0.0); psi.dim()];
    apply_unitary(&basis, &phases, &mut out, &mut scratch);
    Ok(PureState::from_raw(out))
}

struct Plan<'a> {
    system: &'a SiteSystem,
    fluct: &'a FluctuationModel,
    n_steps: usize,
    stride: usize,
    n_out: usize,
    dt: f64,
    seed: u64,
    components: Vec<(f64, DVector<Complex64>)>,
    record_u: bool,
    jumps: Option<&'a SpectralDensity>,
}

impl<'a> Plan<'a> {
    fn new(
        system: &'a SiteSystem,
        fluct: &'a FluctuationModel,
        config: &SimConfig,
        jumps: Option<&'a SpectralDensity>,
    ) -> Result<Self> {
        config.validate()?;
        fluct.validate(system.n_sites())?;
        if jumps.is_some() && config.record_propagator {
            return Err(Error::invalid("propagator records are only defined for unitary (MD) dynamics"));
        }
        let stride = config.stride()?;
        let n_steps = config.n_steps();
        Ok(Self {
            system,
            fluct,
            n_steps,
            stride,
            n_out: n_steps / stride + 1,
            dt: config.dt,
            seed: config.seed,
            components: config.initial_state.components(system.n_sites())?,
            record_u: config.record_propagator,
            jumps,
        })
    }

    /// Integrates trajectory `index`, calling `record` at every output time
    /// with the evolved components and (optionally) `U(t, 0)`.
    fn integrate<F>(&self, index: usize, mut record: F) -> Result<()>
    where
        F: FnMut(usize, &[DVector<Complex64>], Option<&DMatrix<Complex64>>),
    {
        let n = self.system.n_sites();
        let mut noise_rng = trajectory_rng(self.seed, index, 0);
        let mut jump_rng = trajectory_rng(self.seed, index, 1);
        let energies = self.fluct.realize(self.system, self.n_steps, self.dt, &mut noise_rng)?;

        let mut states: Vec<DVector<Complex64>> = self.components.iter().map(|(_, s)| s.clone()).collect();
        let mut u = self.record_u.then(|| DMatrix::<Complex64>::identity(n, n));
        record(0, &states, u.as_ref());

        let mut h = DMatrix::zeros(n, n);
        let mut row = vec![0.0; n];
        let mut phases = Vec::with_capacity(n);
        let mut scratch = vec![Complex64::new(0.0, 0.0); n];
        for k in 0..self.n_steps {
            for (m, e) in row.iter_mut().enumerate() {
                *e = energies[(k, m)];
            }
            self.system.fill_hamiltonian(&row, &mut h);
            let basis = eigen_unchecked(h.clone());
            step_phases(&basis, self.dt, &mut phases);
            match self.jumps {
                None => {
                    for psi in states.iter_mut() {
                        apply_unitary(&basis, &phases, psi, &mut scratch);
                    }
                }
                Some(sd) => {
                    let rates = qjc::rates_unchecked(&basis, sd);
                    for psi in states.iter_mut() {
                        qjc::mcwf_apply(&basis, &phases, &rates, self.dt, psi, &mut scratch, &mut jump_rng)?;
                    }
                }
            }
            if let Some(u) = u.as_mut() {
                *u = step_matrix(&basis, &phases) * &*u;
            }
            if (k + 1) % self.stride == 0 {
                record((k + 1) / self.stride, &states, u.as_ref());
            }
        }
        Ok(())
    }
}

struct Accumulator {
    rho: Vec<DMatrix<Complex64>>,
    u: Option<Vec<DMatrix<Complex64>>>,
}

impl Accumulator {
    fn new(n: usize, n_out: usize, with_u: bool) -> Self {
        Self { rho: vec![DMatrix::zeros(n, n); n_out], u: with_u.then(|| vec![DMatrix::zeros(n, n); n_out]) }
    }

    fn add(&mut self, other: &Accumulator) {
        for (a, b) in self.rho.iter_mut().zip(&other.rho) {
            *a += b;
        }
        if let (Some(a), Some(b)) = (self.u.as_mut(), other.u.as_ref()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

fn accumulate_outer(target: &mut DMatrix<Complex64>, weight: f64, psi: &DVector<Complex64>) {
    let n = psi.len();
    for j in 0..n {
        let cj = psi[j].conj() * weight;
        for i in 0..=j {
            target[(i, j)] += psi[i] * cj;
        }
    }
}

fn run_chunk(plan: &Plan<'_>, range: std::ops::Range<usize>) -> Result<Accumulator> {
    let n = plan.system.n_sites();
    let mut acc = Accumulator::new(n, plan.n_out, plan.record_u);
    for index in range {
        plan.integrate(index, |k, states, u| {
            for ((w, _), psi) in plan.components.iter().zip(states) {
                accumulate_outer(&mut acc.rho[k], *w, psi);
            }
            if let (Some(sum), Some(u)) = (acc.u.as_mut(), u) {
                sum[k] += u;
            }
        })?;
    }
    Ok(acc)
}

pub(crate) fn ensemble(
    system: &SiteSystem,
    fluct: &FluctuationModel,
    config: &SimConfig,
    jumps: Option<&SpectralDensity>,
    method: Method,
) -> Result<EnsembleResult> {
    let plan = Plan::new(system, fluct, config, jumps)?;
    let n = system.n_sites();
    let chunks: Vec<std::ops::Range<usize>> =
        (0..config.n_traj).step_by(CHUNK).map(|s| s..(s + CHUNK).min(config.n_traj)).collect();
    // Partial sums only need to stay in chunk order; the batch width just
    // bounds how many partial accumulators are alive at once.
    let batch = (2 * rayon::current_num_threads()).max(1);
    let mut total = Accumulator::new(n, plan.n_out, plan.record_u);
    for group in chunks.chunks(batch) {
        let partials: Vec<Result<Accumulator>> = group.par_iter().map(|r| run_chunk(&plan, r.clone())).collect();
        for p in partials {
            total.add(&p?);
        }
    }

    let scale = Complex64::from(1.0 / config.n_traj as f64);
    let times = config.output_times();
    let rho = total
        .rho
        .into_iter()
        .map(|mut m| {
            for j in 0..n {
                for i in 0..j {
                    m[(j, i)] = m[(i, j)].conj();
                }
                m[(j, j)].im = 0.0;
            }
            DensityMatrix::from_raw(m * scale)
        })
        .collect();
    let propagator = total
        .u
        .map(|us| PropagatorRecord { times: times.clone(), mean_u: us.into_iter().map(|m| m * scale).collect() });
    Ok(EnsembleResult {
        trace: DensityTrace {
            times,
            rho,
            metadata: TraceMetadata { method, temperature: None, seed: config.seed, n_traj: config.n_traj },
        },
        propagator,
    })
}

/// Ensemble average `ρ_S(t) = (1/M) Σ_i |ψ_i(t)⟩⟨ψ_i(t)|` of unitary
/// trajectories.
///
/// Mixed initial states are decomposed into their eigen-components; every
/// component of a trajectory is propagated under the same noise
/// realisation, which gives `U ρ₀ U†` per trajectory.
pub fn run_ensemble(system: &SiteSystem, fluct: &FluctuationModel, config: &SimConfig) -> Result<EnsembleResult> {
    ensemble(system, fluct, config, None, Method::Md)
}

/// Propagates a single trajectory from a localised initial state.
pub fn run_trajectory(
    system: &SiteSystem,
    fluct: &FluctuationModel,
    config: &SimConfig,
    traj_index: usize,
) -> Result<TrajectoryRecord> {
    if !matches!(config.initial_state, InitialState::Site(_)) {
        return Err(Error::invalid("single trajectories start from a localised site state"));
    }
    let plan = Plan::new(system, fluct, config, None)?;
    let mut states = Vec::with_capacity(plan.n_out);
    let mut propagators = Vec::new();
    plan.integrate(traj_index, |_, s, u| {
        states.push(PureState::from_raw(s[0].clone()));
        if let Some(u) = u {
            propagators.push(u.clone());
        }
    })?;
    Ok(TrajectoryRecord { times: config.output_times(), states, propagators })
}
