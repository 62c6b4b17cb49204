//! Zero-point quantum-jump correction.
//!
//! Zero-point fluctuations of the bath only drive downhill transitions
//! between instantaneous exciton states. The rate for `M → N` is
//! `γ(ω_MN) = 2π J(ω_MN) Σ_m |c_m(M)|² |c_m(N)|² / ħ` with `J(ω) = 0` for
//! `ω ≤ 0`. The jumps are realised with first-order Monte-Carlo
//! wavefunction steps on top of the stochastic unitary propagation, using
//! the collapse operator `|N⟩⟨M|` in the instantaneous eigenbasis.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{check_hermitian, eigen_unchecked, ExcitonBasis, PureState, SiteSystem};
use crate::noise::{FluctuationModel, SpectralDensity};
use crate::propagator::{self, from_eigen, step_phases, to_eigen, DensityTrace, Method, SimConfig};
use crate::units::HBAR_CM1_FS;

/// Transition gaps below this are treated as degenerate and get no rate.
pub const DEGENERACY_CM1: f64 = 0.1;
/// Validity bound on `dt × (total outgoing rate)` for first-order jumps.
pub const MAX_JUMP_PROBABILITY: f64 = 0.1;

/// Downhill relaxation rates between the states of one exciton basis.
#[derive(Debug, Clone, PartialEq)]
pub struct RateTable {
    pub basis: ExcitonBasis,
    /// `rates[(M, N)]` is the `M → N` rate in fs⁻¹.
    pub rates: DMatrix<f64>,
}

impl RateTable {
    /// Total outgoing rate of state `M`.
    pub fn outgoing(&self, big_m: usize) -> f64 {
        self.rates.row(big_m).sum()
    }
}

pub(crate) fn rates_unchecked(basis: &ExcitonBasis, sd: &SpectralDensity) -> DMatrix<f64> {
    let n = basis.dim();
    let mut rates = DMatrix::zeros(n, n);
    for upper in 0..n {
        for lower in 0..n {
            let w = basis.transition(upper, lower);
            if w < DEGENERACY_CM1 {
                continue;
            }
            let j = sd.eval(w);
            if j > 0.0 {
                rates[(upper, lower)] =
                    2.0 * std::f64::consts::PI * j * basis.overlap_factor(upper, lower) / HBAR_CM1_FS;
            }
        }
    }
    rates
}

/// Zero-point rate table for a basis.
pub fn zp_rates(basis: &ExcitonBasis, sd: &SpectralDensity) -> Result<RateTable> {
    let n = basis.dim();
    if basis.coefficients.nrows() != n || basis.coefficients.ncols() != n {
        return Err(Error::invalid("basis coefficients must be square and match the energies"));
    }
    if basis.energies.iter().any(|e| !e.is_finite()) {
        return Err(Error::invalid("basis energies must be finite"));
    }
    Ok(RateTable { basis: basis.clone(), rates: rates_unchecked(basis, sd) })
}

/// One first-order MCWF step in place. `scratch` has length n.
pub(crate) fn mcwf_apply<R: Rng>(
    basis: &ExcitonBasis,
    phases: &[Complex64],
    rates: &DMatrix<f64>,
    dt: f64,
    psi: &mut DVector<Complex64>,
    scratch: &mut [Complex64],
    rng: &mut R,
) -> Result<()> {
    let n = scratch.len();
    to_eigen(basis, psi, scratch);

    let mut any = false;
    let mut total = 0.0;
    for (big_m, amp) in scratch.iter().enumerate() {
        let out: f64 = rates.row(big_m).sum();
        if out > 0.0 {
            any = true;
            if dt * out >= MAX_JUMP_PROBABILITY {
                return Err(Error::StepSize(format!(
                    "dt × outgoing rate = {:.3} for exciton state {big_m}; reduce dt",
                    dt * out
                )));
            }
            total += dt * out * amp.norm_sqr();
        }
    }
    if !any {
        for (a, p) in scratch.iter_mut().zip(phases) {
            *a *= p;
        }
        from_eigen(basis, scratch, psi);
        return Ok(());
    }
    if total > 1.0 {
        return Err(Error::StepSize(format!("jump probability {total:.3} exceeds one; reduce dt")));
    }

    let r: f64 = rng.random();
    if r < total {
        // locate the channel M → N
        let mut acc = 0.0;
        let mut chosen = None;
        'search: for big_m in 0..n {
            let pop = scratch[big_m].norm_sqr();
            for big_n in 0..n {
                let g = rates[(big_m, big_n)];
                if g > 0.0 {
                    acc += dt * g * pop;
                    if r < acc {
                        chosen = Some((big_m, big_n));
                        break 'search;
                    }
                }
            }
        }
        let (from, to) = chosen.unwrap_or_else(|| last_channel(rates, scratch));
        let amp = scratch[from];
        let phase = if amp.norm() > 0.0 { amp / amp.norm() } else { Complex64::new(1.0, 0.0) };
        scratch.fill(Complex64::new(0.0, 0.0));
        scratch[to] = phase * phases[to];
    } else {
        let mut norm2 = 0.0;
        for big_m in 0..n {
            let out: f64 = rates.row(big_m).sum();
            scratch[big_m] *= phases[big_m] * (-0.5 * out * dt).exp();
            norm2 += scratch[big_m].norm_sqr();
        }
        let inv = 1.0 / norm2.sqrt();
        scratch.iter_mut().for_each(|a| *a *= inv);
    }
    from_eigen(basis, scratch, psi);
    Ok(())
}

/// Fallback when rounding leaves `r` just above the accumulated sum.
fn last_channel(rates: &DMatrix<f64>, a: &[Complex64]) -> (usize, usize) {
    let n = a.len();
    let mut last = (0, 0);
    for big_m in 0..n {
        for big_n in 0..n {
            if rates[(big_m, big_n)] > 0.0 && a[big_m].norm_sqr() > 0.0 {
                last = (big_m, big_n);
            }
        }
    }
    last
}

/// One Monte-Carlo wavefunction step under `h` with jump rates `rates`
/// computed in the eigenbasis of `h`.
pub fn mcwf_step<R: Rng>(
    psi: &PureState,
    h: &DMatrix<f64>,
    rates: &RateTable,
    dt: f64,
    rng: &mut R,
) -> Result<PureState> {
    check_hermitian(h)?;
    let n = psi.dim();
    if h.nrows() != n || rates.rates.nrows() != n {
        return Err(Error::invalid("state, Hamiltonian and rates must share a dimension"));
    }
    let basis = eigen_unchecked(h.clone());
    let mut phases = Vec::new();
    step_phases(&basis, dt, &mut phases);
    let mut out = psi.amplitudes().clone();
    let mut scratch = vec![Complex64::new(0.0, 0.0); n];
    mcwf_apply(&basis, &phases, &rates.rates, dt, &mut out, &mut scratch, rng)?;
    Ok(PureState::from_raw(out))
}

/// Ensemble of MCWF trajectories layered on the stochastic Hamiltonian.
///
/// Rates are refreshed every integration step from the instantaneous
/// eigenbasis. Noise and jumps use separate random streams, so with a zero
/// spectral density this reproduces [`propagator::run_ensemble`] exactly.
pub fn run_ensemble_qjc(
    system: &SiteSystem,
    fluct: &FluctuationModel,
    sd: &SpectralDensity,
    config: &SimConfig,
) -> Result<DensityTrace> {
    Ok(propagator::ensemble(system, fluct, config, Some(sd), Method::Qjc)?.trace)
}

/// Populations of each eigenstate of `basis` in a density matrix.
pub fn eigen_populations(basis: &ExcitonBasis, rho: &DMatrix<Complex64>) -> Vec<f64> {
    let v = basis.coefficients.map(Complex64::from);
    let r = v.transpose() * rho * &v;
    r.diagonal().iter().map(|z| z.re).collect()
}

/// Density matrix transformed into the eigenbasis, `Vᵀ ρ V`.
pub fn to_eigenbasis(basis: &ExcitonBasis, rho: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let v = basis.coefficients.map(Complex64::from);
    v.transpose() * rho * &v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::exciton_basis;
    use crate::propagator::{run_ensemble, step_unitary, trajectory_rng, InitialState};
    use approx::assert_relative_eq;

    #[test]
    fn disjoint_support_has_zero_rate() {
        let h = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 200.0]);
        let b = exciton_basis(&h).unwrap();
        let rt = zp_rates(&b, &SpectralDensity::drude_lorentz(35.0, 50.0).unwrap()).unwrap();
        assert!(rt.rates.iter().all(|r| *r == 0.0));
    }

    #[test]
    fn uniform_overlap_rate() {
        // Hadamard-like 2-site basis: |c| = 1/√2 everywhere, overlap 2·(1/4) = 1/2.
        let h = DMatrix::from_row_slice(2, 2, &[0.0, 100.0, 100.0, 0.0]);
        let b = exciton_basis(&h).unwrap();
        let sd = SpectralDensity::drude_lorentz(35.0, 50.0).unwrap();
        let rt = zp_rates(&b, &sd).unwrap();
        let w = 200.0;
        let expected = 2.0 * std::f64::consts::PI * sd.eval(w) * 0.5 / HBAR_CM1_FS;
        assert_relative_eq!(rt.rates[(1, 0)], expected, max_relative = 1e-12);
        assert_eq!(rt.rates[(0, 1)], 0.0);
    }

    #[test]
    fn uniform_seven_site_overlap() {
        // all |c_m(M)|² = 1/7 gives Σ = 7/49 = 1/7
        let n = 7;
        let energies = nalgebra::DVector::from_iterator(n, (0..n).map(|k| 100.0 * k as f64));
        let coefficients = DMatrix::from_element(n, n, 1.0 / (n as f64).sqrt());
        let basis = ExcitonBasis { energies, coefficients };
        let sd = SpectralDensity::drude_lorentz(35.0, 50.0).unwrap();
        let rt = zp_rates(&basis, &sd).unwrap();
        for m in 0..n {
            for k in 0..n {
                let w = basis.transition(m, k);
                let expected = if w > 0.0 { 2.0 * std::f64::consts::PI * sd.eval(w) / 7.0 / HBAR_CM1_FS } else { 0.0 };
                assert_relative_eq!(rt.rates[(m, k)], expected, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn never_uphill() {
        let sys = crate::presets::fmo_seven_site();
        let b = exciton_basis(&sys.mean_hamiltonian()).unwrap();
        let rt = zp_rates(&b, &SpectralDensity::drude_lorentz(35.0, 50.0).unwrap()).unwrap();
        for m in 0..7 {
            for k in 0..7 {
                if rt.rates[(m, k)] > 0.0 {
                    assert!(b.energies[m] > b.energies[k]);
                }
            }
        }
    }

    #[test]
    fn zero_rates_equal_unitary_step() {
        let h = DMatrix::from_row_slice(2, 2, &[10.0, 40.0, 40.0, -30.0]);
        let b = exciton_basis(&h).unwrap();
        let rt = zp_rates(&b, &SpectralDensity::zero()).unwrap();
        let psi = PureState::site(2, 0).unwrap();
        let mut rng = trajectory_rng(0, 0, 1);
        let a = mcwf_step(&psi, &h, &rt, 1.0, &mut rng).unwrap();
        let u = step_unitary(&psi, &h, 1.0).unwrap();
        assert_eq!(a, u);
    }

    #[test]
    fn ground_state_never_jumps() {
        let h = DMatrix::from_row_slice(2, 2, &[0.0, 100.0, 100.0, 150.0]);
        let b = exciton_basis(&h).unwrap();
        let rt = zp_rates(&b, &SpectralDensity::drude_lorentz(100.0, 50.0).unwrap()).unwrap();
        let ground = b.coefficients.column(0).map(Complex64::from);
        let mut psi = PureState::new(ground.clone()).unwrap();
        let mut rng = trajectory_rng(3, 0, 1);
        for _ in 0..2000 {
            psi = mcwf_step(&psi, &h, &rt, 1.0, &mut rng).unwrap();
        }
        assert!((psi.amplitudes().dotc(&ground).norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn oversized_step_is_rejected() {
        let h = DMatrix::from_row_slice(2, 2, &[0.0, 100.0, 100.0, 0.0]);
        let b = exciton_basis(&h).unwrap();
        let rt = zp_rates(&b, &SpectralDensity::drude_lorentz(500.0, 50.0).unwrap()).unwrap();
        let psi = PureState::site(2, 0).unwrap();
        let mut rng = trajectory_rng(0, 0, 1);
        assert!(matches!(mcwf_step(&psi, &h, &rt, 20.0, &mut rng), Err(Error::StepSize(_))));
    }

    #[test]
    fn zero_spectral_density_reproduces_md() {
        let sys = crate::presets::fmo_seven_site();
        let fluct = FluctuationModel::ar1(vec![120.0; 7], 5.0, 1.0);
        let mut cfg = SimConfig::new(1.0, 150.0, 12, 44);
        cfg.output_interval = 5.0;
        let md = run_ensemble(&sys, &fluct, &cfg).unwrap().trace;
        let q = run_ensemble_qjc(&sys, &fluct, &SpectralDensity::zero(), &cfg).unwrap();
        assert_eq!(md.rho, q.rho);
        assert_eq!(md.times, q.times);
    }

    #[test]
    fn propagator_record_rejected_for_jumps() {
        let sys = crate::presets::fmo_seven_site();
        let mut cfg = SimConfig::new(1.0, 10.0, 1, 0);
        cfg.record_propagator = true;
        cfg.initial_state = InitialState::Site(0);
        assert!(run_ensemble_qjc(&sys, &FluctuationModel::None, &SpectralDensity::zero(), &cfg).is_err());
    }
}
