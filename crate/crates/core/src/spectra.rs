//! Absorption, linear-dichroism and circular-dichroism spectra from
//! ensemble-averaged propagators.
//!
//! `I(ω) ∝ Re ∫₀^∞ dt e^{iωt} Σ_mn W_mn {⟨U_mn(t,0)⟩ − ⟨U_mn(t,0)⟩*}` with
//! kind-specific dipole weights `W_mn`. Dipoles are static, so the weights
//! factor out of the trajectory average. The integral is apodised with
//! `exp(−t²/2T_w²)` and evaluated with the trapezoidal rule.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SiteSystem;
use crate::propagator::PropagatorRecord;
use crate::units::HBAR_CM1_FS;

pub const DEFAULT_WINDOW_FS: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectrumKind {
    Abs,
    Ld,
    Cd,
}

impl SpectrumKind {
    pub fn name(self) -> &'static str {
        match self {
            SpectrumKind::Abs => "abs",
            SpectrumKind::Ld => "ld",
            SpectrumKind::Cd => "cd",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub omega: Vec<f64>,
    /// Normalised to unit peak magnitude (all zeros stay zero).
    pub intensity: Vec<f64>,
    pub kind: SpectrumKind,
    /// Total shift applied for experimental overlay, cm⁻¹.
    pub shift: f64,
    /// Set when the record is too short for the achievable resolution.
    pub truncated: bool,
}

impl Spectrum {
    /// Grid point with the largest intensity.
    pub fn peak(&self) -> f64 {
        let k = self.intensity.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map_or(0, |(k, _)| k);
        self.omega[k]
    }
}

/// Dipole weight matrix `W_mn` for a spectrum kind.
pub fn weights(system: &SiteSystem, kind: SpectrumKind) -> Result<DMatrix<f64>> {
    let geom = system.geometry().ok_or_else(|| Error::invalid("spectra need dipole geometry on the site system"))?;
    let n = system.n_sites();
    let d = &geom.dipoles;
    let axis = geom.symmetry_axis();
    Ok(DMatrix::from_fn(n, n, |m, k| match kind {
        SpectrumKind::Abs => d[m].dot(&d[k]),
        SpectrumKind::Ld => 3.0 * d[m].dot(axis) * d[k].dot(axis) - d[m].dot(&d[k]),
        SpectrumKind::Cd => system.mean_energies()[m] * (geom.positions[m] - geom.positions[k]).dot(&d[m].cross(&d[k])),
    }))
}

/// Response-function spectrum on `grid` (cm⁻¹) with apodisation width
/// `window` (fs).
pub fn compute_spectrum(
    record: &PropagatorRecord,
    system: &SiteSystem,
    kind: SpectrumKind,
    window: f64,
    grid: &[f64],
) -> Result<Spectrum> {
    let w = weights(system, kind)?;
    if record.n_sites() != system.n_sites() {
        return Err(Error::invalid("propagator record and system differ in size"));
    }
    if record.times.len() < 2 {
        return Err(Error::invalid("propagator record needs at least two times"));
    }
    if !(window > 0.0) {
        return Err(Error::invalid("apodisation window must be positive"));
    }
    if grid.is_empty() || grid.windows(2).any(|p| !(p[1] > p[0])) {
        return Err(Error::invalid("frequency grid must be strictly increasing"));
    }

    // g(t) = Σ W_mn Im⟨U_mn⟩ · window(t); the integrand's real part reduces
    // to −2 g(t) sin(ωt/ħ).
    let g: Vec<f64> = record
        .times
        .iter()
        .zip(&record.mean_u)
        .map(|(t, u)| {
            let s: f64 = u.iter().zip(w.iter()).map(|(z, wt)| wt * z.im).sum();
            s * (-t * t / (2.0 * window * window)).exp()
        })
        .collect();
    let times = &record.times;
    let raw: Vec<f64> = grid
        .par_iter()
        .map(|omega| {
            let f = omega / HBAR_CM1_FS;
            let mut acc = 0.0;
            for k in 1..times.len() {
                let a = g[k - 1] * (f * times[k - 1]).sin();
                let b = g[k] * (f * times[k]).sin();
                acc += 0.5 * (times[k] - times[k - 1]) * (a + b);
            }
            -2.0 * acc
        })
        .collect();
    let peak = raw.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let intensity = if peak > 0.0 { raw.iter().map(|v| v / peak).collect() } else { raw };

    let duration = times[times.len() - 1] - times[0];
    let spacing = grid.windows(2).map(|p| p[1] - p[0]).fold(f64::INFINITY, f64::min);
    let required = if spacing.is_finite() { (5.0 * HBAR_CM1_FS / spacing).min(5.0 * window) } else { 5.0 * window };
    Ok(Spectrum { omega: grid.to_vec(), intensity, kind, shift: 0.0, truncated: duration < required })
}

/// Translates the frequency grid by `−shift`, keeping the intensities.
pub fn overlay_shift(spec: &Spectrum, shift: f64) -> Spectrum {
    Spectrum { omega: spec.omega.iter().map(|w| w - shift).collect(), shift: spec.shift + shift, ..spec.clone() }
}

/// Uniform grid `start, start + step, …` up to and including `stop`.
pub fn uniform_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(stop >= start) {
        return Err(Error::invalid("grid needs step > 0 and stop >= start"));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| start + k as f64 * step).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Geometry;
    use crate::noise::FluctuationModel;
    use crate::propagator::{run_ensemble, SimConfig};
    use approx::assert_relative_eq;
    use nalgebra::Vector3;

    fn single_site(energy: f64) -> SiteSystem {
        SiteSystem::decoupled(vec![energy])
            .unwrap()
            .with_geometry(
                Geometry::new(vec![Vector3::zeros()], vec![Vector3::new(1.0, 0.5, 0.0)], Vector3::z()).unwrap(),
            )
            .unwrap()
    }

    fn record(sys: &SiteSystem, fluct: &FluctuationModel, t: f64, m: usize) -> PropagatorRecord {
        let mut cfg = SimConfig::new(1.0, t, m, 5);
        cfg.record_propagator = true;
        run_ensemble(sys, fluct, &cfg).unwrap().propagator.unwrap()
    }

    #[test]
    fn delta_line_peaks_at_site_energy() {
        let sys = single_site(12000.0);
        let rec = record(&sys, &FluctuationModel::None, 600.0, 1);
        let grid = uniform_grid(11500.0, 12500.0, 2.0).unwrap();
        let s = compute_spectrum(&rec, &sys, SpectrumKind::Abs, 100.0, &grid).unwrap();
        assert!((s.peak() - 12000.0).abs() <= 2.0);
        // window-limited Gaussian line: half max at ±√(2 ln 2)·ħ/T_w
        let hw = (2.0 * 2f64.ln()).sqrt() * HBAR_CM1_FS / 100.0;
        let k = grid.iter().position(|w| (*w - (12000.0 + hw)).abs() <= 1.0).unwrap();
        assert!((s.intensity[k] - 0.5).abs() < 0.02);
    }

    #[test]
    fn single_site_cd_vanishes() {
        let sys = single_site(12000.0);
        let rec = record(&sys, &FluctuationModel::None, 300.0, 1);
        let grid = uniform_grid(11800.0, 12200.0, 5.0).unwrap();
        let s = compute_spectrum(&rec, &sys, SpectrumKind::Cd, 100.0, &grid).unwrap();
        assert!(s.intensity.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn missing_geometry_rejected() {
        let sys = SiteSystem::decoupled(vec![12000.0]).unwrap();
        let rec = record(&sys, &FluctuationModel::None, 50.0, 1);
        assert!(compute_spectrum(&rec, &sys, SpectrumKind::Abs, 100.0, &[12000.0, 12001.0]).is_err());
    }

    #[test]
    fn ld_weights_parallel_and_perpendicular() {
        let geom = Geometry::new(
            vec![Vector3::zeros(), Vector3::x()],
            vec![Vector3::new(0.0, 0.0, 2.0), Vector3::new(3.0, 0.0, 0.0)],
            Vector3::z(),
        )
        .unwrap();
        let sys = SiteSystem::decoupled(vec![0.0, 0.0]).unwrap().with_geometry(geom).unwrap();
        let w = weights(&sys, SpectrumKind::Ld).unwrap();
        assert_relative_eq!(w[(0, 0)], 2.0 * 4.0);
        assert_relative_eq!(w[(1, 1)], -9.0);
    }

    #[test]
    fn spectra_invariant_under_dipole_sign_flip() {
        let sys = crate::presets::fmo_seven_site();
        let pos: Vec<Vector3<f64>> =
            (0..7).map(|k| Vector3::new(k as f64, (k * k) as f64 * 0.3, 1.0 - k as f64)).collect();
        let dip: Vec<Vector3<f64>> =
            (0..7).map(|k| Vector3::new((k as f64).sin(), (k as f64).cos(), 0.3 * k as f64)).collect();
        let axis = Vector3::new(0.0, 0.6, 0.8);
        let a = sys.clone().with_geometry(Geometry::new(pos.clone(), dip.clone(), axis).unwrap()).unwrap();
        let b = sys.with_geometry(Geometry::new(pos, dip.iter().map(|d| -d).collect(), axis).unwrap()).unwrap();
        let rec = record(&a, &FluctuationModel::ar1(vec![80.0; 7], 5.0, 1.0), 200.0, 8);
        let grid = uniform_grid(12000.0, 12800.0, 10.0).unwrap();
        for kind in [SpectrumKind::Abs, SpectrumKind::Ld, SpectrumKind::Cd] {
            let sa = compute_spectrum(&rec, &a, kind, 100.0, &grid).unwrap();
            let sb = compute_spectrum(&rec, &b, kind, 100.0, &grid).unwrap();
            assert_eq!(sa.intensity, sb.intensity);
        }
        let abs = compute_spectrum(&rec, &a, SpectrumKind::Abs, 100.0, &grid).unwrap();
        assert!(abs.intensity.iter().sum::<f64>() > 0.0);
    }

    #[test]
    fn overlay_shift_examples() {
        let s = Spectrum {
            omega: vec![12400.0, 12500.0, 12600.0],
            intensity: vec![0.2, 1.0, 0.3],
            kind: SpectrumKind::Abs,
            shift: 0.0,
            truncated: false,
        };
        assert_eq!(overlay_shift(&s, 0.0), s);
        let back = overlay_shift(&overlay_shift(&s, 500.0), -500.0);
        for (a, b) in back.omega.iter().zip(&s.omega) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(overlay_shift(&s, 500.0).peak(), 12000.0);
    }

    #[test]
    fn short_record_is_flagged() {
        let sys = single_site(12000.0);
        let rec = record(&sys, &FluctuationModel::None, 100.0, 1);
        let grid = uniform_grid(11900.0, 12100.0, 1.0).unwrap();
        assert!(compute_spectrum(&rec, &sys, SpectrumKind::Abs, 100.0, &grid).unwrap().truncated);
        let rec = record(&sys, &FluctuationModel::None, 600.0, 1);
        assert!(!compute_spectrum(&rec, &sys, SpectrumKind::Abs, 100.0, &grid).unwrap().truncated);
    }
}
