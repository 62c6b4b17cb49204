//! Reference systems used by the benchmarks, examples and acceptance suite.

use nalgebra::DMatrix;

use crate::model::SiteSystem;
use crate::units::HBAR_CM1_FS;

/// Seven-site FMO Hamiltonian (C. tepidum site energies and couplings in the
/// widely used literature parametrisation), cm⁻¹.
pub fn fmo_seven_site() -> SiteSystem {
    const ENERGIES: [f64; 7] = [12410.0, 12530.0, 12210.0, 12320.0, 12480.0, 12630.0, 12440.0];
    #[rustfmt::skip]
    const UPPER: [(usize, usize, f64); 21] = [
        (0, 1, -87.7), (0, 2, 5.5), (0, 3, -5.9), (0, 4, 6.7), (0, 5, -13.7), (0, 6, -9.9),
        (1, 2, 30.8), (1, 3, 8.2), (1, 4, 0.7), (1, 5, 11.8), (1, 6, 4.3),
        (2, 3, -53.5), (2, 4, -2.2), (2, 5, -9.6), (2, 6, 6.0),
        (3, 4, -70.7), (3, 5, -17.0), (3, 6, -63.3),
        (4, 5, 81.1), (4, 6, -1.3),
        (5, 6, 39.7),
    ];
    let mut j = DMatrix::zeros(7, 7);
    for (m, n, v) in UPPER {
        j[(m, n)] = v;
        j[(n, m)] = v;
    }
    SiteSystem::new(ENERGIES.to_vec(), j, None).expect("preset is valid")
}

/// Relative per-site fluctuation amplitudes of the seven-site benchmark.
pub const BENCHMARK_SIGMA_PROFILE: [f64; 7] = [1.00, 0.92, 1.08, 0.96, 1.04, 0.94, 1.06];

/// Per-site σ (cm⁻¹) following [`BENCHMARK_SIGMA_PROFILE`], scaled so that the
/// mean energy-width dephasing rate `2σ²τ/ℏ` equals `mean_rate_cm1`.
pub fn benchmark_sigmas(mean_rate_cm1: f64, tau_fs: f64) -> Vec<f64> {
    let mean_sq = BENCHMARK_SIGMA_PROFILE.iter().map(|f| f * f).sum::<f64>() / BENCHMARK_SIGMA_PROFILE.len() as f64;
    let scale = (mean_rate_cm1 * HBAR_CM1_FS / (2.0 * tau_fs * mean_sq)).sqrt();
    BENCHMARK_SIGMA_PROFILE.iter().map(|f| f * scale).collect()
}
