//! Physical constants in the cm⁻¹ / fs unit system.

/// Speed of light in cm/fs (exact, SI definition).
pub const SPEED_OF_LIGHT_CM_PER_FS: f64 = 2.997_924_58e-5;

/// Reduced Planck constant expressed in cm⁻¹·fs, i.e. 1/(2πc).
///
/// Numerically 5308.84 cm⁻¹·fs. An energy `E` in cm⁻¹ corresponds to the
/// angular frequency `E / HBAR` in rad/fs.
pub const HBAR_CM1_FS: f64 = 1.0 / (2.0 * std::f64::consts::PI * SPEED_OF_LIGHT_CM_PER_FS);

/// Boltzmann constant in cm⁻¹/K (CODATA 2018: 0.695035 cm⁻¹/K).
pub const KB_CM1_PER_K: f64 = 0.695_034_800;

/// Converts an energy in cm⁻¹ to an angular frequency in rad/fs.
#[inline]
pub fn cm1_to_angular_fs(energy: f64) -> f64 {
    energy / HBAR_CM1_FS
}

/// Converts a rate in fs⁻¹ to an energy width in cm⁻¹.
#[inline]
pub fn rate_fs_to_cm1(rate: f64) -> f64 {
    rate * HBAR_CM1_FS
}
