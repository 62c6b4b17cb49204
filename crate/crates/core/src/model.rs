//! Site systems, Hamiltonians, states and the exciton basis.
//!
//! Couplings are static (Condon approximation) and real, so every
//! instantaneous Hamiltonian is a real symmetric matrix. The eigen-solver is
//! generic so complex Hermitian matrices are accepted as well.

use nalgebra::{ComplexField, DMatrix, DVector, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::KB_CM1_PER_K;

const SYMMETRY_TOL: f64 = 1e-12;
const HERMITIAN_TOL: f64 = 1e-10;
const NORM_TOL: f64 = 1e-10;

/// Static N-site exciton model.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteSystem {
    mean_energies: Vec<f64>,
    couplings: DMatrix<f64>,
    geometry: Option<Geometry>,
}

impl SiteSystem {
    pub fn new(mean_energies: Vec<f64>, couplings: DMatrix<f64>, geometry: Option<Geometry>) -> Result<Self> {
        let n = mean_energies.len();
        if n == 0 {
            return Err(Error::invalid("site system needs at least one site"));
        }
        if couplings.nrows() != n || couplings.ncols() != n {
            return Err(Error::invalid(format!(
                "couplings are {}x{}, expected {n}x{n}",
                couplings.nrows(),
                couplings.ncols()
            )));
        }
        if mean_energies.iter().chain(couplings.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite energy or coupling"));
        }
        for m in 0..n {
            if couplings[(m, m)] != 0.0 {
                return Err(Error::invalid(format!("coupling diagonal must be zero (site {})", m + 1)));
            }
            for k in (m + 1)..n {
                if (couplings[(m, k)] - couplings[(k, m)]).abs() > SYMMETRY_TOL {
                    return Err(Error::invalid(format!("couplings not symmetric at ({}, {})", m + 1, k + 1)));
                }
            }
        }
        if let Some(g) = &geometry {
            if g.positions.len() != n || g.dipoles.len() != n {
                return Err(Error::invalid(format!(
                    "geometry describes {} positions and {} dipoles for {n} sites",
                    g.positions.len(),
                    g.dipoles.len()
                )));
            }
        }
        Ok(Self { mean_energies, couplings, geometry })
    }

    /// Sites without any coupling.
    pub fn decoupled(mean_energies: Vec<f64>) -> Result<Self> {
        let n = mean_energies.len();
        Self::new(mean_energies, DMatrix::zeros(n, n), None)
    }

    pub fn with_geometry(mut self, geometry: Geometry) -> Result<Self> {
        self.geometry = Some(geometry);
        Self::new(self.mean_energies, self.couplings, self.geometry)
    }

    pub fn n_sites(&self) -> usize {
        self.mean_energies.len()
    }

    pub fn mean_energies(&self) -> &[f64] {
        &self.mean_energies
    }

    pub fn couplings(&self) -> &DMatrix<f64> {
        &self.couplings
    }

    pub fn geometry(&self) -> Option<&Geometry> {
        self.geometry.as_ref()
    }

    /// Time-independent system Hamiltonian built from the mean site energies.
    pub fn mean_hamiltonian(&self) -> DMatrix<f64> {
        let mut h = self.couplings.clone();
        h.set_diagonal(&DVector::from_column_slice(&self.mean_energies));
        h
    }

    /// Writes the instantaneous Hamiltonian into `out` without allocating.
    ///
    /// `out` must already be `n × n`; only the diagonal is rewritten after the
    /// first call, the couplings are copied each time.
    #[inline]
    pub(crate) fn fill_hamiltonian(&self, energies: &[f64], out: &mut DMatrix<f64>) {
        out.copy_from(&self.couplings);
        for (m, e) in energies.iter().enumerate() {
            out[(m, m)] = *e;
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let doc: SiteSystemDoc = serde_json::from_str(text)?;
        doc.try_into()
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&SiteSystemDoc::from(self))?)
    }
}

/// Transition-dipole geometry used by the optical spectra.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub positions: Vec<Vector3<f64>>,
    pub dipoles: Vec<Vector3<f64>>,
    symmetry_axis: Vector3<f64>,
}

impl Geometry {
    pub fn new(positions: Vec<Vector3<f64>>, dipoles: Vec<Vector3<f64>>, symmetry_axis: Vector3<f64>) -> Result<Self> {
        if positions.len() != dipoles.len() {
            return Err(Error::invalid("positions and dipoles differ in length"));
        }
        if ((symmetry_axis.norm()) - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("symmetry axis must be a unit vector (norm {})", symmetry_axis.norm())));
        }
        Ok(Self { positions, dipoles, symmetry_axis })
    }

    pub fn symmetry_axis(&self) -> &Vector3<f64> {
        &self.symmetry_axis
    }
}

/// On-disk JSON layout of a [`SiteSystem`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SiteSystemDoc {
    pub n_sites: usize,
    pub mean_energies_cm1: Vec<f64>,
    pub couplings_cm1: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<GeometryDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeometryDoc {
    #[serde(rename = "positions_A")]
    pub positions_a: Vec<[f64; 3]>,
    pub dipoles: Vec<[f64; 3]>,
    pub symmetry_axis: [f64; 3],
}

impl TryFrom<SiteSystemDoc> for SiteSystem {
    type Error = Error;

    fn try_from(doc: SiteSystemDoc) -> Result<Self> {
        let n = doc.n_sites;
        if doc.mean_energies_cm1.len() != n {
            return Err(Error::invalid(format!(
                "n_sites = {n} but {} mean energies given",
                doc.mean_energies_cm1.len()
            )));
        }
        if doc.couplings_cm1.len() != n || doc.couplings_cm1.iter().any(|r| r.len() != n) {
            return Err(Error::invalid(format!("couplings_cm1 must be {n}x{n}")));
        }
        let couplings = DMatrix::from_fn(n, n, |i, j| doc.couplings_cm1[i][j]);
        let geometry = doc
            .geometry
            .map(|g| {
                Geometry::new(
                    g.positions_a.iter().map(|p| Vector3::from(*p)).collect(),
                    g.dipoles.iter().map(|d| Vector3::from(*d)).collect(),
                    Vector3::from(g.symmetry_axis),
                )
            })
            .transpose()?;
        SiteSystem::new(doc.mean_energies_cm1, couplings, geometry)
    }
}

impl From<&SiteSystem> for SiteSystemDoc {
    fn from(s: &SiteSystem) -> Self {
        let n = s.n_sites();
        SiteSystemDoc {
            n_sites: n,
            mean_energies_cm1: s.mean_energies.clone(),
            couplings_cm1: (0..n).map(|i| (0..n).map(|j| s.couplings[(i, j)]).collect()).collect(),
            geometry: s.geometry.as_ref().map(|g| GeometryDoc {
                positions_a: g.positions.iter().map(|p| [p.x, p.y, p.z]).collect(),
                dipoles: g.dipoles.iter().map(|d| [d.x, d.y, d.z]).collect(),
                symmetry_axis: [g.symmetry_axis.x, g.symmetry_axis.y, g.symmetry_axis.z],
            }),
        }
    }
}

/// Time-discretised record of fluctuating site energies.
///
/// `frames` is `n_frames × n_sites`; row `k` holds the energies at
/// `k * dt_frame`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyTrajectory {
    dt_frame: f64,
    frames: DMatrix<f64>,
    pub label: String,
}

impl EnergyTrajectory {
    pub fn new(dt_frame: f64, frames: DMatrix<f64>, label: impl Into<String>) -> Result<Self> {
        if !(dt_frame > 0.0 && dt_frame.is_finite()) {
            return Err(Error::invalid(format!("dt_frame must be positive, got {dt_frame}")));
        }
        if frames.nrows() < 2 {
            return Err(Error::invalid("trajectory needs at least two frames"));
        }
        if frames.ncols() == 0 {
            return Err(Error::invalid("trajectory has no sites"));
        }
        if frames.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("trajectory contains non-finite energies"));
        }
        Ok(Self { dt_frame, frames, label: label.into() })
    }

    /// Builds a trajectory from per-site columns of equal length.
    pub fn from_columns(dt_frame: f64, columns: &[Vec<f64>], label: impl Into<String>) -> Result<Self> {
        let n_sites = columns.len();
        let n_frames = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != n_frames) {
            return Err(Error::invalid("site columns differ in length"));
        }
        let frames = DMatrix::from_fn(n_frames, n_sites, |k, m| columns[m][k]);
        Self::new(dt_frame, frames, label)
    }

    pub fn dt_frame(&self) -> f64 {
        self.dt_frame
    }

    pub fn frames(&self) -> &DMatrix<f64> {
        &self.frames
    }

    pub fn n_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn n_sites(&self) -> usize {
        self.frames.ncols()
    }

    /// Time spanned by the record, `(n_frames - 1) * dt_frame`.
    pub fn duration(&self) -> f64 {
        (self.n_frames() - 1) as f64 * self.dt_frame
    }

    pub fn column(&self, site: usize) -> Vec<f64> {
        self.frames.column(site).iter().copied().collect()
    }

    pub fn site_means(&self) -> Vec<f64> {
        (0..self.n_sites()).map(|m| self.frames.column(m).mean()).collect()
    }

    /// Population standard deviation of each site's energy.
    pub fn site_std(&self) -> Vec<f64> {
        (0..self.n_sites()).map(|m| self.frames.column(m).variance().sqrt()).collect()
    }

    /// Contiguous sub-record `[start, start + len)` in frames.
    pub fn segment(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.n_frames() {
            return Err(Error::invalid("segment exceeds trajectory"));
        }
        Self::new(self.dt_frame, self.frames.rows(start, len).into_owned(), self.label.clone())
    }
}

/// Normalised pure state in the site basis.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    amplitudes: DVector<Complex64>,
}

impl PureState {
    pub fn new(amplitudes: DVector<Complex64>) -> Result<Self> {
        let norm2 = amplitudes.norm_squared();
        if (norm2 - 1.0).abs() > NORM_TOL {
            return Err(Error::invalid(format!("state norm² is {norm2}, expected 1")));
        }
        Ok(Self { amplitudes })
    }

    /// Normalises arbitrary non-zero amplitudes.
    pub fn normalized(amplitudes: DVector<Complex64>) -> Result<Self> {
        let norm = amplitudes.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::invalid("cannot normalise a zero state"));
        }
        Ok(Self { amplitudes: amplitudes / Complex64::from(norm) })
    }

    /// Localised excitation on `site` (0-based).
    pub fn site(n_sites: usize, site: usize) -> Result<Self> {
        if site >= n_sites {
            return Err(Error::invalid(format!("site {site} out of range for {n_sites} sites")));
        }
        let mut a = DVector::zeros(n_sites);
        a[site] = Complex64::new(1.0, 0.0);
        Ok(Self { amplitudes: a })
    }

    pub fn amplitudes(&self) -> &DVector<Complex64> {
        &self.amplitudes
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub(crate) fn from_raw(amplitudes: DVector<Complex64>) -> Self {
        Self { amplitudes }
    }

    pub(crate) fn into_raw(self) -> DVector<Complex64> {
        self.amplitudes
    }

    pub fn to_density(&self) -> DensityMatrix {
        DensityMatrix { elements: &self.amplitudes * self.amplitudes.adjoint() }
    }
}

/// Reduced density matrix in the site basis.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    elements: DMatrix<Complex64>,
}

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity.
    pub fn new(elements: DMatrix<Complex64>) -> Result<Self> {
        if !elements.is_square() || elements.nrows() == 0 {
            return Err(Error::invalid("density matrix must be square and non-empty"));
        }
        let herm = (&elements - elements.adjoint()).camax();
        if herm > HERMITIAN_TOL {
            return Err(Error::invalid(format!("density matrix not Hermitian (deviation {herm:e})")));
        }
        let tr = elements.trace();
        if (tr.re - 1.0).abs() > NORM_TOL || tr.im.abs() > NORM_TOL {
            return Err(Error::invalid(format!("density matrix trace is {tr}")));
        }
        let rho = Self { elements };
        let min_ev = rho.min_eigenvalue();
        if min_ev < -1e-8 {
            return Err(Error::invalid(format!("density matrix has eigenvalue {min_ev:e}")));
        }
        Ok(rho)
    }

    /// Maximally mixed state `I / n`.
    pub fn maximally_mixed(n: usize) -> Self {
        Self { elements: DMatrix::identity(n, n) / Complex64::from(n as f64) }
    }

    pub(crate) fn from_raw(elements: DMatrix<Complex64>) -> Self {
        Self { elements }
    }

    pub fn elements(&self) -> &DMatrix<Complex64> {
        &self.elements
    }

    pub fn dim(&self) -> usize {
        self.elements.nrows()
    }

    pub fn populations(&self) -> Vec<f64> {
        self.elements.diagonal().iter().map(|z| z.re).collect()
    }

    pub fn purity(&self) -> f64 {
        (&self.elements * &self.elements).trace().re
    }

    pub fn min_eigenvalue(&self) -> f64 {
        nalgebra::SymmetricEigen::new(self.elements.clone()).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Spectral decomposition into `(weight, pure component)` pairs, dropping
    /// components with weight below `cutoff`.
    pub fn pure_components(&self, cutoff: f64) -> Vec<(f64, PureState)> {
        let eig = nalgebra::SymmetricEigen::new(self.elements.clone());
        let mut out = Vec::new();
        for (k, w) in eig.eigenvalues.iter().enumerate() {
            if *w > cutoff {
                let v = eig.eigenvectors.column(k).into_owned();
                out.push((*w, PureState::from_raw(v / Complex64::from(eig.eigenvectors.column(k).norm()))));
            }
        }
        out
    }
}

/// Instantaneous eigenbasis of a Hamiltonian.
///
/// Column `M` of `coefficients` is the eigenvector with energy `energies[M]`,
/// i.e. `coefficients[(m, M)] = c_m(M)`. Eigenvalues are ascending and each
/// column has its largest-magnitude component real and positive. Within an
/// exactly degenerate block any orthonormal basis may be returned; rates and
/// populations summed over such a block do not depend on the choice.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcitonBasis<T: ComplexField<RealField = f64> = f64> {
    pub energies: DVector<f64>,
    pub coefficients: DMatrix<T>,
}

impl<T: ComplexField<RealField = f64>> ExcitonBasis<T> {
    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    /// Transition frequency `E_M − E_N` in cm⁻¹.
    pub fn transition(&self, upper: usize, lower: usize) -> f64 {
        self.energies[upper] - self.energies[lower]
    }

    /// `Σ_m |c_m(M)|² |c_m(N)|²`.
    pub fn overlap_factor(&self, a: usize, b: usize) -> f64 {
        self.coefficients
            .column(a)
            .iter()
            .zip(self.coefficients.column(b).iter())
            .map(|(x, y)| x.clone().modulus_squared() * y.clone().modulus_squared())
            .sum()
    }

    /// `Σ_M E_M c(M) c(M)†`.
    pub fn reconstruct(&self) -> DMatrix<T> {
        let d = DMatrix::from_diagonal(&self.energies.map(T::from_real));
        &self.coefficients * d * self.coefficients.adjoint()
    }
}

/// Temperature and the matching inverse thermal energy in cm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalParams {
    temperature: f64,
    beta: f64,
}

impl ThermalParams {
    pub fn new(temperature: f64) -> Result<Self> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::invalid(format!("temperature must be positive, got {temperature}")));
        }
        Ok(Self { temperature, beta: 1.0 / (KB_CM1_PER_K * temperature) })
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    /// `1 / (k_B T)` in cm.
    pub fn beta(&self) -> f64 {
        self.beta
    }
}

/// Instantaneous Hamiltonian: diagonal from `energies`, off-diagonal from
/// the static couplings.
pub fn build_hamiltonian(system: &SiteSystem, energies: &[f64]) -> Result<DMatrix<f64>> {
    if energies.len() != system.n_sites() {
        return Err(Error::invalid(format!("{} energies for {} sites", energies.len(), system.n_sites())));
    }
    let mut h = DMatrix::zeros(system.n_sites(), system.n_sites());
    system.fill_hamiltonian(energies, &mut h);
    Ok(h)
}

pub(crate) fn check_hermitian<T: ComplexField<RealField = f64>>(h: &DMatrix<T>) -> Result<()> {
    if !h.is_square() {
        return Err(Error::invalid("Hamiltonian must be square"));
    }
    let scale = h.iter().map(|z| z.clone().modulus()).fold(1.0, f64::max);
    let n = h.nrows();
    for i in 0..n {
        for j in i..n {
            let d = (h[(i, j)].clone() - h[(j, i)].clone().conjugate()).modulus();
            if !(d <= HERMITIAN_TOL * scale) {
                return Err(Error::invalid(format!("matrix not Hermitian at ({}, {}): deviation {d:e}", i + 1, j + 1)));
            }
        }
    }
    Ok(())
}

/// Diagonalises a Hermitian matrix into an [`ExcitonBasis`].
pub fn exciton_basis<T: ComplexField<RealField = f64>>(h: &DMatrix<T>) -> Result<ExcitonBasis<T>> {
    check_hermitian(h)?;
    Ok(eigen_unchecked(h.clone()))
}

/// Eigendecomposition with ascending order and the fixed phase convention.
pub(crate) fn eigen_unchecked<T: ComplexField<RealField = f64>>(h: DMatrix<T>) -> ExcitonBasis<T> {
    let n = h.nrows();
    let eig = nalgebra::SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let energies = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut coefficients = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(src);
        let mut pivot = 0;
        let mut best = -1.0;
        for (i, c) in col.iter().enumerate() {
            let m = c.clone().modulus();
            if m > best + 1e-12 {
                best = m;
                pivot = i;
            }
        }
        let p = col[pivot].clone();
        let phase = p.clone().conjugate() / T::from_real(p.modulus());
        for i in 0..n {
            coefficients[(i, dst)] = col[i].clone() * phase.clone();
        }
    }
    ExcitonBasis { energies, coefficients }
}

/// Pairwise coherence `2 |ρ_mn|` between distinct sites (0-based).
pub fn pairwise_coherence(rho: &DensityMatrix, m: usize, n: usize) -> Result<f64> {
    let dim = rho.dim();
    if m == n {
        return Err(Error::invalid("pairwise coherence needs two distinct sites"));
    }
    if m >= dim || n >= dim {
        return Err(Error::invalid(format!("site index out of range for {dim} sites")));
    }
    Ok(2.0 * rho.elements[(m, n)].norm())
}
