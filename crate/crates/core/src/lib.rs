//! Exciton dynamics in pigment-protein complexes driven by classical
//! site-energy fluctuations.
//!
//! The crate is organised around the flow of a simulation:
//!
//! * [`model`] holds the static site system, instantaneous Hamiltonians and
//!   the exciton (instantaneous eigen-) basis.
//! * [`noise`] provides the classical bath record: recorded trajectories,
//!   AR(1) surrogates, decorrelation, correlation functions and spectral
//!   densities.
//! * [`propagator`] integrates the stochastic Schrödinger equation for an
//!   ensemble of trajectories and averages it into a reduced density matrix.
//! * [`qjc`] layers zero-point quantum jumps on top of the stochastic
//!   propagation.
//! * [`hsr`] is the Haken-Strobl-Reineker pure-dephasing reference model.
//! * [`spectra`] turns averaged propagators into absorption, LD and CD spectra.
//! * [`analysis`] extracts lifetimes, slopes and trace comparisons.
//!
//! Energies are in cm⁻¹ and times in fs throughout; see [`units`].
// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod hsr;
pub mod io;
pub mod model;
pub mod noise;
pub mod presets;
pub mod propagator;
pub mod qjc;
pub mod spectra;
pub mod units;

pub use error::{Error, Result};
pub use model::{
    build_hamiltonian, exciton_basis, pairwise_coherence, DensityMatrix, EnergyTrajectory, ExcitonBasis, Geometry,
    PureState, SiteSystem, ThermalParams,
};
pub use noise::{CorrelationFunction, FluctuationModel, SpectralDensity};
pub use propagator::{DensityTrace, Method, PropagatorRecord, SimConfig};

/// Library version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use nalgebra;
pub use num_complex::Complex64;
