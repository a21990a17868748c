//! Fully discrete P^k local discontinuous Galerkin laboratory for the
//! one-dimensional wave equation.
//!
//! The crate assembles the LDG blocks with alternating fluxes, analyses the
//! space-time dispersion of the leapfrog scheme, runs the scheme on periodic
//! meshes, builds trapped high-frequency packets and measures observability
//! constants through Gramian pencils, with and without spectral filtering.

pub mod basis;
pub mod error;
pub mod evolve;
pub mod gramian;
pub mod linalg;
pub mod packets;
pub mod spectral;

pub use basis::{assemble_stiffness, flux_blocks, local_mass, LocalMatrices, SchemeParams};
pub use error::{Error, Result};
pub use spectral::{
    cfl_margin, eig_branches, positive_band, symbol, temporal_frequency, CflMargin,
    DispersionTable, PositiveBand, SymbolSample, VgFlag,
};
pub use evolve::{EnergyRecord, ObservationRegion, PeriodicMesh, RunOutput, Scheme, StatePair};
pub use packets::{build_packet, gevrey_bump, trap_experiment, Packet, PacketSpec, TrapResult};
pub use gramian::{
    build_pencil, filtered_constant, fit_rate, observability_constant, FilterSpec, Observability,
    QuadraticPencil, RateFit,
};
