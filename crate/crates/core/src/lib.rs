//! Numerical core for designing and analysing evanescently fiber-coupled
//! waveguide single-photon sources.
//!
//! The crate is `no_std` (with `alloc`) and contains no IO. It covers
//!
//! * [`geometry`]: rasterised cross-sections of a suspended GaAs waveguide
//!   touching a silica microfiber, with dielectric smoothing;
//! * [`modesolver`]: a full-vector finite-difference mode solver in the
//!   transverse magnetic field, power-flux mode overlaps, width sweeps and
//!   branch tracking through anticrossings;
//! * [`taper`]: adiabatic taper synthesis, adiabaticity checks and forward
//!   eigenmode-expansion propagation;
//! * [`fitting`]: a Levenberg–Marquardt engine with the g²(τ) pulse-train,
//!   saturation and decay models;
//! * [`budget`]: efficiency chains with first-order uncertainty propagation.
//!
//! The lower-level [`sparse`] and [`eigen`] modules hold the nested-dissection
//! multifrontal LU and the shift-invert Arnoldi eigensolver used by the mode
//! solver.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod budget;
pub mod eigen;
pub mod fitting;
pub mod geometry;
mod math;
pub mod modesolver;
pub mod sparse;
pub mod taper;

pub use geometry::{CouplerGeometry, CrossSection, GridSpec, GuideSelector, MaterialSet};
pub use modesolver::{GuidedMode, ModeParity, SolverOptions};
