//! Design and scoring of optical modes for coupling free-space light to a
//! single atomic dipole through a deep parabolic mirror.
//!
//! The crate is organised along the analysis chain:
//!
//! - [`geometry`]: entrance-plane radius ↔ focal polar angle, incidence
//!   angles on the mirror, dipole-weighted solid angle.
//! - [`modes`]: dipole and radially polarized doughnut profiles, spatial
//!   overlap, waist optimisation and the coupling figures `G` and `P_a`.
//! - [`polarimetry`]: rotating quarter-wave-plate Stokes reduction and the
//!   overlap of measured beams with the dipole mode.
//! - [`wavefront`]: Zernike expansions, PV/RMS, phase plates and dispersion
//!   rescaling.
//! - [`focalfield`]: vectorial Debye focusing, Strehl ratios and the
//!   metal-coating reflection model.
//! - [`temporal`]: rising-exponential pulses, temporal overlap, AOM drive
//!   and response, photon-count histograms.
//!
//! Lengths in the entrance plane are expressed in units of the focal length
//! (`ρ = r/f`); angles are radians; wavelengths are nanometres; times are
//! nanoseconds.

// Negated comparisons deliberately reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod focalfield;
pub mod geometry;
pub mod io;
pub mod modes;
pub mod polarimetry;
pub mod quadrature;
pub mod temporal;
pub mod wavefront;

pub use error::{Error, Result};
