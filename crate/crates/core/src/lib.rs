//! Numerical core for the kicked top.
//!
//! The crate is split along the analysis chain:
//!
//! - [`classical`]: the area-preserving map on the unit sphere, tangent-map
//!   Lyapunov exponents, Kolmogorov-Sinai entropy, Poincaré sections and the
//!   chaotic/regular classification of phase space.
//! - [`grid`]: the `(φ, θ)` cell grids shared by the classical and quantum
//!   sides, with their quadrature weights.
//! - [`quantum`]: the Floquet operator in the Dicke basis and its
//!   quasienergy spectrum.
//! - [`spectral`]: consecutive level-spacing ratios and the rescaled mean
//!   ratio.
//! - [`husimi`]: spin coherent states, Husimi functions and the phase-space
//!   overlap index.
//! - [`ensemble`]: histograms of the overlap index, mixed-state fractions,
//!   power-law fits and exponent scans.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classical;
pub mod ensemble;
mod error;
pub mod grid;
pub mod husimi;
pub mod quantum;
pub mod spectral;

pub use error::{Error, Result};

/// Default precession angle `11π/19`.
pub const DEFAULT_ALPHA: f64 = 11.0 * std::f64::consts::PI / 19.0;
