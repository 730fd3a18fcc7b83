//! A lattice laboratory for Liouville quantum gravity.
//!
//! The crate samples white-noise slab decompositions of the whole-plane
//! Gaussian free field on periodic lattices, builds Liouville first-passage
//! percolation metrics and Gaussian multiplicative chaos measures on top of
//! them, estimates the first-passage time constant, and checks the exact
//! scaling and covariance identities those objects satisfy. A separate
//! pipeline approximates arbitrary length metrics on the sphere by conformal
//! factors `exp(f)·d0` built around a weighted geodesic graph.
//!
//! Entry points:
//! - [`constants`]: closed-form kernels, spectral densities, LQG exponents.
//! - [`field`]: grids, fields, and the `FGRD1` binary format.
//! - [`sampler`]: spectral synthesis of slab fields, mollification, circle
//!   averages, log singularities.
//! - [`metric`]: weighted-lattice shortest-path metrics with exact Weyl
//!   scaling.
//! - [`measure`]: GMC cell masses, Prokhorov and GHP-upper-bound distances.
//! - [`stats`]: time-constant estimation, scaling-law and covariance checks,
//!   Fourier toolkit (band limiting, deconvolution, annulus bumps).
//! - [`conformal`]: the length-metric-to-conformal-factor pipeline.
//! - [`surgery`]: flat/sphere support demos and the measure-bump surgery.
//!
//! Each runnable capability also ships as an example under `examples/`.

pub mod config;
pub mod constants;
pub mod conformal;
pub mod error;
pub mod fft;
pub mod field;
pub mod measure;
pub mod metric;
pub mod report;
pub mod rng;
pub mod sampler;
pub mod stats;
pub mod surgery;

pub use constants::LqgConstants;
pub use error::{Error, Result};
pub use field::{Field, GridSpec, Point, SlabRange};
pub use measure::DiscreteMeasure;
pub use metric::{DistanceEngine, Stencil};
