//! Plane-wave ultrasound vector flow imaging with a nonlinear
//! multiply-and-sum (NLHR) beamformer.
//!
//! The receive chain runs channel-directive beam synthesis, left/right
//! sub-aperture weighting, and either a linear delay-and-sum or a pairwise
//! multiply-and-sum followed by a band-pass around twice the transmit
//! frequency. Velocity vectors are then recovered by triangulated lag-one
//! autocorrelation or by directional cross-correlation.
//!
//! Modules, bottom-up:
//!
//! - [`geometry`]: array, acquisition parameters and the imaging grid
//! - [`phantom`]: moving point-scatterer phantoms and a pulse-echo RF simulator
//! - [`beamform`]: resampling, delay tables, apodization, DAS / MAS, band-pass
//! - [`clutter`]: truncated-SVD clutter rejection on Casorati matrices
//! - [`velocity`]: Kasai, triangulation (TAC) and directional cross-correlation (DCC)
//! - [`metrics`]: bias / standard deviation statistics over vessel profiles
//! - [`experiment`]: end-to-end runs, sweeps and artifact manifests

pub mod beamform;
pub mod clutter;
pub mod dsp;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod phantom;
pub mod velocity;

mod par;

pub use error::{Error, Result};
pub use geometry::{AcquisitionConfig, ImagingGrid, Point, TransducerArray};
