//! Coupled dissipative SDEs driven by symmetric α-stable Lévy noise.
//!
//! The crate covers the full pipeline from noise generation to Monte Carlo
//! diagnostics:
//!
//! * [`stable_noise`]: α-stable laws, constants and Chambers-Mallows-Stuck sampling.
//! * [`sde`]: grids, keyed noise paths and fixed-step integrators.
//! * [`synchro`]: the coupled system, its slow-fast rewrite, auxiliary and
//!   averaged systems, hypothesis probes and a library of drift fields.
//! * [`averaging`]: frozen fast process, empirical invariant measures,
//!   averaged drifts and mixing rates.
//! * [`mc`]: convergence and synchronization experiments with robust bands.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod averaging;
pub mod error;
pub mod mc;
pub mod rng;
pub mod sde;
pub mod stable_noise;
pub mod stats;
pub mod synchro;

pub use error::{Error, Result};
pub use rng::{Purpose, StreamKey};
pub use sde::{DriftField, PathGrid, SamplePath};
pub use stable_noise::StableLaw;
