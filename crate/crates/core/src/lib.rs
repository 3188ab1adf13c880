//! Gaussian nonlinear optics in coupled-cavity systems, specialised to
//! back-scattering in micro-ring photon-pair sources.

// `!(x > 0.0)` is used on purpose so NaN lands on the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod config;
pub mod error;
pub mod export;
pub mod gaussdyn;
pub mod lingrid;
pub mod linalg;
pub mod model;
pub mod montecarlo;
pub mod par;
pub mod perturb;
pub mod pipeline;
pub mod ringscene;
pub mod settom;

pub use error::{Error, Result};
