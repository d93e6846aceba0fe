//! Subject-specific longitudinal volumetric trajectories as semi-disentangled
//! spatiotemporal implicit neural representations (INRs), trajectory
//! classification directly from INR parameters, and controlled synthetic
//! cohort generation via a brain-age-deviation ODE.
//!
//! Start with the runnable examples (`cargo run --example ...`) or the
//! `trajinr` binary (`simulate`, `fit`, `classify`, `evaluate`).

pub mod classifier;
pub mod diffcore;
pub mod error;
pub mod inr;
pub mod metrics;
pub mod phantom;
pub mod pipeline;
pub mod rng;
pub mod trajectory;

pub use error::{Error, Result};
