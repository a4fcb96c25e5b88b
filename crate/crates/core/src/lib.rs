//! Unsupervised place recognition for spinning FMCW radar.
//!
//! The crate covers the whole pipeline: a synthetic radar world that emits
//! polar scans along planned routes, batch sampling with temporal and
//! rotational augmentation, a convolutional scan encoder trained with an
//! instance-discrimination objective, and retrieval evaluation against
//! ground-truth poses.

pub mod config;
pub mod embed;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod loss;
pub mod rng;
pub mod sampler;
pub mod scan;
pub mod sim;
pub mod train;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
