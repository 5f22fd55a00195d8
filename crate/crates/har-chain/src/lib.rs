//! An activity recognition chain for wearable inertial sensor data.
//!
//! The crate covers the full pipeline: CSV ingestion, resampling and
//! normalization, sliding-window segmentation, a convolutional-recurrent
//! classifier trained with a from-scratch autodiff engine, evaluation
//! metrics, and cross-validation protocols. Every stage is deterministic
//! under a single master seed.
//!
//! Start with the examples directory: each example exercises one stage end
//! to end and doubles as usage documentation.

pub mod cli;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod linalg;
pub mod model;
pub mod numcore;
pub mod preprocess;
pub mod rng;
pub mod train;
pub mod validate;

pub use error::{Error, Result};
