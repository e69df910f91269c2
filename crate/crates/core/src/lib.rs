//! Design and evaluation of coded pupil masks for event-camera 3D localization.
//!
//! The crate simulates depth-dependent PSFs under phase or amplitude masks,
//! converts intensity videos into events, computes Fisher information and
//! Cramer-Rao bounds for event measurements, optimizes masks against those
//! bounds, and scores masks in a 3D tracking simulation.

pub mod baselines;
pub mod cli;
pub mod error;
pub mod eventsim;
pub mod fisher;
pub mod image;
pub mod optics;
pub mod optimize;
pub mod param;
pub mod reduce;
pub mod tracking;

pub use error::{Error, Result};
