//! Evaluation engine for volumetric anatomical segmentation benchmarks.

pub mod complexity;
pub mod error;
pub mod fusion;
pub mod metrics;
pub mod ranking;
pub mod report;
pub mod stats;
pub mod summary;
pub mod volume;

pub use error::{Error, Result};
