//! Distal pointing performance modeling.
//!
//! Angular index-of-difficulty models, task plan generation for ISO-circle and
//! hemispherical-grid layouts, one- and two-part regression, behavioral
//! analysis of ray trajectories, a pointing simulator and the file formats
//! that tie them together.

pub mod analysis;
pub mod cli;
pub mod error;
pub mod geometry;
pub mod io;
pub mod models;
pub mod regression;
pub mod simulator;
pub mod taskgen;

pub use error::{Error, Result};
