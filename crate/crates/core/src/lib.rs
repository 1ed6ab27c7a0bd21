//! Probabilistic occupancy risk assessment.
//!
//! The crate computes a per-timestep collision-risk score from occupancy
//! grids along an AV's planned trajectory, provides time-to-collision
//! baselines, a seeded kinematic traffic simulator and the statistics used to
//! compare them. It is `no_std` and only needs `alloc`; file formats, batch
//! parallelism and the command line live in the `pora` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod analysis;
pub mod error;
pub mod grid;
pub mod predictor;
pub mod risk;
pub mod sim;
pub mod surrogates;
pub mod types;

pub use error::{Error, Result};
