//! Trajectory optimization for inertial tail maneuvering: a serial-chain
//! rigid-body model of a torso with an n-link tail, direct-collocation
//! transcription, an interior-point solver, forward simulation and the
//! experiment harness built on top of them.

pub mod collision;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod model;
pub mod morphometrics;
pub mod multistart;
pub mod solver;
pub mod simulate;
pub mod spatial;
pub mod trajgen;
pub mod transcription;

pub use error::{Error, Result};
