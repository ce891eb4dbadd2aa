//! Decentralized ("disentangled") multi-agent control synthesis.
//!
//! Each agent turns the Lyapunov and barrier functions it participates in
//! into affine constraints on its own input, then solves a small QP. No
//! agent reads another agent's simultaneous input.

pub mod constraints;
pub mod error;
pub mod manifest;
pub mod par;
pub mod qp;
pub mod scenarios;
pub mod sim;
pub mod types;
pub mod verify;
pub mod voronoi;

pub use error::{Error, Result};
