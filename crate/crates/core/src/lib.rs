//! Hardware Trojan detection on gate-level netlists.
//!
//! The crate is organised as a pipeline:
//!
//! - [`netlist`] parses structural Verilog into an immutable [`netlist::CircuitGraph`]
//!   and writes it back out.
//! - [`features`] computes the 51 structural features of every net.
//! - [`model`] is the MLP detector (51-200-100-50-1, sigmoid, Adam).
//! - [`rewrite`] holds the logic-equivalent modification patterns, a bit-parallel
//!   simulator and the equivalence checker.
//! - [`attack`] implements the greedy gate modification attack driven by the
//!   alpha-TCD / TTCD concealment metrics.
//! - [`advtrain`] trains a detector with TTCD adversarial examples mixed into
//!   its mini-batches.
//! - [`eval`] runs leave-one-out experiments and writes reports.
//! - [`synth`] generates synthetic host circuits with embedded trigger cones.

pub mod advtrain;
pub mod attack;
pub mod config;
pub mod eval;
pub mod features;
pub mod model;
pub mod netlist;
pub mod rewrite;
pub mod synth;

mod error;

pub use error::{Error, Result};

/// Probabilities are clamped into `[PROB_EPS, 1 - PROB_EPS]` before any logarithm.
pub const PROB_EPS: f64 = 1e-7;
