//! Hawkes-process tools for multi-neuron spike trains: simulation, sparse
//! connectivity estimation, goodness-of-fit testing, a Hawkes-driven
//! jump-diffusion model for the membrane potential and depth-based validation
//! of simulated potential curves.

// `!(x > 0.0)` is the NaN-rejecting form used by every validator.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adm4;
pub mod data;
pub mod depth;
pub mod error;
pub mod gof;
pub mod jumpdiff;
pub mod model;
pub mod network;
pub mod npl;
pub mod pipeline;
pub mod sim;

pub use error::{Error, ErrorKind, Result};
