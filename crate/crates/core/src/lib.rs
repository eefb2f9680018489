//! Simulation, exact enumeration and dependence-coefficient verification
//! for the two-sided replicating character string model.

// `!(x >= 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod domain;
pub mod error;
pub mod exact;
pub mod mixing;
pub mod processes;
pub mod replication;
pub mod verify;
pub mod cli;

pub use error::{Error, Result};
