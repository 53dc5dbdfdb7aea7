//! Pulse-level simulation of flux-modulated transmons coupled to a resonator,
//! with a dispersive-theory prediction layer cross-checked against exact numerics.

// `!(x > 0.0)` is used on purpose so that NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibrate;
pub mod device;
pub mod dispersive;
pub mod error;
pub mod evolve;
pub mod experiments;
pub mod hilbert;
pub mod linalg;
pub mod metrics;
pub mod pulses;
pub mod sideband_model;

pub use error::{Error, Result};
