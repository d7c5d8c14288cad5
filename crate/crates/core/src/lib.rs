//! Finite-form adaptive control: goal-function control law, proportional–integral
//! parameter estimation, persistent-excitation diagnostics and reference scenarios.

// `!(v > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adapt;
pub mod cli;
pub mod eigen;
pub mod error;
pub mod excitation;
pub mod integrate;
pub mod math;
pub mod numdiff;
pub mod scenarios;
pub mod verify;

pub use error::{Error, Result};
