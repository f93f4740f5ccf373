//! Linear MPC with reference condensation.
//!
//! A preview trajectory `(r_1, ..., r_N)` is compressed into one setpoint
//! `r_bar = S r` through a linear map chosen so that the constant-reference
//! control sequence best matches the preview one. The crate provides the
//! batch LQ tracking operators, the condensation maps and their error bounds,
//! a dense QP solver for the constrained MPC problem, the four compared
//! controllers, and the closed-loop studies.

pub mod cli;
pub mod condensation;
pub mod config;
pub mod controllers;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod lq_batch;
pub mod qp;
pub mod verify;

pub use error::{Error, Result};
pub use nalgebra;
