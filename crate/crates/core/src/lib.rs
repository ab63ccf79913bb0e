//! Invariant observers and tracking controllers for left-invariant systems on
//! Lie groups, with numerical checks of the separation principle around
//! permanent trajectories.

// `!(x > 0.0)` is used on purpose so NaN fails validation; the dense
// matrix routines index rows and columns directly.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod closed_loop;
pub mod config;
pub mod controller;
pub mod ekf;
pub mod error;
pub mod lie;
pub mod mech;
pub mod numerics;
pub mod observer;
pub mod robot;
pub mod trajectory;

pub use error::{Error, Result};
