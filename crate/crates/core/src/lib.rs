//! Monte-Carlo simulation of thermal atoms crossing a photonic-crystal nanobeam
//! cavity: mode coupling and Casimir-Polder shifts along ballistic paths, driven
//! Tavis-Cummings dynamics, and ensemble-averaged transmission spectra.

// `!(x > 0.0)` rejects NaN on purpose; kernels index several buffers in lockstep
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod casimir;
pub mod cavity;
pub mod config;
pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod quadrature;
pub mod trajectory;
pub mod units;

pub use error::{Error, Result};
