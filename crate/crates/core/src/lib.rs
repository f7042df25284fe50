//! Networks of gain-dissipative condensate centres: simulation, asymmetric-dyad
//! statistics, pump calibration against blueshift imperfections and dyad-chain
//! random number generation.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod model;
pub mod perturbation;
pub mod rng;
pub mod spline;
pub mod topology;

pub use error::{Error, Result};
