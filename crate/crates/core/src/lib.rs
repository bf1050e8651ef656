//! Adaptive P1 finite elements for 2D heat problems, with a neural
//! surrogate standing in for the previous time level.

// `!(x > 0.0)` is used on purpose: it rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod adapt;
pub mod bench;
pub mod config;
pub mod error;
pub mod fem;
pub mod mesh;
pub mod recovery;
pub mod sizefield;
pub mod surrogate;

pub use error::{Error, Result};
