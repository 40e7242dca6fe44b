//! Robust-norm graph propagation and a two-layer graph convolutional network.
//!
//! The propagation functions in [`propagate`] reconstruct node features over a
//! graph. The robust ones tolerate gross corruption (ℓ1 fitting, solved by
//! FISTA) or missing entries (mask-weighted fitting). [`nn`] wraps a chosen
//! propagator into a two-layer network trained with Adam, and [`experiment`]
//! drives multi-seed corruption experiments on top of it.

// Parameter checks are written `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod corrupt;
pub mod data;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod nn;
pub mod propagate;
pub mod solve;
pub mod sparse;

pub use error::{Error, Result};
