//! Multi-layer sparse coding for unsupervised image feature learning.
//!
//! The crate implements a feed-forward feature hierarchy built from repeated
//! sparse coding passes. Layer 1 computes dense gradient-histogram descriptors
//! on a regular patch grid and encodes them against a learned dictionary.
//! Each deeper layer first condenses the previous layer's sparse codes into
//! dense inputs (local spatial max-pooling onto a coarser grid, followed by a
//! learned contrastive linear embedding) and then runs sparse coding again.
//! Every layer contributes a spatial-pyramid pooled feature vector; the
//! concatenation feeds a linear one-vs-all SVM.
//!
//! The crate is `no_std` (with `alloc`) so the numerical pipeline stays free
//! of filesystem and platform concerns; file formats and the CLI live in the
//! companion `deepsc` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod classifier;
pub mod descriptor;
pub mod embedding;
mod error;
pub mod executor;
pub mod grid;
mod math;
pub mod pipeline;
pub mod pooling;
pub mod seeds;
pub mod sparse;

pub use error::{Error, Result};

/// Tolerance on unit-ball constraints: a column norm is accepted as feasible
/// when it does not exceed `1 + NORM_TOL`.
pub const NORM_TOL: f64 = 1e-12;
