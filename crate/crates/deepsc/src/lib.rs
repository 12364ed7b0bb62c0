//! File formats, dataset handling, and CLI commands around the
//! `deepsc-core` feature-learning pipeline.
//!
//! The core crate owns the numerics (descriptors, sparse coding, pooling,
//! contrastive embedding, SVM); this crate adds everything that touches the
//! outside world: image decoding, text formats for every artifact, dataset
//! splits, a synthetic dataset generator, a rayon executor, and the command
//! implementations behind the `deepsc` binary.

pub mod config;
pub mod dataset;
pub mod error;
pub mod exec;
pub mod formats;
pub mod imageio;
pub mod runner;
pub mod synth;

pub use deepsc_core as core;
pub use error::{CmdError, CmdResult};
