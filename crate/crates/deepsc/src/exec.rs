//! Rayon-backed executor for the pipeline's per-image stages.
//!
//! Results come back in input order and every random draw is pre-seeded, so
//! the worker count never changes any output byte.

use deepsc_core::executor::Executor;
use rayon::prelude::*;

use crate::error::{config_error, CmdResult};

#[derive(Debug, Clone, Copy, Default)]
pub struct RayonExec;

impl Executor for RayonExec {
    fn map<T, U, F>(&self, items: &[T], f: F) -> Vec<U>
    where
        T: Sync,
        U: Send,
        F: Fn(&T) -> U + Sync + Send,
    {
        items.par_iter().map(f).collect()
    }
}

/// Runs `body` on a pool with the requested thread count, or on the global
/// pool when unspecified.
pub fn with_jobs<R: Send>(jobs: Option<usize>, body: impl FnOnce() -> R + Send) -> CmdResult<R> {
    match jobs {
        None => Ok(body()),
        Some(0) => Err(config_error!("--jobs must be at least 1")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| config_error!("cannot build a {n}-thread pool: {e}"))?;
            Ok(pool.install(body))
        }
    }
}
