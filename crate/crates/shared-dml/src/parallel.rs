//! Thread-pool setup.
//!
//! The `SHARED_DML_THREADS` environment variable caps internal parallelism;
//! when unset, all available cores are used. Results never depend on the
//! thread count: parallel sections write disjoint, pre-indexed outputs.

use std::sync::OnceLock;

static POOL_INIT: OnceLock<()> = OnceLock::new();

/// Initialize the global rayon pool from `SHARED_DML_THREADS`, once.
///
/// Safe to call repeatedly; later calls are no-ops. If another component
/// already built the global pool, the existing pool is kept.
pub fn init_thread_pool() {
    POOL_INIT.get_or_init(|| {
        if let Some(n) = configured_threads() {
            // Ignore the error: the pool may already exist (e.g. under test
            // harnesses); determinism does not depend on the thread count.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    });
}

fn configured_threads() -> Option<usize> {
    let raw = std::env::var("SHARED_DML_THREADS").ok()?;
    match raw.trim().parse::<usize>() {
        Ok(n) if n >= 1 => Some(n),
        _ => {
            eprintln!("warning: ignoring invalid SHARED_DML_THREADS={raw:?}");
            None
        }
    }
}
