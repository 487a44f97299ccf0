//! Library surface of the `srg` binary, exposed so integration tests can
//! drive the exact command implementations.

pub mod commands;
pub mod config;
pub mod pipeline;

/// Cap rayon's parallelism from `SRG_THREADS` (no-op when unset or when a
/// global pool already exists).
pub fn init_thread_pool() -> anyhow::Result<()> {
    if let Ok(value) = std::env::var("SRG_THREADS") {
        let threads: usize = value
            .parse()
            .map_err(|_| anyhow::anyhow!("SRG_THREADS={value:?} is not a thread count"))?;
        if threads == 0 {
            anyhow::bail!("SRG_THREADS must be >= 1");
        }
        // ignore the error if a pool was already installed
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    Ok(())
}
