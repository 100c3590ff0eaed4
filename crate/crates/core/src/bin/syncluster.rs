use std::process::ExitCode;

use clap::Parser;
use syncluster::cli::{self, Cli};

/// Worker threads for data-parallel kernels, from `SYNC_THREADS` (default 1).
fn configure_threads() -> anyhow::Result<()> {
    let threads = match std::env::var("SYNC_THREADS") {
        Ok(v) => v
            .parse::<usize>()
            .ok()
            .filter(|&t| t > 0)
            .ok_or_else(|| syncluster::Error::Validation(format!("SYNC_THREADS must be a positive integer, got {v:?}")))?,
        Err(_) => 1,
    };
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| anyhow::anyhow!("thread pool: {e}"))?;
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match configure_threads().and_then(|()| cli::run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(cli::exit_code(&e))
        }
    }
}
