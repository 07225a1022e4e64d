//! Scenario harness: config-driven simulations, named reproductions and
//! verification suites.

pub mod check;
pub mod config;
pub mod error;
pub mod output;
pub mod reproduce;
pub mod simulate;

pub use error::CliError;
pub use output::{Report, VERSION};

/// Caps the global worker pool at `SPHEREFLOW_THREADS` when set.
pub fn configure_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("SPHEREFLOW_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| CliError::Config(format!("SPHEREFLOW_THREADS = {v:?} is not a positive integer")))?;
        if n == 0 {
            return Err(CliError::Config("SPHEREFLOW_THREADS must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    Ok(())
}
