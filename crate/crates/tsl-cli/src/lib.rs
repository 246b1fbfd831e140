//! Batch driver for `tsl-core`: JSON experiment configs in, reports and CSV out.

pub mod config;
pub mod error;
pub mod run;

pub use config::Config;
pub use error::CliError;
pub use run::{run_config_file, run_pipeline, Manifest};

/// Caps the global rayon pool at `TSL_THREADS` when it is set.
pub fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("TSL_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::config(format!("TSL_THREADS = `{v}` is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::config(e.to_string()))
}
