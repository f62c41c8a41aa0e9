//! Sweep driver behind the `qmetro` binary.
//!
//! Everything the binary does is reachable from here so tests can drive
//! sweeps without spawning processes.

pub mod config;
pub mod gradcheck;
pub mod reference;
pub mod sweep;

use thiserror::Error;

pub use config::{Experiment, RunConfig};
pub use sweep::{run_sweep, ResultRow, SweepOutput};

/// Exit status for bad input.
pub const EXIT_VALIDATION: i32 = 1;
/// Exit status for a numerical failure or a failed check.
pub const EXIT_NUMERICAL: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::Io { .. } => EXIT_VALIDATION,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

impl From<qmetro::Error> for CliError {
    fn from(e: qmetro::Error) -> Self {
        use qmetro::Error as E;
        match e {
            E::Numerical(_) | E::InvalidProbability(_) | E::NotPositive(_) | E::Degenerate(_) => {
                CliError::Numerical(e.to_string())
            }
            _ => CliError::Validation(e.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of the first restart at one sweep point.
///
/// Hashes the base seed, the bit pattern of the grid value and the ansatz
/// tag, so the seed of a point never depends on which other points are in
/// the grid. Restart `k` uses this value plus `k`.
pub fn point_seed(base: u64, noise_value: f64, ansatz_tag: u64) -> u64 {
    mix64(mix64(mix64(base) ^ noise_value.to_bits()) ^ ansatz_tag)
}
