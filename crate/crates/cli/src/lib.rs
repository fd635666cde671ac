//! Seeded experiment harness for the `cavi` crate: replicated runs of every
//! model family, empirical-versus-theoretical rate comparisons, and CSV and
//! gnuplot artifacts.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod summary;

pub use commands::{run, Command};
pub use config::RawConfig;
pub use error::{CliError, Result};
pub use summary::RunSummary;

/// Flag values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub replications: Option<usize>,
    pub max_iter: Option<usize>,
    pub tol: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, raw: &mut RawConfig) {
        if let Some(v) = self.seed {
            raw.set("seed", v);
        }
        if let Some(v) = self.replications {
            raw.set("replications", v);
        }
        if let Some(v) = self.max_iter {
            raw.set("max_iter", v);
        }
        if let Some(v) = self.tol {
            raw.set("tol", format!("{v:e}"));
        }
    }
}
