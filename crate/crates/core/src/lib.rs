//! Coordinate ascent variational inference for two-block targets, with the
//! closed-form Wasserstein-2 contraction rates that govern it.
//!
//! The crate is organised bottom-up:
//!
//! * [`linmetric`]: symmetric linear algebra, special functions and metrics
//!   between Gaussian measures.
//! * [`targets`]: model families and seeded synthetic data.
//! * [`engine`]: CAVI sweeps, fixed points, traces and empirical rates.
//! * [`rates`]: theoretical contraction rates and their limits.
//! * [`altmin`]: alternating minimisation on two-block objectives.

pub mod error;
pub mod linmetric;
pub mod targets;
pub mod engine;
pub mod rates;
pub mod altmin;

pub use error::{Error, Result};
