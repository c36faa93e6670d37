//! One-sided margin (OSM) classification toolkit.
//!
//! The OSM loss fixes the classification margin up front: true-class scores
//! are pulled into the band `[0, lambda_min]` and every other score is pushed
//! beyond `lambda_max`. Predictions take the class with the *lowest* score.
//!
//! Modules:
//!
//! - [`losses`]: hard/soft OSM, hinge, cross-entropy, OSM log-probabilities.
//! - [`models`]: linear and one-hidden-layer MLP score functions.
//! - [`optim`]: SGD with momentum, Adam, learning-rate schedules.
//! - [`ctc`]: CTC loss over OSM frame probabilities, brute-force oracle, greedy decoding.
//! - [`data`]: seeded synthetic generators and CSV ingestion.
//! - [`train`]: training loops, metrics and margin statistics.
//! - [`gradcheck`]: finite-difference gradient suites.
//! - [`config`] and [`cli`]: the `osmargin` command-line harness.

pub mod cli;
pub mod config;
pub mod ctc;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod losses;
pub mod models;
pub mod optim;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
pub use losses::HyperParams;
