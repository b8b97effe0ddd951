//! Markov-switching and double chain Markov models of the coupled spread and
//! mid-price dynamics of large-tick assets, in transaction time.
//!
//! Spreads live in `{1, 2}` ticks and returns in `-2..=2` half ticks. The
//! crate covers analytic moments and autocorrelations, calibration from tick
//! data, Monte Carlo simulation and the `tickms` batch pipeline.

pub mod calibrate;
pub mod cli;
pub mod dcmm;
pub mod error;
pub mod ingest;
pub mod markov;
pub mod ms;
pub mod presets;
pub mod simulate;
pub mod states;
pub mod stats;

pub use error::{Error, Result};
