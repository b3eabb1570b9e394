//! Forecasting of Sunn Pest life-cycle phase and nymphal stage composition
//! from daily weather records.

pub mod bundle;
pub mod cli;
mod error;
pub mod eval;
pub mod features;
pub mod ingest;
pub mod pipeline;
pub mod synth;
pub mod tree;
pub mod warning;

pub use error::Error;
