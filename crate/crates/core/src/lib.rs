pub mod clearsky;
pub mod config;
pub mod cot;
pub mod csvio;
pub mod error;
pub mod geometry;
pub mod imaging;
pub mod pipeline;
pub mod stats;
pub mod synth;
pub mod time;

pub use error::{Error, Result};
