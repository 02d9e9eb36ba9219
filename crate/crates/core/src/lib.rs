//! Spiking-function statistics for detecting regularities in data.
//!
//! A spiking function `f` spikes on `x` when `f(x) > 0`. Comparing how often
//! it spikes on data versus uniform noise gives a Z-score and a KL-based
//! spiking efficiency; dividing the efficiency by the function's parameter
//! count gives its ability. Sequences of functions are evaluated with
//! first-spike masking and candidate encoders are ranked by these numbers.

pub mod bioutput;
pub mod distributions;
pub mod error;
pub mod geometry;
pub mod mnist;
pub mod sampling;
pub mod scene;
pub mod search;
pub mod sequence;
pub mod spiking;
pub mod stats;

pub use error::{Error, Result};
