//! Affinity mixup network for weakly supervised sound event detection:
//! log-mel front end, the AM-regularized CRNN, MIL training, event decoding
//! and scoring, and a synthetic soundscape generator.

pub mod affinity;
pub mod audio;
pub mod data;
mod error;
pub mod eval;
pub mod metrics;
pub mod model;
pub mod study;
pub mod train;

pub use error::{Error, Result};
