pub mod channel;
pub mod datasets;
pub mod diffcore;
pub mod error;
pub mod gradcheck;
pub mod harness;
pub mod metrics;
pub mod rng;
pub mod training;
pub mod transceiver;

pub use error::{Error, Result};
