//! Deterministic discrete-event simulator for real-time video over an L4S
//! dual-queue bottleneck.

pub mod aqm;
pub mod cc;
pub mod error;
pub mod harness;
pub mod media;
pub mod netem;
pub mod rng;
pub mod sim;
pub mod types;

pub use error::ConfigError;
