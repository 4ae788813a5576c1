//! Residual memory networks: feedforward acoustic models whose stacked
//! memory layers reach into past (and optionally future) frames through
//! time-delayed connections with a single shared weight.

pub mod data;
mod error;
pub mod model;
pub mod numerics;
mod par;
pub mod trainer;

pub use error::{Error, Result, Shape};
pub use model::{Model, RMNConfig};
pub use par::Exec;
