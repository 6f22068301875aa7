//! Behavioral credit scoring from mobile-phone transaction logs.

pub mod cdr;
pub mod error;

pub use error::{Error, Result};
pub mod aggregate;
pub mod evaluate;
pub mod featurize;
pub mod learn;
pub mod pipeline;
pub mod synth;
