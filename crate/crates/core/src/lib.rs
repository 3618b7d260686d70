pub mod data;
pub mod error;
pub mod harness;
pub mod normalize;
pub mod privacy;
pub mod rng;
pub mod scatter;
pub mod sgd;

pub use error::{Error, Result};
