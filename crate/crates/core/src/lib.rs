pub mod analysis;
pub mod config;
pub mod dataset;
pub mod encoding;
pub mod error;
pub mod model;
pub mod ndcompute;
pub mod numtheory;
pub mod selftest;
pub mod training;

pub use error::{Error, Result};
