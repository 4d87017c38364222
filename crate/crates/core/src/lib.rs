//! Simulated multi-time qubit statistics and an extremely randomized trees
//! regressor that estimates the dimension of the memory-carrying part of a
//! quantum environment.

pub mod cli;
pub mod datagen;
pub mod error;
pub mod extratrees;
pub mod metrics;
pub mod process;
pub mod quantum;
pub mod seed;

pub use error::{Error, Result};
