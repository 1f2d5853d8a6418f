pub mod catalog;
pub mod cli;
pub mod error;
pub mod currents;
pub mod exterior;
pub mod fieldops;
pub mod geometry;
pub mod grid;
pub mod jet;
pub mod patch;
pub mod poisson;
pub mod potentials;
pub mod problems;
pub mod residue;
pub mod sampled;

pub use error::{Error, Result};
