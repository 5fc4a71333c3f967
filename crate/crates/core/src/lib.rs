pub mod analytic;
pub mod artifacts;
pub mod error;
pub mod fourier;
pub mod geometry;
pub mod grid;
pub mod noise;
pub mod operator;
pub mod pipeline;
pub mod phantom;
pub mod solvers;

pub use error::{Error, Result};
