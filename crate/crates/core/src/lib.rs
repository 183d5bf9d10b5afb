//! Retrieval-augmented score distillation on a toy differentiable point
//! renderer with an analytic Gaussian-mixture diffusion prior.

pub mod adapter;
pub mod diffusion;
pub mod distill;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod render;
pub mod retrieval;
pub mod rng;
pub mod synthetic;

pub use error::{Error, Result};
