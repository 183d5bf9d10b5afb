//! Analytic stand-in for a text-conditioned 2D diffusion prior.
//!
//! The "data" distribution for a condition is an isotropic Gaussian mixture in
//! render space. Under the variance-preserving schedule every perturbed
//! component stays Gaussian, so scores, ε-predictions and probability-flow
//! samples are available in closed form.

mod ddim;
pub mod geometric;
mod mixture;
mod schedule;

pub use ddim::{ddim_sample, ddim_sample_eps};
pub use mixture::{
    build_conditional_target, oracle_epsilon, oracle_score, CameraBias, GaussianMixtureTarget, MixtureComponent,
};
pub use schedule::{perturb, schedule_coeffs, NoiseSchedule, PerturbedSample, WeightMode};
