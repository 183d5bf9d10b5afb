//! Test-time low-rank adaptation of the analytic prior on renders of the
//! retrieved assets, with learnable view-prefix vectors.

mod params;
mod train;

pub use params::{
    adapted_epsilon, condition_vector, init_prefixes, AdaptedPrior, AdapterCheckpoint, AdapterParams, ViewPrefixTokens,
    CONDITION_DIM,
};
pub use train::{
    adapt, adaptation_loss_and_grad, AdaptConfig, AdaptOutput, AdaptSample, AdapterGrad, CurvePoint, PrefixMode,
};
