use crate::diffusion::{oracle_epsilon, GaussianMixtureTarget};
use crate::error::Result;
use crate::render::CameraPose;

use super::estimator::VariationalEstimator;

/// Anything that predicts the noise in `x_t` at level `t` for a view `pose`.
pub trait EpsilonModel {
    fn epsilon(&self, x_t: &[f64], t: f64, pose: CameraPose) -> Result<Vec<f64>>;
}

/// The unadapted analytic prior.
#[derive(Debug, Clone, Copy)]
pub struct OraclePrior<'a> {
    pub target: &'a GaussianMixtureTarget,
}

impl EpsilonModel for OraclePrior<'_> {
    fn epsilon(&self, x_t: &[f64], t: f64, _pose: CameraPose) -> Result<Vec<f64>> {
        oracle_epsilon(x_t, t, self.target)
    }
}

/// `ε_{φ,ζ}`: the oracle plus the trained low-rank correction.
#[derive(Debug, Clone, Copy)]
pub struct VariationalModel<'a> {
    pub target: &'a GaussianMixtureTarget,
    pub estimator: &'a VariationalEstimator,
}

impl EpsilonModel for VariationalModel<'_> {
    fn epsilon(&self, x_t: &[f64], t: f64, pose: CameraPose) -> Result<Vec<f64>> {
        variational_epsilon(self.estimator, self.target, x_t, t, pose)
    }
}

/// Returns the injected noise itself; using it in place of the variational
/// model turns the prior velocity into the plain SDS direction.
#[derive(Debug, Clone)]
pub struct InjectedNoise(pub Vec<f64>);

impl EpsilonModel for InjectedNoise {
    fn epsilon(&self, x_t: &[f64], _t: f64, _pose: CameraPose) -> Result<Vec<f64>> {
        crate::error::check_len(x_t.len(), self.0.len())?;
        Ok(self.0.clone())
    }
}

pub fn variational_epsilon(
    estimator: &VariationalEstimator,
    target: &GaussianMixtureTarget,
    x_t: &[f64],
    t: f64,
    pose: CameraPose,
) -> Result<Vec<f64>> {
    let base = oracle_epsilon(x_t, t, target)?;
    estimator.epsilon_with_base(&base, x_t, t, pose)
}
