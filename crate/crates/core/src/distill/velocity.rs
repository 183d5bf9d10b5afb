use serde::{Deserialize, Serialize};

use crate::diffusion::perturb;
use crate::error::{check_len, Error, Result};
use crate::linalg::{log_sum_exp, sq_dist};
use crate::render::{render, render_vjp, view_l2_grad, CameraPose, RenderConfig, Scene, SceneGrad};

use super::prior::EpsilonModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WarmupConfig {
    /// Last iteration (1-based) with the asset velocity active.
    pub tau: usize,
    pub kernel_sigma2: f64,
    pub pose_batch: usize,
}

impl Default for WarmupConfig {
    fn default() -> Self {
        Self { tau: 300, kernel_sigma2: 0.05, pose_batch: 4 }
    }
}

impl WarmupConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.kernel_sigma2 > 0.0 && self.kernel_sigma2.is_finite()) {
            return Err(Error::Config(format!("warmup.kernel_sigma2 must be positive, got {}", self.kernel_sigma2)));
        }
        if self.pose_batch == 0 {
            return Err(Error::Config("warmup.pose_batch must be at least 1".into()));
        }
        Ok(())
    }

    pub fn active(&self, iteration: usize) -> bool {
        iteration <= self.tau
    }
}

/// Warm-up pull toward the assigned asset: `(1/σ²) ∇_θ E_ψ‖g(θ,ψ) − g(θ_ret,ψ)‖²`
/// while `iteration ≤ τ`, zero afterwards. Descending along it reduces the
/// render distance.
pub fn v_asset(
    particle: &Scene,
    asset: &Scene,
    poses: &[CameraPose],
    warmup: &WarmupConfig,
    iteration: usize,
    cfg: &RenderConfig,
) -> Result<SceneGrad> {
    if !warmup.active(iteration) {
        return Ok(SceneGrad::zeros(particle.len()));
    }
    let (_, grad) = view_l2_grad(particle, asset, poses, cfg)?;
    Ok(grad.scaled(1.0 / warmup.kernel_sigma2))
}

/// Gradient of `−log Σ_n exp(−‖θ − θ_n‖² / 2σ²)` over flattened parameters.
/// Only defined when every asset has the particle's point count.
pub fn kernel_velocity_exact(particle: &Scene, assets: &[Scene], kernel_sigma2: f64) -> Result<SceneGrad> {
    if assets.is_empty() {
        return Err(Error::Input("kernel velocity needs at least one asset".into()));
    }
    if kernel_sigma2.is_nan() || kernel_sigma2 <= 0.0 {
        return Err(Error::Domain(format!("kernel variance must be positive, got {kernel_sigma2}")));
    }
    let theta = particle.to_params();
    let flat: Vec<Vec<f64>> = assets
        .iter()
        .map(|a| {
            check_len(particle.len(), a.len())?;
            Ok(a.to_params())
        })
        .collect::<Result<_>>()?;
    let logs: Vec<f64> = flat.iter().map(|a| -sq_dist(&theta, a) / (2.0 * kernel_sigma2)).collect();
    let lse = log_sum_exp(&logs);
    let mut grad = vec![0.0; theta.len()];
    for (a, l) in flat.iter().zip(&logs) {
        let r = (l - lse).exp();
        for ((g, x), y) in grad.iter_mut().zip(&theta).zip(a) {
            *g += r * (x - y) / kernel_sigma2;
        }
    }
    Ok(SceneGrad(grad))
}

/// `w · (ε_prior(x_t) − ε_var(x_t))` in render space, for a clean `render`.
pub fn prior_residual(
    render_vec: &[f64],
    pose: CameraPose,
    t: f64,
    epsilon: &[f64],
    prior: &dyn EpsilonModel,
    variational: &dyn EpsilonModel,
    w_t: f64,
) -> Result<Vec<f64>> {
    let p = perturb(render_vec, t, epsilon)?;
    let a = prior.epsilon(&p.x_t, t, pose)?;
    let b = variational.epsilon(&p.x_t, t, pose)?;
    check_len(a.len(), b.len())?;
    Ok(a.iter().zip(&b).map(|(x, y)| w_t * (x - y)).collect())
}

/// Prior velocity of one particle at one view: the ε-difference between the
/// (adapted) prior and the variational model, pulled back through the
/// renderer. Descending along it moves the render toward the prior.
#[allow(clippy::too_many_arguments)]
pub fn v_2d(
    particle: &Scene,
    pose: CameraPose,
    t: f64,
    epsilon: &[f64],
    prior: &dyn EpsilonModel,
    variational: &dyn EpsilonModel,
    w_t: f64,
    cfg: &RenderConfig,
) -> Result<SceneGrad> {
    let img = render(particle, pose, cfg);
    let resid = prior_residual(img.as_slice(), pose, t, epsilon, prior, variational, w_t)?;
    render_vjp(particle, pose, cfg, &resid)
}

/// Plain SDS direction `w (ε_prior(x_t) − ε)` pulled back through the renderer.
#[allow(clippy::too_many_arguments)]
pub fn sds_velocity(
    particle: &Scene,
    pose: CameraPose,
    t: f64,
    epsilon: &[f64],
    prior: &dyn EpsilonModel,
    w_t: f64,
    cfg: &RenderConfig,
) -> Result<SceneGrad> {
    let img = render(particle, pose, cfg);
    let p = perturb(img.as_slice(), t, epsilon)?;
    let e = prior.epsilon(&p.x_t, t, pose)?;
    let cot: Vec<f64> = e.iter().zip(epsilon).map(|(a, b)| w_t * (a - b)).collect();
    render_vjp(particle, pose, cfg, &cot)
}

/// `v − weight · v_at_asset`.
pub fn delta_denoise_adjust(v2d_current: &SceneGrad, v2d_at_asset: &SceneGrad, weight: f64) -> Result<SceneGrad> {
    check_len(v2d_current.0.len(), v2d_at_asset.0.len())?;
    let mut out = v2d_current.clone();
    out.add_scaled(-weight, v2d_at_asset);
    Ok(out)
}

/// Velocity attributable to the assets: adapted minus unadapted prior
/// velocity on shared draws.
#[allow(clippy::too_many_arguments)]
pub fn asset_velocity_component(
    particle: &Scene,
    pose: CameraPose,
    t: f64,
    epsilon: &[f64],
    adapted: &dyn EpsilonModel,
    unadapted: &dyn EpsilonModel,
    variational: &dyn EpsilonModel,
    w_t: f64,
    cfg: &RenderConfig,
) -> Result<SceneGrad> {
    let a = v_2d(particle, pose, t, epsilon, adapted, variational, w_t, cfg)?;
    let b = v_2d(particle, pose, t, epsilon, unadapted, variational, w_t, cfg)?;
    let mut out = a;
    out.add_scaled(-1.0, &b);
    Ok(out)
}
