use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use super::schedule::schedule_coeffs;
use crate::error::{check_len, Error, Result};
use crate::linalg::log_sum_exp;
use crate::render::{render, CameraPose, RenderConfig, Scene};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub mean: Vec<f64>,
    /// Isotropic variance: the component covariance is `cov_scale · I`.
    pub cov_scale: f64,
    pub weight: f64,
}

/// Condition-specific data distribution `p(x | c)` in render space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixtureTarget {
    pub condition_id: String,
    pub components: Vec<MixtureComponent>,
}

impl GaussianMixtureTarget {
    pub fn new(condition_id: impl Into<String>, components: Vec<MixtureComponent>) -> Result<Self> {
        let target = Self { condition_id: condition_id.into(), components };
        target.validate()?;
        Ok(target)
    }

    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.components.first() else {
            return Err(Error::Config(format!("mixture `{}` has no components", self.condition_id)));
        };
        let dim = first.mean.len();
        let mut total = 0.0;
        for (k, c) in self.components.iter().enumerate() {
            check_len(dim, c.mean.len())?;
            if !(c.cov_scale > 0.0 && c.cov_scale.is_finite()) {
                return Err(Error::Config(format!("component {k} has non-positive cov_scale {}", c.cov_scale)));
            }
            if !(c.weight >= 0.0 && c.weight.is_finite()) {
                return Err(Error::Config(format!("component {k} has invalid weight")));
            }
            total += c.weight;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!("mixture weights sum to {total}, expected 1")));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.components.first().map_or(0, |c| c.mean.len())
    }

    /// Single isotropic Gaussian `N(mean, cov_scale · I)`.
    pub fn single(condition_id: impl Into<String>, mean: Vec<f64>, cov_scale: f64) -> Result<Self> {
        Self::new(condition_id, vec![MixtureComponent { mean, cov_scale, weight: 1.0 }])
    }

    /// Mixture of mixtures: every component of `parts[i]` is reweighted by `weights[i]`.
    pub fn combine(condition_id: impl Into<String>, parts: &[(&GaussianMixtureTarget, f64)]) -> Result<Self> {
        let mut components = Vec::new();
        for (target, w) in parts {
            for c in &target.components {
                components.push(MixtureComponent {
                    mean: c.mean.clone(),
                    cov_scale: c.cov_scale,
                    weight: c.weight * w,
                });
            }
        }
        renormalize(&mut components);
        Self::new(condition_id, components)
    }

    /// Per-component log densities of `x_t` under the mixture perturbed to
    /// noise level `t`, including the log mixture weight.
    fn component_log_densities(&self, x_t: &[f64], t: f64) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        self.validate_nonempty()?;
        check_len(self.dim(), x_t.len())?;
        let (alpha, sigma) = schedule_coeffs(t)?;
        let d = x_t.len() as f64;
        let mut logs = Vec::with_capacity(self.components.len());
        let mut vars = Vec::with_capacity(self.components.len());
        for c in &self.components {
            let var = alpha * alpha * c.cov_scale + sigma * sigma;
            let sq: f64 = x_t
                .iter()
                .zip(&c.mean)
                .map(|(x, m)| {
                    let r = x - alpha * m;
                    r * r
                })
                .sum();
            let lw = if c.weight > 0.0 { c.weight.ln() } else { f64::NEG_INFINITY };
            logs.push(lw - 0.5 * d * (2.0 * PI * var).ln() - sq / (2.0 * var));
            vars.push(var);
        }
        Ok((alpha, logs, vars))
    }

    fn validate_nonempty(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::Config(format!("mixture `{}` has no components", self.condition_id)));
        }
        Ok(())
    }

    /// `log p_t(x_t)` of the perturbed mixture.
    pub fn log_density(&self, x_t: &[f64], t: f64) -> Result<f64> {
        let (_, logs, _) = self.component_log_densities(x_t, t)?;
        Ok(log_sum_exp(&logs))
    }

    /// Posterior component probabilities given `x_t` at noise level `t`.
    pub fn responsibilities(&self, x_t: &[f64], t: f64) -> Result<Vec<f64>> {
        let (_, logs, _) = self.component_log_densities(x_t, t)?;
        let lse = log_sum_exp(&logs);
        Ok(logs.iter().map(|l| (l - lse).exp()).collect())
    }

    /// Upper bound `Σ π_k (H_k − log π_k)` on the entropy of the clean mixture,
    /// tight for well-separated components.
    pub fn entropy_upper_bound(&self) -> f64 {
        let d = self.dim() as f64;
        self.components
            .iter()
            .filter(|c| c.weight > 0.0)
            .map(|c| {
                let h = 0.5 * d * (2.0 * PI * std::f64::consts::E * c.cov_scale).ln();
                c.weight * (h - c.weight.ln())
            })
            .sum()
    }
}

fn renormalize(components: &mut [MixtureComponent]) {
    let total: f64 = components.iter().map(|c| c.weight).sum();
    if total > 0.0 {
        for c in components.iter_mut() {
            c.weight /= total;
        }
    }
}

/// `∇_{x_t} log p_t(x_t | c)`. Component `k` perturbs to
/// `N(α μ_k, (α² s_k + σ²) I)`.
pub fn oracle_score(x_t: &[f64], t: f64, target: &GaussianMixtureTarget) -> Result<Vec<f64>> {
    let (alpha, logs, vars) = target.component_log_densities(x_t, t)?;
    let lse = log_sum_exp(&logs);
    let mut score = vec![0.0; x_t.len()];
    for ((c, l), var) in target.components.iter().zip(&logs).zip(&vars) {
        let r = (l - lse).exp();
        if r == 0.0 {
            continue;
        }
        let coef = r / var;
        for ((s, x), m) in score.iter_mut().zip(x_t).zip(&c.mean) {
            *s -= coef * (x - alpha * m);
        }
    }
    Ok(score)
}

/// ε-prediction `−σ(t) · ∇ log p_t(x_t)`.
pub fn oracle_epsilon(x_t: &[f64], t: f64, target: &GaussianMixtureTarget) -> Result<Vec<f64>> {
    let (_, sigma) = schedule_coeffs(t)?;
    let mut eps = oracle_score(x_t, t, target)?;
    for v in eps.iter_mut() {
        *v *= -sigma;
    }
    Ok(eps)
}

/// Distribution over the camera poses a prior "prefers" for a condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraBias {
    pub poses: Vec<(CameraPose, f64)>,
}

impl CameraBias {
    pub fn new(poses: Vec<(CameraPose, f64)>) -> Self {
        Self { poses }
    }

    /// Weights on the front (0), side (π/2) and back (π) views.
    pub fn front_side_back(front: f64, side: f64, back: f64) -> Self {
        Self::new(vec![(CameraPose::new(0.0), front), (CameraPose::new(FRAC_PI_2), side), (CameraPose::new(PI), back)])
    }

    pub fn uniform(poses: &[CameraPose]) -> Self {
        let w = 1.0 / poses.len().max(1) as f64;
        Self::new(poses.iter().map(|&p| (p, w)).collect())
    }
}

/// View-biased conditional target: one component per pose, centred on the
/// render of `canonical_scene` at that pose and weighted by the bias.
pub fn build_conditional_target(
    condition_id: impl Into<String>,
    canonical_scene: &Scene,
    camera_bias: &CameraBias,
    renderer_cfg: &RenderConfig,
    cov_scale: f64,
) -> Result<GaussianMixtureTarget> {
    if camera_bias.poses.is_empty() {
        return Err(Error::Config("camera bias has no poses".into()));
    }
    let total: f64 = camera_bias.poses.iter().map(|(_, w)| w).sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::Config(format!("camera bias weights sum to {total}, expected 1")));
    }
    let components = camera_bias
        .poses
        .iter()
        .map(|&(pose, weight)| MixtureComponent {
            mean: render(canonical_scene, pose, renderer_cfg).into_vec(),
            cov_scale,
            weight,
        })
        .collect();
    GaussianMixtureTarget::new(condition_id, components)
}
