use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::diffusion::perturb;
use crate::error::{check_len, Result};
use crate::linalg::{dot, Matrix};
use crate::render::CameraPose;
use crate::rng::Rng;

/// Evenly spaced buckets over `[t_min, t_max]`; values outside clamp to the
/// end buckets.
pub fn t_bucket(t: f64, t_min: f64, t_max: f64, buckets: usize) -> usize {
    if buckets <= 1 || t_max <= t_min {
        return 0;
    }
    let f = ((t - t_min) / (t_max - t_min) * buckets as f64).floor();
    (f.max(0.0) as usize).min(buckets - 1)
}

/// Nearest of `buckets` evenly spaced azimuths.
pub fn pose_bucket(pose: CameraPose, buckets: usize) -> usize {
    if buckets <= 1 {
        return 0;
    }
    let f = (pose.azimuth() / std::f64::consts::TAU * buckets as f64).round() as usize;
    f % buckets
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    pub rank: usize,
    /// Step size of the bias table.
    pub learning_rate: f64,
    /// Step size of the low-rank factors, which see inputs of norm up to
    /// `sqrt(dim)` and need a much smaller step.
    pub factor_learning_rate: f64,
    pub t_buckets: usize,
    pub pose_buckets: usize,
    /// Standard deviation of the random init of `V`; `U` starts at zero.
    pub init_scale: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            rank: 4,
            learning_rate: 0.05,
            factor_learning_rate: 1e-4,
            t_buckets: 8,
            pose_buckets: 8,
            init_scale: 0.01,
        }
    }
}

/// Low-rank correction of the prior's ε-prediction that tracks the score of
/// the current particle-render distribution:
/// `ε_ζ(x_t, t, ψ) = ε_φ(x_t, t) + U (Vᵀ x_t) + bias[t-bucket, ψ-bucket]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalEstimator {
    pub rank: usize,
    pub u: Matrix,
    pub v: Matrix,
    /// Row-major `(t_buckets × pose_buckets)` table of render vectors.
    pub bias: Vec<Vec<f64>>,
    pub t_buckets: usize,
    pub pose_buckets: usize,
    pub t_min: f64,
    pub t_max: f64,
    pub learning_rate: f64,
    pub factor_learning_rate: f64,
}

/// One DSM training example: a clean render, its pose, a noise level and
/// the noise draw.
#[derive(Debug, Clone)]
pub struct DsmSample<'a> {
    pub render: &'a [f64],
    pub pose: CameraPose,
    pub t: f64,
    pub epsilon: Vec<f64>,
}

impl VariationalEstimator {
    /// All-zero estimator (exact pass-through of the base prediction).
    pub fn zeros(dim: usize, cfg: &EstimatorConfig, t_min: f64, t_max: f64) -> Self {
        Self {
            rank: cfg.rank,
            u: Matrix::zeros(dim, cfg.rank),
            v: Matrix::zeros(dim, cfg.rank),
            bias: vec![vec![0.0; dim]; cfg.t_buckets.max(1) * cfg.pose_buckets.max(1)],
            t_buckets: cfg.t_buckets.max(1),
            pose_buckets: cfg.pose_buckets.max(1),
            t_min,
            t_max,
            learning_rate: cfg.learning_rate,
            factor_learning_rate: cfg.factor_learning_rate,
        }
    }

    /// `U = 0`, `V` Gaussian with `init_scale`: still pass-through, but the
    /// low-rank factors can learn.
    pub fn new(dim: usize, cfg: &EstimatorConfig, t_min: f64, t_max: f64, rng: &mut Rng) -> Self {
        let mut est = Self::zeros(dim, cfg, t_min, t_max);
        est.v =
            Matrix::from_fn(dim, cfg.rank, |_, _| cfg.init_scale * rng.sample::<f64, _>(rand_distr::StandardNormal));
        est
    }

    pub fn dim(&self) -> usize {
        self.u.rows
    }

    pub fn parameter_count(&self) -> usize {
        self.u.data.len() + self.v.data.len() + self.bias.len() * self.dim()
    }

    fn bucket(&self, t: f64, pose: CameraPose) -> usize {
        t_bucket(t, self.t_min, self.t_max, self.t_buckets) * self.pose_buckets + pose_bucket(pose, self.pose_buckets)
    }

    /// Additive correction `U (Vᵀ x_t) + bias`.
    pub fn correction(&self, x_t: &[f64], t: f64, pose: CameraPose) -> Result<Vec<f64>> {
        check_len(self.dim(), x_t.len())?;
        let mut out = self.bias[self.bucket(t, pose)].clone();
        if !self.u.is_zero() {
            let vx = self.v.tmul_vec(x_t);
            for (o, r) in out.iter_mut().zip(0..self.dim()) {
                *o += dot(self.u.row(r), &vx);
            }
        }
        Ok(out)
    }

    /// Full prediction given the base ε.
    pub fn epsilon_with_base(&self, base: &[f64], x_t: &[f64], t: f64, pose: CameraPose) -> Result<Vec<f64>> {
        check_len(self.dim(), base.len())?;
        let mut out = self.correction(x_t, t, pose)?;
        for (o, b) in out.iter_mut().zip(base) {
            *o += b;
        }
        Ok(out)
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.v.is_finite() && self.bias.iter().flatten().all(|v| v.is_finite())
    }

    /// One SGD step on the mean over `samples` of `‖ε_ζ(x_t) − ε‖²`.
    /// `base` maps `(x_t, t)` to the prior ε-prediction. Returns the loss
    /// before the step.
    pub fn dsm_step(
        &mut self,
        samples: &[DsmSample<'_>],
        mut base: impl FnMut(&[f64], f64) -> Result<Vec<f64>>,
    ) -> Result<f64> {
        if samples.is_empty() {
            return Err(crate::error::Error::Input("dsm step needs at least one render".into()));
        }
        let dim = self.dim();
        let inv = 1.0 / samples.len() as f64;
        let mut du = Matrix::zeros(dim, self.rank);
        let mut dv = Matrix::zeros(dim, self.rank);
        let mut dbias: Vec<(usize, Vec<f64>)> = Vec::new();
        let mut loss = 0.0;
        for s in samples {
            let p = perturb(s.render, s.t, &s.epsilon)?;
            let b = base(&p.x_t, s.t)?;
            let pred = self.epsilon_with_base(&b, &p.x_t, s.t, s.pose)?;
            let resid: Vec<f64> = pred.iter().zip(&s.epsilon).map(|(a, e)| a - e).collect();
            loss += inv * dot(&resid, &resid);
            let g: Vec<f64> = resid.iter().map(|r| 2.0 * inv * r).collect();
            let vx = self.v.tmul_vec(&p.x_t);
            let ug = self.u.tmul_vec(&g);
            du.add_outer(1.0, &g, &vx);
            dv.add_outer(1.0, &p.x_t, &ug);
            let bucket = self.bucket(s.t, s.pose);
            match dbias.iter_mut().find(|(k, _)| *k == bucket) {
                Some((_, acc)) => crate::linalg::axpy(1.0, &g, acc),
                None => dbias.push((bucket, g)),
            }
        }
        let (lr, flr) = (self.learning_rate, self.factor_learning_rate);
        if flr != 0.0 {
            crate::linalg::axpy(-flr, &du.data, &mut self.u.data);
            crate::linalg::axpy(-flr, &dv.data, &mut self.v.data);
        }
        if lr != 0.0 {
            for (k, g) in dbias {
                crate::linalg::axpy(-lr, &g, &mut self.bias[k]);
            }
        }
        Ok(loss)
    }
}

/// One stochastic ζ step on `renders` (paired with their poses): draws a
/// noise level in `[t_min, t_max]` and a Gaussian ε for each.
pub fn dsm_step_zeta(
    estimator: &mut VariationalEstimator,
    renders: &[(CameraPose, Vec<f64>)],
    base: impl FnMut(&[f64], f64) -> Result<Vec<f64>>,
    rng: &mut Rng,
) -> Result<f64> {
    let (t_min, t_max) = (estimator.t_min, estimator.t_max);
    let samples: Vec<DsmSample<'_>> = renders
        .iter()
        .map(|(pose, r)| DsmSample {
            render: r,
            pose: *pose,
            t: if t_max > t_min { rng.random_range(t_min..t_max) } else { t_min },
            epsilon: crate::rng::standard_normal_vec(rng, r.len()),
        })
        .collect();
    estimator.dsm_step(&samples, base)
}
