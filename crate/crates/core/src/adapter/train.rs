use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::diffusion::{oracle_epsilon, perturb, GaussianMixtureTarget, NoiseSchedule};
use crate::error::{check_len, Error, Result};
use crate::linalg::{axpy, dot, Matrix};
use crate::render::{pose_grid, render, CameraPose, RenderConfig, Scene};
use crate::retrieval::{ViewPrefix, EMBED_DIM};
use crate::rng::{standard_normal_vec, stream, Stream};

use super::params::{condition_vector, AdapterParams, ViewPrefixTokens};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrefixMode {
    #[default]
    Learned,
    Frozen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptConfig {
    pub steps: usize,
    pub learning_rate: f64,
    pub early_stop_patience: usize,
    pub holdout_fraction: f64,
    pub seed: u64,
    pub rank: usize,
    /// Uniform azimuth grid the asset renders are taken on.
    pub pose_count: usize,
    pub batch: usize,
    pub t_buckets: usize,
    pub init_scale: f64,
    /// Fixed `(t, ε)` draws per held-out render.
    pub holdout_draws: usize,
    pub prefix_mode: PrefixMode,
    /// Train the per-t-bucket gains on the low-rank term. Off keeps them at 1.
    pub learn_gains: bool,
    pub schedule: NoiseSchedule,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            learning_rate: 3e-3,
            early_stop_patience: 50,
            holdout_fraction: 0.1,
            seed: 0,
            rank: 4,
            pose_count: 16,
            batch: 512,
            t_buckets: 8,
            init_scale: 0.01,
            holdout_draws: 16,
            prefix_mode: PrefixMode::Learned,
            learn_gains: false,
            schedule: NoiseSchedule::default(),
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=0.5).contains(&self.holdout_fraction) {
            return Err(Error::Config(format!(
                "adapt.holdout_fraction must be in [0, 0.5], got {}",
                self.holdout_fraction
            )));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("adapt.learning_rate must be finite and non-negative".into()));
        }
        if self.rank == 0 || self.pose_count == 0 || self.batch == 0 || self.t_buckets == 0 {
            return Err(Error::Config("adapt.rank, pose_count, batch and t_buckets must be positive".into()));
        }
        self.schedule.validate()
    }
}

/// One DSM example: a clean render at `pose` with its caption embedding and
/// a fixed noise draw.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptSample {
    pub render: Vec<f64>,
    pub pose: CameraPose,
    pub prompt_embedding: Vec<f64>,
    pub t: f64,
    pub epsilon: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdapterGrad {
    pub a: Matrix,
    pub b: Matrix,
    pub w: Matrix,
    pub t_gains: Vec<f64>,
    pub prefixes: ViewPrefixTokens,
}

/// Mean of `‖ε_ω(x_t) − ε‖²` over `samples` and its analytic gradient.
pub fn adaptation_loss_and_grad(
    target: &GaussianMixtureTarget,
    params: &AdapterParams,
    prefixes: &ViewPrefixTokens,
    samples: &[AdaptSample],
) -> Result<(f64, AdapterGrad)> {
    if samples.is_empty() {
        return Err(Error::Input("adaptation loss needs at least one sample".into()));
    }
    let dim = params.dim();
    let mut grad = AdapterGrad {
        a: Matrix::zeros(dim, params.rank),
        b: Matrix::zeros(dim, params.rank),
        w: Matrix::zeros(dim, params.w.cols),
        t_gains: vec![0.0; params.t_gains.len()],
        prefixes: ViewPrefixTokens {
            front: vec![0.0; EMBED_DIM],
            side: vec![0.0; EMBED_DIM],
            back: vec![0.0; EMBED_DIM],
        },
    };
    let inv = 1.0 / samples.len() as f64;
    let mut loss = 0.0;
    for s in samples {
        check_len(dim, s.render.len())?;
        let p = perturb(&s.render, s.t, &s.epsilon)?;
        let prefix = ViewPrefix::from_pose(s.pose);
        let cond = condition_vector(prefixes.get(prefix), &s.prompt_embedding)?;
        let base = oracle_epsilon(&p.x_t, s.t, target)?;
        let low = params.low_rank(&p.x_t);
        let ct = params.condition_term(&cond);
        let k = params.bucket(s.t);
        let g = params.t_gains[k];
        let resid: Vec<f64> =
            base.iter().zip(low.iter().zip(&ct)).zip(&s.epsilon).map(|((b, (l, c)), e)| b + g * l + c - e).collect();
        loss += inv * dot(&resid, &resid);
        let rho: Vec<f64> = resid.iter().map(|r| 2.0 * inv * r).collect();
        grad.t_gains[k] += dot(&rho, &low);
        let bx = params.b.tmul_vec(&p.x_t);
        let atr = params.a.tmul_vec(&rho);
        grad.a.add_outer(g, &rho, &bx);
        grad.b.add_outer(g, &p.x_t, &atr);
        grad.w.add_outer(1.0, &rho, &cond);
        let wtr = params.w.tmul_vec(&rho);
        axpy(1.0, &wtr[..EMBED_DIM], grad.prefixes.get_mut(prefix));
    }
    Ok((loss, grad))
}

/// Loss only, for held-out evaluation.
fn adaptation_loss(
    target: &GaussianMixtureTarget,
    params: &AdapterParams,
    prefixes: &ViewPrefixTokens,
    samples: &[AdaptSample],
) -> Result<f64> {
    let inv = 1.0 / samples.len() as f64;
    let mut loss = 0.0;
    for s in samples {
        let p = perturb(&s.render, s.t, &s.epsilon)?;
        let cond = condition_vector(prefixes.get(ViewPrefix::from_pose(s.pose)), &s.prompt_embedding)?;
        let base = oracle_epsilon(&p.x_t, s.t, target)?;
        let corr = params.correction(&p.x_t, s.t, &cond)?;
        loss += inv * base.iter().zip(&corr).zip(&s.epsilon).map(|((b, c), e)| (b + c - e).powi(2)).sum::<f64>();
    }
    Ok(loss)
}

/// Adam moments for one flat parameter block.
#[derive(Debug, Clone)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Moments {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(len: usize) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len] }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64, t: i32) {
        let c1 = 1.0 - Self::BETA1.powi(t);
        let c2 = 1.0 - Self::BETA2.powi(t);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
            *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: usize,
    pub train_loss: f64,
    pub holdout_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptOutput {
    pub params: AdapterParams,
    pub prefixes: ViewPrefixTokens,
    pub curve: Vec<CurvePoint>,
    /// Number of optimisation steps taken before stopping.
    pub stopped_step: usize,
    /// Step whose parameters were kept (best held-out loss).
    pub best_step: usize,
    pub initial_holdout_loss: Option<f64>,
    pub best_holdout_loss: Option<f64>,
}

/// Fits the adapter and prefix vectors on uniform-pose renders of `assets`
/// (scene plus caption embedding). Early-stops on a held-out split and keeps
/// the best parameters seen.
pub fn adapt(
    assets: &[(Scene, Vec<f64>)],
    target: &GaussianMixtureTarget,
    cfg: &AdaptConfig,
    render_cfg: &RenderConfig,
) -> Result<AdaptOutput> {
    cfg.validate()?;
    if assets.is_empty() {
        return Err(Error::Input("adaptation needs at least one asset".into()));
    }
    let dim = render_cfg.dim();
    check_len(target.dim(), dim)?;
    let prefixes0 = super::params::init_prefixes();
    let (t_min, t_max) = (cfg.schedule.t_min, cfg.schedule.t_max);

    let mut init_rng = stream(cfg.seed, Stream::Adapter);
    let mut params = AdapterParams::zeros(dim, cfg.rank, cfg.t_buckets, t_min, t_max);
    params.b =
        Matrix::from_fn(dim, cfg.rank, |_, _| cfg.init_scale * init_rng.sample::<f64, _>(rand_distr::StandardNormal));
    let mut prefixes = prefixes0.clone();

    let poses = pose_grid(cfg.pose_count, 0.0);
    let mut pairs: Vec<(Vec<f64>, CameraPose, &[f64])> = Vec::new();
    for (scene, caption) in assets {
        check_len(EMBED_DIM, caption.len())?;
        for &pose in &poses {
            pairs.push((render(scene, pose, render_cfg).into_vec(), pose, caption.as_slice()));
        }
    }
    let mut hold_rng = stream(cfg.seed, Stream::Holdout);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(&mut hold_rng);
    let mut n_hold = (cfg.holdout_fraction * pairs.len() as f64).round() as usize;
    if cfg.holdout_fraction > 0.0 && n_hold == 0 && pairs.len() >= 2 {
        n_hold = 1;
    }
    let (hold_idx, train_idx) = order.split_at(n_hold);
    let mut holdout = Vec::new();
    for &i in hold_idx {
        for _ in 0..cfg.holdout_draws.max(1) {
            holdout.push(AdaptSample {
                render: pairs[i].0.clone(),
                pose: pairs[i].1,
                prompt_embedding: pairs[i].2.to_vec(),
                t: cfg.schedule.sample_t(&mut hold_rng),
                epsilon: standard_normal_vec(&mut hold_rng, dim),
            });
        }
    }

    let eval = |p: &AdapterParams, pre: &ViewPrefixTokens| -> Result<Option<f64>> {
        if holdout.is_empty() {
            Ok(None)
        } else {
            adaptation_loss(target, p, pre, &holdout).map(Some)
        }
    };
    let initial = eval(&params, &prefixes)?;
    let mut curve = vec![CurvePoint { step: 0, train_loss: f64::NAN, holdout_loss: initial }];
    let mut best = (params.clone(), prefixes.clone(), 0usize, initial);
    let mut rng = crate::rng::substream(cfg.seed, Stream::Adapter, 1);
    let mut stopped = 0;
    let lr = cfg.learning_rate;
    let mut opt_a = Moments::new(params.a.data.len());
    let mut opt_b = Moments::new(params.b.data.len());
    let mut opt_w = Moments::new(params.w.data.len());
    let mut opt_g = Moments::new(params.t_gains.len());
    let mut opt_p: Vec<Moments> = ViewPrefix::ALL.iter().map(|_| Moments::new(EMBED_DIM)).collect();
    for step in 1..=cfg.steps {
        let batch: Vec<AdaptSample> = (0..cfg.batch)
            .map(|_| {
                let (r, pose, cap) = &pairs[train_idx[rng.random_range(0..train_idx.len())]];
                AdaptSample {
                    render: r.clone(),
                    pose: *pose,
                    prompt_embedding: cap.to_vec(),
                    t: cfg.schedule.sample_t(&mut rng),
                    epsilon: standard_normal_vec(&mut rng, dim),
                }
            })
            .collect();
        let (loss, g) = adaptation_loss_and_grad(target, &params, &prefixes, &batch)?;
        let k = step.min(i32::MAX as usize) as i32;
        opt_a.step(&mut params.a.data, &g.a.data, lr, k);
        opt_b.step(&mut params.b.data, &g.b.data, lr, k);
        opt_w.step(&mut params.w.data, &g.w.data, lr, k);
        if cfg.learn_gains {
            opt_g.step(&mut params.t_gains, &g.t_gains, lr, k);
        }
        if cfg.prefix_mode == PrefixMode::Learned {
            for (p, opt) in ViewPrefix::ALL.iter().zip(&mut opt_p) {
                opt.step(prefixes.get_mut(*p), g.prefixes.get(*p), lr, k);
            }
        }
        if !params.is_finite() {
            return Err(Error::NonFinite { iteration: step, what: "adapter parameters".into() });
        }
        stopped = step;
        let h = eval(&params, &prefixes)?;
        curve.push(CurvePoint { step, train_loss: loss, holdout_loss: h });
        match (h, best.3) {
            (Some(h), Some(b)) if h < b => best = (params.clone(), prefixes.clone(), step, Some(h)),
            (Some(_), Some(_)) => {
                if step - best.2 >= cfg.early_stop_patience {
                    break;
                }
            }
            _ => best = (params.clone(), prefixes.clone(), step, None),
        }
    }
    let (params, prefixes, best_step, best_loss) = best;
    Ok(AdaptOutput {
        params,
        prefixes,
        curve,
        stopped_step: stopped,
        best_step,
        initial_holdout_loss: initial,
        best_holdout_loss: best_loss,
    })
}
