use std::fmt::Write as _;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::adapter::{adapt, AdaptConfig, AdaptOutput, AdaptedPrior};
use crate::diffusion::{oracle_epsilon, GaussianMixtureTarget, NoiseSchedule};
use crate::error::{check_len, Error, Result};
use crate::render::{pose_grid, render, render_vjp, CameraPose, RenderConfig, Scene, SceneGrad};
use crate::retrieval::{
    align_orientation, embed_text, retrieve, AlignConfig, Alignment, EmbeddingIndex, RetrievalConfig, RetrievalResult,
};
use crate::rng::{standard_normal_vec, stream, Stream};

use super::estimator::{dsm_step_zeta, EstimatorConfig, VariationalEstimator};
use super::particles::{assign_assets_with_mode, init_particles, AssignMode, AssignmentMap, ParticleSet};
use super::prior::{EpsilonModel, OraclePrior, VariationalModel};
use super::velocity::{prior_residual, v_asset, WarmupConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistillConfig {
    pub particles: usize,
    pub points_per_particle: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    pub delta_denoise_period: usize,
    pub delta_denoise_weight: f64,
    pub warmup: WarmupConfig,
    pub retrieval: RetrievalConfig,
    pub seed: u64,
    /// Number of evenly spaced training azimuths.
    pub training_poses: usize,
    pub zeta: EstimatorConfig,
    pub schedule: NoiseSchedule,
    pub render: RenderConfig,
    pub assign_mode: AssignMode,
    pub use_retrieval: bool,
    pub use_adapter: bool,
    pub use_delta_denoise: bool,
    pub adapt: AdaptConfig,
    /// Store particle renders every this many iterations (0 disables).
    pub trajectory_every: usize,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            particles: 4,
            points_per_particle: 8,
            iterations: 2000,
            learning_rate: 2e-4,
            delta_denoise_period: 3,
            delta_denoise_weight: 1.0,
            warmup: WarmupConfig::default(),
            retrieval: RetrievalConfig::default(),
            seed: 0,
            training_poses: 16,
            zeta: EstimatorConfig { pose_buckets: 16, ..Default::default() },
            schedule: NoiseSchedule::default(),
            render: RenderConfig::default(),
            assign_mode: AssignMode::Nearest,
            use_retrieval: true,
            use_adapter: true,
            use_delta_denoise: true,
            adapt: AdaptConfig::default(),
            trajectory_every: 20,
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        if self.particles == 0 {
            return Err(Error::Config("distill.particles must be at least 1".into()));
        }
        if self.points_per_particle == 0 {
            return Err(Error::Config("distill.points_per_particle must be at least 1".into()));
        }
        if self.iterations < self.warmup.tau {
            return Err(Error::Config(format!(
                "distill.iterations ({}) must be at least warmup.tau ({})",
                self.iterations, self.warmup.tau
            )));
        }
        if self.delta_denoise_period == 0 {
            return Err(Error::Config("distill.delta_denoise_period must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("distill.learning_rate must be finite and non-negative".into()));
        }
        if self.training_poses == 0 {
            return Err(Error::Config("distill.training_poses must be at least 1".into()));
        }
        self.warmup.validate()?;
        self.retrieval.validate()?;
        self.schedule.validate()?;
        self.render.validate()?;
        self.adapt.validate()
    }

    pub fn poses(&self) -> Vec<CameraPose> {
        pose_grid(self.training_poses, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLogRow {
    pub iter: usize,
    pub particle: usize,
    pub v2d_norm: f64,
    pub vasset_norm: f64,
    pub zeta_loss: f64,
    pub warmup_flag: bool,
    pub delta_applied: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub rows: Vec<RunLogRow>,
}

impl RunLog {
    pub const HEADER: &'static str = "iter,particle,v2d_norm,vasset_norm,zeta_loss,warmup_flag,delta_applied";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.iter, r.particle, r.v2d_norm, r.vasset_norm, r.zeta_loss, r.warmup_flag as u8, r.delta_applied as u8
            );
        }
        out
    }

    /// Iterations where some particle received a nonzero asset velocity.
    pub fn warmup_iterations(&self) -> usize {
        let mut iters: Vec<usize> = self.rows.iter().filter(|r| r.vasset_norm > 0.0).map(|r| r.iter).collect();
        iters.dedup();
        iters.len()
    }
}

/// Snapshot of every particle's render at the reference pose.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPoint {
    pub iter: usize,
    pub renders: Vec<Vec<f64>>,
}

/// Retrieved assets after orientation alignment.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievedAssets {
    pub result: RetrievalResult,
    pub uids: Vec<String>,
    pub alignments: Vec<Alignment>,
    pub caption_embeddings: Vec<Vec<f64>>,
}

impl RetrievedAssets {
    pub fn scenes(&self) -> Vec<Scene> {
        self.alignments.iter().map(|a| a.aligned.clone()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct DistillOutput {
    pub particles: ParticleSet,
    pub log: RunLog,
    pub retrieved: Option<RetrievedAssets>,
    pub assignment: Option<AssignmentMap>,
    pub adaptation: Option<AdaptOutput>,
    pub trajectory: Vec<TrajectoryPoint>,
    pub target: GaussianMixtureTarget,
}

/// Retrieval followed by orientation alignment of every hit.
pub fn retrieve_aligned<S: AsRef<str>>(
    prompt_tokens: &[S],
    db: &EmbeddingIndex,
    cfg: &RetrievalConfig,
    render_cfg: &RenderConfig,
) -> Result<RetrievedAssets> {
    let result = retrieve(prompt_tokens, db, cfg)?;
    let align_cfg = AlignConfig::from(cfg);
    let mut uids = Vec::new();
    let mut alignments = Vec::new();
    let mut caption_embeddings = Vec::new();
    for rec in result.records(db) {
        alignments.push(align_orientation(&rec.scene, &rec.prefix_reference_embeddings, &align_cfg, render_cfg)?);
        uids.push(rec.uid.clone());
        caption_embeddings.push(rec.text_embedding.clone());
    }
    Ok(RetrievedAssets { result, uids, alignments, caption_embeddings })
}

struct Draw {
    pose: CameraPose,
    t: f64,
    epsilon: Vec<f64>,
    batch_poses: Vec<CameraPose>,
}

/// Full retrieval-augmented distillation. `target_builder` maps the prompt
/// to the analytic prior it is conditioned on.
pub fn distill<S: AsRef<str>>(
    cfg: &DistillConfig,
    prompt_tokens: &[S],
    db: &EmbeddingIndex,
    target_builder: &dyn Fn(&[String]) -> Result<GaussianMixtureTarget>,
) -> Result<DistillOutput> {
    cfg.validate()?;
    let tokens: Vec<String> = prompt_tokens.iter().map(|s| s.as_ref().to_string()).collect();
    let target = target_builder(&tokens)?;
    let dim = cfg.render.dim();
    check_len(dim, target.dim())?;
    let poses = cfg.poses();

    let particles = init_particles(cfg.particles, cfg.points_per_particle, cfg.seed)?;
    let (retrieved, assignment, adaptation) = if cfg.use_retrieval {
        let r = retrieve_aligned(&tokens, db, &cfg.retrieval, &cfg.render)?;
        let scenes = r.scenes();
        let map = assign_assets_with_mode(&particles, &scenes, &poses, &cfg.render, cfg.assign_mode, cfg.seed)?;
        let adaptation = if cfg.use_adapter {
            let inputs: Vec<(Scene, Vec<f64>)> =
                scenes.iter().cloned().zip(r.caption_embeddings.iter().cloned()).collect();
            let acfg = AdaptConfig { seed: cfg.seed, ..cfg.adapt.clone() };
            Some(adapt(&inputs, &target, &acfg, &cfg.render)?)
        } else {
            None
        };
        (Some(r), Some(map), adaptation)
    } else {
        (None, None, None)
    };
    let prompt_embedding = embed_text(&tokens)?;
    let assets: Vec<Scene> = retrieved.as_ref().map(|r| r.scenes()).unwrap_or_default();

    run_loop(cfg, particles, &target, &assets, assignment.as_ref(), adaptation.as_ref(), &prompt_embedding).map(
        |(particles, log, trajectory)| DistillOutput {
            particles,
            log,
            retrieved,
            assignment,
            adaptation,
            trajectory,
            target,
        },
    )
}

/// The particle update loop on an already prepared prior and asset set.
/// Exposed for experiments that bypass retrieval.
pub fn run_loop(
    cfg: &DistillConfig,
    mut particles: ParticleSet,
    target: &GaussianMixtureTarget,
    assets: &[Scene],
    assignment: Option<&AssignmentMap>,
    adaptation: Option<&AdaptOutput>,
    prompt_embedding: &[f64],
) -> Result<(ParticleSet, RunLog, Vec<TrajectoryPoint>)> {
    cfg.validate()?;
    let dim = cfg.render.dim();
    let poses = cfg.poses();
    let oracle = OraclePrior { target };
    let adapted =
        adaptation.map(|a| AdaptedPrior { target, adapter: &a.params, prefixes: &a.prefixes, prompt_embedding });
    let prior: &dyn EpsilonModel = match &adapted {
        Some(a) => a,
        None => &oracle,
    };
    let mut zeta_init = stream(cfg.seed, Stream::Zeta);
    let mut estimator =
        VariationalEstimator::new(dim, &cfg.zeta, cfg.schedule.t_min, cfg.schedule.t_max, &mut zeta_init);
    let mut zeta_rng = crate::rng::substream(cfg.seed, Stream::Zeta, 1);
    let mut draws_rng = stream(cfg.seed, Stream::Draws);
    let has_assets = assignment.is_some() && !assets.is_empty();

    let mut log = RunLog::default();
    let mut trajectory = Vec::new();
    let snapshot = |ps: &ParticleSet, iter: usize| TrajectoryPoint {
        iter,
        renders: ps.particles.iter().map(|p| render(p, poses[0], &cfg.render).into_vec()).collect(),
    };
    if cfg.trajectory_every > 0 {
        trajectory.push(snapshot(&particles, 0));
    }

    for s in 1..=cfg.iterations {
        let draws: Vec<Draw> = (0..particles.len())
            .map(|_| {
                let pose = poses[draws_rng.random_range(0..poses.len())];
                let t = cfg.schedule.sample_t(&mut draws_rng);
                let epsilon = standard_normal_vec(&mut draws_rng, dim);
                let batch_poses =
                    (0..cfg.warmup.pose_batch).map(|_| poses[draws_rng.random_range(0..poses.len())]).collect();
                Draw { pose, t, epsilon, batch_poses }
            })
            .collect();
        let warm = has_assets && cfg.warmup.active(s);
        let delta = has_assets && cfg.use_delta_denoise && s % cfg.delta_denoise_period == 0;
        let variational = VariationalModel { target, estimator: &estimator };
        let mut updates = Vec::with_capacity(particles.len());
        for (i, (p, d)) in particles.particles.iter().zip(&draws).enumerate() {
            let w = cfg.schedule.weight(d.t);
            let img = render(p, d.pose, &cfg.render);
            let mut resid = prior_residual(img.as_slice(), d.pose, d.t, &d.epsilon, prior, &variational, w)?;
            let asset = assignment.map(|m| &assets[m.get(i)]);
            if delta {
                if let Some(a) = asset {
                    let a_img = render(a, d.pose, &cfg.render);
                    let a_resid = prior_residual(a_img.as_slice(), d.pose, d.t, &d.epsilon, prior, &variational, w)?;
                    crate::linalg::axpy(-cfg.delta_denoise_weight, &a_resid, &mut resid);
                }
            }
            let v2d = render_vjp(p, d.pose, &cfg.render, &resid)?;
            let va = match asset {
                Some(a) if warm => v_asset(p, a, &d.batch_poses, &cfg.warmup, s, &cfg.render)?,
                _ => SceneGrad::zeros(p.len()),
            };
            let mut total = v2d.clone();
            total.add_scaled(1.0, &va);
            if !total.is_finite() {
                return Err(Error::NonFinite { iteration: s, what: format!("velocity of particle {i}") });
            }
            updates.push((total, v2d.norm(), va.norm()));
        }
        for (p, (g, _, _)) in particles.particles.iter_mut().zip(&updates) {
            p.descend(g, cfg.learning_rate);
        }
        let renders: Vec<(CameraPose, Vec<f64>)> = particles
            .particles
            .iter()
            .zip(&draws)
            .flat_map(|(p, d)| {
                std::iter::once(d.pose)
                    .chain(d.batch_poses.iter().copied())
                    .map(move |pose| (pose, render(p, pose, &cfg.render).into_vec()))
            })
            .collect();
        let zeta_loss = dsm_step_zeta(&mut estimator, &renders, |x, t| oracle_epsilon(x, t, target), &mut zeta_rng)?;
        if !estimator.is_finite() || !zeta_loss.is_finite() {
            return Err(Error::NonFinite { iteration: s, what: "variational estimator".into() });
        }
        for (i, (_, vn, an)) in updates.iter().enumerate() {
            log.rows.push(RunLogRow {
                iter: s,
                particle: i,
                v2d_norm: *vn,
                vasset_norm: *an,
                zeta_loss,
                warmup_flag: warm,
                delta_applied: delta,
            });
        }
        if cfg.trajectory_every > 0 && s % cfg.trajectory_every == 0 {
            trajectory.push(snapshot(&particles, s));
        }
    }
    Ok((particles, log, trajectory))
}
