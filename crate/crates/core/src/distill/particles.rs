use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::render::{view_l2_grad, CameraPose, Point, RenderConfig, Scene};
use crate::rng::{stream, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleSet {
    pub particles: Vec<Scene>,
    pub seed: u64,
}

impl ParticleSet {
    pub fn new(particles: Vec<Scene>, seed: u64) -> Result<Self> {
        let set = Self { particles, seed };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        let first = self
            .particles
            .first()
            .ok_or_else(|| Error::Config("particle set must hold at least one particle".into()))?;
        for p in &self.particles {
            if p.len() != first.len() {
                return Err(Error::Shape { expected: first.len(), actual: p.len() });
            }
            p.validate()?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }
}

/// `count` particles of `points` points each: positions uniform in the cube
/// `[-1, 1]³`, weights uniform in `[0.5, 1]`.
pub fn init_particles(count: usize, points: usize, seed: u64) -> Result<ParticleSet> {
    if count == 0 {
        return Err(Error::Config("particle count K must be at least 1".into()));
    }
    if points == 0 {
        return Err(Error::Config("particles need at least one point".into()));
    }
    let mut rng = stream(seed, Stream::Init);
    let particles = (0..count)
        .map(|i| {
            let pts = (0..points)
                .map(|_| Point {
                    position: [
                        rng.random_range(-1.0..=1.0),
                        rng.random_range(-1.0..=1.0),
                        rng.random_range(-1.0..=1.0),
                    ],
                    weight: rng.random_range(0.5..=1.0),
                })
                .collect();
            Scene::new(None, pts).map(|s| s.with_id(format!("particle-{i}")))
        })
        .collect::<Result<Vec<_>>>()?;
    ParticleSet::new(particles, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignMode {
    /// Closest asset in render space at initialization.
    #[default]
    Nearest,
    /// Uniformly random asset per particle.
    Random,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentMap {
    pub assignments: Vec<usize>,
}

impl AssignmentMap {
    pub fn get(&self, particle: usize) -> usize {
        self.assignments[particle]
    }

    pub fn one_hot(&self, particle: usize, assets: usize) -> Vec<f64> {
        let mut v = vec![0.0; assets];
        v[self.assignments[particle]] = 1.0;
        v
    }
}

/// Pose-averaged squared render distance between every particle and asset.
pub fn render_distance_table(
    particles: &ParticleSet,
    assets: &[Scene],
    poses: &[CameraPose],
    cfg: &RenderConfig,
) -> Result<Vec<Vec<f64>>> {
    particles
        .particles
        .iter()
        .map(|p| assets.iter().map(|a| view_l2_grad(p, a, poses, cfg).map(|(d, _)| d)).collect())
        .collect()
}

/// Nearest asset per particle in render space; ties break to the lowest
/// asset index.
pub fn assign_assets(
    particles: &ParticleSet,
    assets: &[Scene],
    poses: &[CameraPose],
    cfg: &RenderConfig,
) -> Result<AssignmentMap> {
    if assets.is_empty() {
        return Err(Error::Input("cannot assign particles to an empty asset list".into()));
    }
    let table = render_distance_table(particles, assets, poses, cfg)?;
    let assignments = table
        .iter()
        .map(|row| {
            let mut best = 0;
            for (j, d) in row.iter().enumerate() {
                if *d < row[best] {
                    best = j;
                }
            }
            best
        })
        .collect();
    Ok(AssignmentMap { assignments })
}

pub fn assign_assets_with_mode(
    particles: &ParticleSet,
    assets: &[Scene],
    poses: &[CameraPose],
    cfg: &RenderConfig,
    mode: AssignMode,
    seed: u64,
) -> Result<AssignmentMap> {
    match mode {
        AssignMode::Nearest => assign_assets(particles, assets, poses, cfg),
        AssignMode::Random => {
            if assets.is_empty() {
                return Err(Error::Input("cannot assign particles to an empty asset list".into()));
            }
            let mut rng = crate::rng::substream(seed, Stream::Init, 1);
            let assignments = (0..particles.len()).map(|_| rng.random_range(0..assets.len())).collect();
            Ok(AssignmentMap { assignments })
        }
    }
}
