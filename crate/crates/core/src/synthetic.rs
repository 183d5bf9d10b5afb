//! A small procedurally generated asset world: category exemplars, a
//! captioned database of jittered and misoriented instances, and the
//! standard prompt suite.

use std::f64::consts::TAU;

use rand::Rng as _;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::diffusion::{build_conditional_target, CameraBias, GaussianMixtureTarget};
use crate::error::{Error, Result};
use crate::render::{pose_grid, rotate_scene, CameraPose, Point, RenderConfig, Scene};
use crate::retrieval::{fnv1a64, AssetRecord, EmbeddingIndex, IndexMode, PrefixEmbeddings};
use crate::rng::{substream, Rng, Stream};

/// Categories of the standard prompt suite.
pub const SUITE: [&str; 10] = ["chair", "table", "lamp", "car", "duck", "mug", "sofa", "robot", "tree", "house"];
/// Categories whose exemplars are radially symmetric.
pub const SYMMETRIC: [&str; 2] = ["vase", "pillar"];
pub const DISTRACTORS: [&str; 4] = ["rock", "shoe", "drum", "key"];
pub const ADJECTIVES: [&str; 8] = ["red", "shiny", "tall", "blue", "dark", "bright", "golden", "silver"];
pub const ARTICLE: &str = "a";

pub fn prompt_tokens(category: &str) -> Vec<String> {
    vec![ARTICLE.to_string(), category.to_string()]
}

/// The standard 10-prompt suite.
pub fn prompt_suite() -> Vec<Vec<String>> {
    SUITE.iter().map(|c| prompt_tokens(c)).collect()
}

/// Category named by a prompt: the first token that is a known category.
pub fn category_of<S: AsRef<str>>(tokens: &[S]) -> Option<&'static str> {
    tokens.iter().find_map(|t| {
        SUITE.iter().chain(SYMMETRIC.iter()).chain(DISTRACTORS.iter()).find(|c| **c == t.as_ref()).copied()
    })
}

/// Canonical exemplar of a category. Asymmetric categories get seven
/// scattered points plus a heavy marker on the front-right; symmetric ones
/// keep every point on the vertical axis.
pub fn exemplar(category: &str) -> Scene {
    let mut rng = Rng::seed_from_u64(fnv1a64(category.as_bytes()));
    let points = if SYMMETRIC.contains(&category) {
        (0..6).map(|k| Point::new(0.0, -0.75 + 0.3 * k as f64, 0.0, rng.random_range(0.6..1.0))).collect()
    } else {
        let mut pts: Vec<Point> = (0..7)
            .map(|_| {
                Point::new(
                    rng.random_range(-0.8..0.8),
                    rng.random_range(-0.8..0.8),
                    rng.random_range(-0.8..0.8),
                    rng.random_range(0.6..1.0),
                )
            })
            .collect();
        pts.push(Point::new(0.45, 0.55, 0.7, 1.2));
        pts
    };
    Scene::new(Some(category.to_string()), points).expect("exemplar points are finite")
}

/// Jittered copy of `scene`: Gaussian position noise and up to ±10% weight
/// change per point.
pub fn jitter(scene: &Scene, position_sigma: f64, rng: &mut Rng) -> Scene {
    let points = scene
        .points
        .iter()
        .map(|p| {
            let n = |rng: &mut Rng| position_sigma * rng.sample::<f64, _>(rand_distr::StandardNormal);
            Point::new(
                p.position[0] + n(rng),
                p.position[1] + n(rng),
                p.position[2] + n(rng),
                p.weight * rng.random_range(0.9..1.1),
            )
        })
        .collect();
    Scene { id: scene.id.clone(), points }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub seed: u64,
    /// Instances per suite category; at least `n_prime` keeps the text
    /// stage free of other categories.
    pub instances_per_category: usize,
    pub symmetric_instances: usize,
    pub distractor_instances: usize,
    pub view_poses: usize,
    pub position_jitter: f64,
    /// Instances are stored at a random azimuth instead of canonically.
    pub misorient: bool,
    pub render: RenderConfig,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            instances_per_category: 10,
            symmetric_instances: 3,
            distractor_instances: 4,
            view_poses: 8,
            position_jitter: 0.03,
            misorient: true,
            render: RenderConfig::default(),
        }
    }
}

/// Ground truth for one generated record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceTruth {
    pub uid: String,
    pub category: String,
    /// Azimuth the instance was rotated by from canonical.
    pub rotation: f64,
}

#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    pub index: EmbeddingIndex,
    pub truth: Vec<InstanceTruth>,
}

pub fn make_instance(
    category: &str,
    index: usize,
    cfg: &WorldConfig,
    views: &[CameraPose],
    rng: &mut Rng,
) -> Result<(AssetRecord, InstanceTruth)> {
    let ex = exemplar(category);
    let rotation = if cfg.misorient { rng.random_range(0.0..TAU) } else { 0.0 };
    let uid = format!("{category}-{index:03}");
    let scene = rotate_scene(&jitter(&ex, cfg.position_jitter, rng), rotation).with_id(uid.clone());
    let adj = ADJECTIVES[rng.random_range(0..ADJECTIVES.len())];
    let refs = PrefixEmbeddings::from_exemplar(&ex, &cfg.render);
    let rec = AssetRecord::from_scene(
        uid.clone(),
        vec![adj.to_string(), category.to_string()],
        scene,
        views,
        &cfg.render,
        refs,
    )?;
    Ok((rec, InstanceTruth { uid, category: category.to_string(), rotation }))
}

impl SyntheticWorld {
    pub fn build(cfg: &WorldConfig) -> Result<Self> {
        if cfg.view_poses == 0 {
            return Err(Error::Config("world.view_poses must be at least 1".into()));
        }
        let views = pose_grid(cfg.view_poses, 0.0);
        let mut rng = substream(cfg.seed, Stream::Fixture, 0);
        let mut records = Vec::new();
        let mut truth = Vec::new();
        let groups = [
            (&SUITE[..], cfg.instances_per_category),
            (&SYMMETRIC[..], cfg.symmetric_instances),
            (&DISTRACTORS[..], cfg.distractor_instances),
        ];
        for (cats, count) in groups {
            for cat in cats {
                for i in 0..count {
                    let (r, t) = make_instance(cat, i, cfg, &views, &mut rng)?;
                    records.push(r);
                    truth.push(t);
                }
            }
        }
        Ok(Self { index: EmbeddingIndex::build(records, IndexMode::Exact)?, truth })
    }
}

/// Camera-bias families for the analytic prior of a prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetSpec {
    /// Three components at the canonical front, side and back renders.
    FrontSideBack { front: f64, side: f64, back: f64 },
    /// `front_weight` on the front render, the rest spread evenly over the
    /// other `poses − 1` grid renders.
    FrontBiased { poses: usize, front_weight: f64 },
    /// Equal weight on every render of a uniform grid.
    Uniform { poses: usize },
}

impl Default for TargetSpec {
    fn default() -> Self {
        TargetSpec::FrontBiased { poses: 8, front_weight: 0.5 }
    }
}

impl TargetSpec {
    pub fn bias(&self) -> Result<CameraBias> {
        match *self {
            TargetSpec::FrontSideBack { front, side, back } => Ok(CameraBias::front_side_back(front, side, back)),
            TargetSpec::FrontBiased { poses, front_weight } => {
                if poses < 2 || !(0.0..=1.0).contains(&front_weight) {
                    return Err(Error::Config("front-biased target needs poses >= 2 and weight in [0,1]".into()));
                }
                let rest = (1.0 - front_weight) / (poses - 1) as f64;
                let grid = pose_grid(poses, 0.0);
                let mut list: Vec<(CameraPose, f64)> =
                    grid.iter().enumerate().map(|(i, &p)| (p, if i == 0 { front_weight } else { rest })).collect();
                // Absorb rounding so the weights sum to one exactly.
                let total: f64 = list.iter().map(|(_, w)| w).sum();
                list[0].1 += 1.0 - total;
                Ok(CameraBias::new(list))
            }
            TargetSpec::Uniform { poses } => {
                if poses == 0 {
                    return Err(Error::Config("uniform target needs at least one pose".into()));
                }
                Ok(CameraBias::uniform(&pose_grid(poses, 0.0)))
            }
        }
    }

    /// Analytic prior for `category`, centred on its exemplar's renders.
    pub fn build(&self, category: &str, cov_scale: f64, render_cfg: &RenderConfig) -> Result<GaussianMixtureTarget> {
        build_conditional_target(category, &exemplar(category), &self.bias()?, render_cfg, cov_scale)
    }
}

/// Target builder keyed on the prompt's category.
pub fn prompt_target(
    layout: TargetSpec,
    cov_scale: f64,
    render_cfg: RenderConfig,
) -> impl Fn(&[String]) -> Result<GaussianMixtureTarget> {
    move |tokens: &[String]| {
        let cat = category_of(tokens)
            .ok_or_else(|| Error::Input(format!("prompt {:?} names no known category", tokens.join(" "))))?;
        layout.build(cat, cov_scale, &render_cfg)
    }
}
