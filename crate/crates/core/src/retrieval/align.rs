use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::embed::{embed_image, ViewPrefix};
use super::index::PrefixEmbeddings;
use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::render::{render, rotate_scene, RenderConfig, Scene};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignConfig {
    pub grid: usize,
    pub symmetry_spread_threshold: f64,
}

impl Default for AlignConfig {
    fn default() -> Self {
        Self { grid: 8, symmetry_spread_threshold: 0.02 }
    }
}

impl From<&super::RetrievalConfig> for AlignConfig {
    fn from(cfg: &super::RetrievalConfig) -> Self {
        Self { grid: cfg.alignment_grid, symmetry_spread_threshold: cfg.symmetry_spread_threshold }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignStatus {
    Aligned,
    SymmetricSkipped,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub aligned: Scene,
    /// Applied rotation, one of the grid azimuths.
    pub rotation: f64,
    pub status: AlignStatus,
    /// Prefix-similarity score per candidate rotation.
    pub scores: Vec<f64>,
}

/// Picks the grid rotation whose front/side/back renders best match the
/// reference prefix embeddings. Assets whose scores barely vary over the
/// grid are treated as radially symmetric and left untouched.
pub fn align_orientation(
    scene: &Scene,
    prefix_embeddings: &PrefixEmbeddings,
    cfg: &AlignConfig,
    render_cfg: &RenderConfig,
) -> Result<Alignment> {
    if cfg.grid < 4 {
        return Err(Error::Config(format!("alignment grid must have at least 4 candidates, got {}", cfg.grid)));
    }
    let rotations: Vec<f64> = (0..cfg.grid).map(|k| TAU * k as f64 / cfg.grid as f64).collect();
    let scores: Vec<f64> = rotations
        .iter()
        .map(|&rot| {
            let rotated = rotate_scene(scene, rot);
            let total: f64 = ViewPrefix::ALL
                .iter()
                .map(|&p| {
                    let e = embed_image(&render(&rotated, p.canonical_pose(), render_cfg));
                    dot(&e.vector, prefix_embeddings.get(p))
                })
                .sum();
            total / ViewPrefix::ALL.len() as f64
        })
        .collect();
    let (mut best, mut lo, mut hi) = (0usize, f64::INFINITY, f64::NEG_INFINITY);
    for (k, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = k;
        }
        lo = lo.min(s);
        hi = hi.max(s);
    }
    if hi - lo < cfg.symmetry_spread_threshold {
        return Ok(Alignment { aligned: scene.clone(), rotation: 0.0, status: AlignStatus::SymmetricSkipped, scores });
    }
    let rotation = rotations[best];
    Ok(Alignment { aligned: rotate_scene(scene, rotation), rotation, status: AlignStatus::Aligned, scores })
}
