use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diffusion::{oracle_epsilon, GaussianMixtureTarget};
use crate::distill::{t_bucket, EpsilonModel};
use crate::error::{check_len, Error, Result};
use crate::linalg::{dot, Matrix};
use crate::render::CameraPose;
use crate::retrieval::{embed_text, ViewPrefix, EMBED_DIM};

/// Prefix vector followed by the prompt embedding.
pub const CONDITION_DIM: usize = 2 * EMBED_DIM;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewPrefixTokens {
    pub front: Vec<f64>,
    pub side: Vec<f64>,
    pub back: Vec<f64>,
}

impl ViewPrefixTokens {
    pub fn get(&self, prefix: ViewPrefix) -> &[f64] {
        match prefix {
            ViewPrefix::Front => &self.front,
            ViewPrefix::Side => &self.side,
            ViewPrefix::Back => &self.back,
        }
    }

    pub fn get_mut(&mut self, prefix: ViewPrefix) -> &mut Vec<f64> {
        match prefix {
            ViewPrefix::Front => &mut self.front,
            ViewPrefix::Side => &mut self.side,
            ViewPrefix::Back => &mut self.back,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for p in ViewPrefix::ALL {
            let v = self.get(p);
            check_len(EMBED_DIM, v.len())?;
            if !v.iter().all(|x| x.is_finite()) {
                return Err(Error::Input(format!("prefix {p:?} has non-finite entries")));
            }
        }
        Ok(())
    }
}

/// Prefix vectors seeded from the embeddings of "front view", "side view"
/// and "back view".
pub fn init_prefixes() -> ViewPrefixTokens {
    let e = |p: ViewPrefix| embed_text(&p.tokens()).expect("prefix tokens are nonempty");
    ViewPrefixTokens { front: e(ViewPrefix::Front), side: e(ViewPrefix::Side), back: e(ViewPrefix::Back) }
}

pub fn condition_vector(prefix: &[f64], prompt_embedding: &[f64]) -> Result<Vec<f64>> {
    check_len(EMBED_DIM, prefix.len())?;
    check_len(EMBED_DIM, prompt_embedding.len())?;
    let mut c = prefix.to_vec();
    c.extend_from_slice(prompt_embedding);
    Ok(c)
}

/// `ε_ω = ε_φ + g[t-bucket] · A (Bᵀ x_t) + W cond`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterParams {
    pub rank: usize,
    pub a: Matrix,
    pub b: Matrix,
    pub w: Matrix,
    pub t_gains: Vec<f64>,
    pub t_min: f64,
    pub t_max: f64,
}

impl AdapterParams {
    /// Identity adapter: `A = 0`, `W = 0`, `B` zero too, unit gains.
    pub fn zeros(dim: usize, rank: usize, t_buckets: usize, t_min: f64, t_max: f64) -> Self {
        Self {
            rank,
            a: Matrix::zeros(dim, rank),
            b: Matrix::zeros(dim, rank),
            w: Matrix::zeros(dim, CONDITION_DIM),
            t_gains: vec![1.0; t_buckets.max(1)],
            t_min,
            t_max,
        }
    }

    pub fn dim(&self) -> usize {
        self.a.rows
    }

    pub fn bucket(&self, t: f64) -> usize {
        t_bucket(t, self.t_min, self.t_max, self.t_gains.len())
    }

    /// Low-rank part `A (Bᵀ x_t)`.
    pub(crate) fn low_rank(&self, x_t: &[f64]) -> Vec<f64> {
        if self.a.is_zero() {
            return vec![0.0; self.dim()];
        }
        let bx = self.b.tmul_vec(x_t);
        (0..self.dim()).map(|r| dot(self.a.row(r), &bx)).collect()
    }

    /// Condition part `W cond`.
    pub(crate) fn condition_term(&self, cond: &[f64]) -> Vec<f64> {
        if self.w.is_zero() {
            vec![0.0; self.dim()]
        } else {
            self.w.mul_vec(cond)
        }
    }

    pub fn correction(&self, x_t: &[f64], t: f64, cond: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim(), x_t.len())?;
        check_len(CONDITION_DIM, cond.len())?;
        let g = self.t_gains[self.bucket(t)];
        let low = self.low_rank(x_t);
        Ok(self.condition_term(cond).into_iter().zip(low).map(|(c, l)| g * l + c).collect())
    }

    pub fn is_identity(&self) -> bool {
        self.a.is_zero() && self.w.is_zero()
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.b.is_finite() && self.w.is_finite() && self.t_gains.iter().all(|g| g.is_finite())
    }
}

/// Adapted ε-prediction at `pose`, conditioned on the pose's prefix sector
/// and the prompt embedding. An identity adapter returns the oracle output
/// bit for bit.
pub fn adapted_epsilon(
    target: &GaussianMixtureTarget,
    adapter: &AdapterParams,
    prefixes: &ViewPrefixTokens,
    x_t: &[f64],
    t: f64,
    pose: CameraPose,
    prompt_embedding: &[f64],
) -> Result<Vec<f64>> {
    let base = oracle_epsilon(x_t, t, target)?;
    if adapter.is_identity() {
        return Ok(base);
    }
    let cond = condition_vector(prefixes.get(ViewPrefix::from_pose(pose)), prompt_embedding)?;
    let corr = adapter.correction(x_t, t, &cond)?;
    Ok(base.iter().zip(&corr).map(|(b, c)| b + c).collect())
}

/// The adapted prior as an ε-model for the distillation loop.
#[derive(Debug, Clone, Copy)]
pub struct AdaptedPrior<'a> {
    pub target: &'a GaussianMixtureTarget,
    pub adapter: &'a AdapterParams,
    pub prefixes: &'a ViewPrefixTokens,
    pub prompt_embedding: &'a [f64],
}

impl EpsilonModel for AdaptedPrior<'_> {
    fn epsilon(&self, x_t: &[f64], t: f64, pose: CameraPose) -> Result<Vec<f64>> {
        adapted_epsilon(self.target, self.adapter, self.prefixes, x_t, t, pose, self.prompt_embedding)
    }
}

/// On-disk adapter: `{rank, A, B, W, t_gains, prefixes, stopped_step}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterCheckpoint {
    pub rank: usize,
    #[serde(rename = "A")]
    pub a: Matrix,
    #[serde(rename = "B")]
    pub b: Matrix,
    #[serde(rename = "W")]
    pub w: Matrix,
    pub t_gains: Vec<f64>,
    pub t_range: [f64; 2],
    pub prefixes: ViewPrefixTokens,
    pub stopped_step: usize,
}

impl AdapterCheckpoint {
    pub fn new(params: &AdapterParams, prefixes: &ViewPrefixTokens, stopped_step: usize) -> Self {
        Self {
            rank: params.rank,
            a: params.a.clone(),
            b: params.b.clone(),
            w: params.w.clone(),
            t_gains: params.t_gains.clone(),
            t_range: [params.t_min, params.t_max],
            prefixes: prefixes.clone(),
            stopped_step,
        }
    }

    pub fn params(&self) -> Result<AdapterParams> {
        let dim = self.a.rows;
        for (m, cols) in [(&self.a, self.rank), (&self.b, self.rank), (&self.w, CONDITION_DIM)] {
            if m.rows != dim || m.cols != cols || m.data.len() != m.rows * m.cols {
                return Err(Error::Input(format!(
                    "adapter matrix is {}x{} with {} entries, expected {dim}x{cols}",
                    m.rows,
                    m.cols,
                    m.data.len()
                )));
            }
        }
        if self.t_gains.is_empty() {
            return Err(Error::Input("adapter checkpoint has no t_gains".into()));
        }
        self.prefixes.validate()?;
        Ok(AdapterParams {
            rank: self.rank,
            a: self.a.clone(),
            b: self.b.clone(),
            w: self.w.clone(),
            t_gains: self.t_gains.clone(),
            t_min: self.t_range[0],
            t_max: self.t_range[1],
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Self = serde_json::from_str(&text)?;
        ckpt.params()?;
        Ok(ckpt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::cosine;

    #[test]
    fn prefixes_are_reproducible_and_distinct() {
        let a = init_prefixes();
        assert_eq!(a, init_prefixes());
        assert_eq!(a.front, embed_text(&["front", "view"]).unwrap());
        assert!(cosine(&a.front, &a.side) < 1.0 - 1e-9);
        assert!(cosine(&a.front, &a.back) < 1.0 - 1e-9);
        assert!(cosine(&a.side, &a.back) < 1.0 - 1e-9);
    }

    #[test]
    fn unit_w_separates_prefixes() {
        let target = GaussianMixtureTarget::single("g", vec![0.0; 4], 0.5).unwrap();
        let mut ad = AdapterParams::zeros(4, 1, 8, 0.02, 0.98);
        ad.w = Matrix::from_fn(4, CONDITION_DIM, |r, c| if r == c % 4 { 1.0 } else { 0.0 });
        let pre = init_prefixes();
        let prompt = embed_text(&["chair"]).unwrap();
        let x = [0.1, 0.2, 0.3, 0.4];
        let f = adapted_epsilon(&target, &ad, &pre, &x, 0.5, CameraPose::new(0.0), &prompt).unwrap();
        let b = adapted_epsilon(&target, &ad, &pre, &x, 0.5, CameraPose::new(3.1), &prompt).unwrap();
        assert_ne!(f, b);
    }
}
