//! Deterministic stand-ins for a vision-language embedding model. Both text
//! and images map to unit vectors in the same 64-dimensional space.

use std::f64::consts::{FRAC_PI_4, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::render::{CameraPose, RenderImage};

pub const EMBED_DIM: usize = 64;
const POOL: usize = 8;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// Bin (low bits mod 64) and sign (top bit) of a token.
pub fn text_bin(token: &str) -> (usize, f64) {
    let h = fnv1a64(token.as_bytes());
    let bin = (h % EMBED_DIM as u64) as usize;
    let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
    (bin, sign)
}

/// Lower-cases and splits on anything that is not alphanumeric.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric()).filter(|s| !s.is_empty()).map(str::to_lowercase).collect()
}

/// Hashed bag-of-tokens, L2-normalised. If every bin cancels the first
/// basis vector is returned.
pub fn embed_text<S: AsRef<str>>(tokens: &[S]) -> Result<Vec<f64>> {
    if tokens.is_empty() {
        return Err(Error::Input("cannot embed an empty token list".into()));
    }
    let mut v = vec![0.0; EMBED_DIM];
    for tok in tokens {
        let (bin, sign) = text_bin(tok.as_ref());
        v[bin] += sign;
    }
    if crate::linalg::normalize(&mut v) == 0.0 {
        v[0] = 1.0;
    }
    Ok(v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageEmbedding {
    pub vector: Vec<f64>,
    /// Set when the pooled image had no contrast and the canonical vector
    /// was substituted.
    pub low_signal: bool,
}

/// 8×8 average pool, flatten, subtract the mean, L2-normalise.
pub fn embed_image(image: &RenderImage) -> ImageEmbedding {
    let p = image.resolution;
    let mut sums = [0.0; POOL * POOL];
    let mut counts = [0usize; POOL * POOL];
    for r in 0..p {
        let br = r * POOL / p;
        for c in 0..p {
            let bc = c * POOL / p;
            sums[br * POOL + bc] += image.pixels[r * p + c];
            counts[br * POOL + bc] += 1;
        }
    }
    let mut v: Vec<f64> = sums.iter().zip(&counts).map(|(s, &n)| if n > 0 { s / n as f64 } else { 0.0 }).collect();
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    for x in v.iter_mut() {
        *x -= mean;
    }
    let n = crate::linalg::normalize(&mut v);
    if n <= 1e-300 || !n.is_finite() {
        let mut canon = vec![0.0; EMBED_DIM];
        canon[0] = 1.0;
        return ImageEmbedding { vector: canon, low_signal: true };
    }
    ImageEmbedding { vector: v, low_signal: false }
}

/// View prefixes used both for orientation alignment and as learnable
/// condition tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewPrefix {
    Front,
    Side,
    Back,
}

impl ViewPrefix {
    pub const ALL: [ViewPrefix; 3] = [ViewPrefix::Front, ViewPrefix::Side, ViewPrefix::Back];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn tokens(self) -> [&'static str; 2] {
        match self {
            ViewPrefix::Front => ["front", "view"],
            ViewPrefix::Side => ["side", "view"],
            ViewPrefix::Back => ["back", "view"],
        }
    }

    /// Pose that shows this view of a canonically oriented asset.
    pub fn canonical_pose(self) -> CameraPose {
        match self {
            ViewPrefix::Front => CameraPose::new(0.0),
            ViewPrefix::Side => CameraPose::new(PI / 2.0),
            ViewPrefix::Back => CameraPose::new(PI),
        }
    }

    /// Sector of a pose: front within π/4 of 0, back within π/4 of π,
    /// everything else (boundaries included) is side.
    pub fn from_pose(pose: CameraPose) -> Self {
        let a = pose.azimuth();
        let from_front = a.min(std::f64::consts::TAU - a);
        if from_front < FRAC_PI_4 {
            ViewPrefix::Front
        } else if (a - PI).abs() < FRAC_PI_4 {
            ViewPrefix::Back
        } else {
            ViewPrefix::Side
        }
    }
}
