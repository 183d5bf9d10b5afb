use serde::{Deserialize, Serialize};

use super::scene::{rotate_point, CameraPose, Scene, SceneGrad};
use crate::error::{check_len, Error, Result};

/// Splats are cut off at this many splat widths, identically in the forward
/// pass and the VJP.
pub const TRUNCATION_WIDTHS: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderConfig {
    pub resolution: usize,
    pub splat_width: f64,
    /// Half-width of the image plane in world units.
    pub extent: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self { resolution: 16, splat_width: 0.15, extent: 1.5 }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.resolution < 4 {
            return Err(Error::Config(format!("render resolution must be >= 4, got {}", self.resolution)));
        }
        if !(self.splat_width > 0.0 && self.splat_width.is_finite()) {
            return Err(Error::Config("splat_width must be positive".into()));
        }
        if !(self.extent > 0.0 && self.extent.is_finite()) {
            return Err(Error::Config("extent must be positive".into()));
        }
        Ok(())
    }

    /// Number of pixels, i.e. the render-space dimension.
    pub fn dim(&self) -> usize {
        self.resolution * self.resolution
    }

    pub fn cell(&self) -> f64 {
        2.0 * self.extent / self.resolution as f64
    }

    /// Image-plane coordinate of the centre of pixel column (or row) `j`.
    pub fn coord(&self, j: usize) -> f64 {
        -self.extent + (j as f64 + 0.5) * self.cell()
    }

    pub fn cutoff(&self) -> f64 {
        TRUNCATION_WIDTHS * self.splat_width
    }

    /// Inclusive pixel index range whose centres lie within `cutoff` of `x`.
    fn span(&self, x: f64) -> Option<(usize, usize)> {
        let cell = self.cell();
        let r = self.cutoff();
        let lo = ((x - r + self.extent) / cell - 0.5).ceil();
        let hi = ((x + r + self.extent) / cell - 0.5).floor();
        let max = (self.resolution - 1) as f64;
        if hi < 0.0 || lo > max || lo > hi {
            return None;
        }
        Some((lo.max(0.0) as usize, hi.min(max) as usize))
    }
}

/// Row-major `P × P` render. Row 0 is the top of the image (largest `y`).
#[derive(Debug, Clone, PartialEq)]
pub struct RenderImage {
    pub pixels: Vec<f64>,
    pub resolution: usize,
    pub pose: CameraPose,
}

impl RenderImage {
    pub fn as_slice(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.pixels
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.resolution + col]
    }
}

/// Image-plane coordinates `(u, v)` of a world point under `pose`.
#[inline]
fn project(position: [f64; 3], azimuth: f64) -> (f64, f64) {
    let r = rotate_point(position, azimuth);
    (r[0], r[1])
}

/// Visits every (pixel index, du, dv, kernel) pair within the cutoff of one
/// projected point, where `du = u - u_p` and `dv = v - v_p`.
#[inline]
fn for_each_splat(cfg: &RenderConfig, u: f64, v: f64, mut f: impl FnMut(usize, f64, f64, f64)) {
    let p = cfg.resolution;
    let r2 = cfg.cutoff() * cfg.cutoff();
    let inv_2h2 = 1.0 / (2.0 * cfg.splat_width * cfg.splat_width);
    let Some((c0, c1)) = cfg.span(u) else { return };
    let Some((y0, y1)) = cfg.span(v) else { return };
    for yj in y0..=y1 {
        let dv = v - cfg.coord(yj);
        let row = p - 1 - yj;
        for c in c0..=c1 {
            let du = u - cfg.coord(c);
            let d2 = du * du + dv * dv;
            if d2 <= r2 {
                f(row * p + c, du, dv, (-d2 * inv_2h2).exp());
            }
        }
    }
}

pub fn render(scene: &Scene, pose: CameraPose, cfg: &RenderConfig) -> RenderImage {
    let mut pixels = vec![0.0; cfg.dim()];
    for point in &scene.points {
        let (u, v) = project(point.position, pose.azimuth());
        let w = point.weight;
        for_each_splat(cfg, u, v, |idx, _, _, k| pixels[idx] += w * k);
    }
    RenderImage { pixels, resolution: cfg.resolution, pose }
}

/// Gradient of `⟨render(scene, pose), cotangent⟩` with respect to every point
/// position and weight.
pub fn render_vjp(scene: &Scene, pose: CameraPose, cfg: &RenderConfig, cotangent: &[f64]) -> Result<SceneGrad> {
    check_len(cfg.dim(), cotangent.len())?;
    let (sin, cos) = pose.azimuth().sin_cos();
    let inv_h2 = 1.0 / (cfg.splat_width * cfg.splat_width);
    let mut grad = SceneGrad::zeros(scene.len());
    for (m, point) in scene.points.iter().enumerate() {
        let (u, v) = project(point.position, pose.azimuth());
        let (mut gw, mut gu, mut gv) = (0.0, 0.0, 0.0);
        for_each_splat(cfg, u, v, |idx, du, dv, k| {
            let ck = cotangent[idx] * k;
            gw += ck;
            gu -= ck * du;
            gv -= ck * dv;
        });
        let w = point.weight * inv_h2;
        // u = x cos ψ − z sin ψ, v = y
        grad.0[4 * m] = w * gu * cos;
        grad.0[4 * m + 1] = w * gv;
        grad.0[4 * m + 2] = -w * gu * sin;
        grad.0[4 * m + 3] = gw;
    }
    Ok(grad)
}

/// Mean over `poses` of `‖render(a) − render(b)‖²` and its gradient with
/// respect to `a`.
pub fn view_l2_grad(
    scene_a: &Scene,
    scene_b: &Scene,
    poses: &[CameraPose],
    cfg: &RenderConfig,
) -> Result<(f64, SceneGrad)> {
    if poses.is_empty() {
        return Err(Error::Config("view_l2_grad needs at least one pose".into()));
    }
    let inv = 1.0 / poses.len() as f64;
    let mut loss = 0.0;
    let mut grad = SceneGrad::zeros(scene_a.len());
    for &pose in poses {
        let ra = render(scene_a, pose, cfg);
        let rb = render(scene_b, pose, cfg);
        let diff: Vec<f64> = ra.pixels.iter().zip(&rb.pixels).map(|(x, y)| x - y).collect();
        loss += inv * crate::linalg::dot(&diff, &diff);
        let g = render_vjp(scene_a, pose, cfg, &diff)?;
        grad.add_scaled(2.0 * inv, &g);
    }
    Ok((loss, grad))
}
