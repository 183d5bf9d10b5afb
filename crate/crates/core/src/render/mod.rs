//! Orthographic Gaussian point splatting with exact vector-Jacobian products.
//!
//! A scene is a weighted point cloud. The camera orbits the vertical (`y`)
//! axis: a pose with azimuth `ψ` rotates every point by `ψ` about `y` and
//! drops the depth coordinate, so rotating the scene by `Δ` is the same as
//! moving the camera by `Δ`.

mod io;
mod scene;
mod splat;

pub use io::{image_to_csv, image_to_pgm, read_scene_json, write_scene_json};
pub use scene::{rotate_point, rotate_scene, CameraPose, Point, Scene, SceneGrad};
pub use splat::{render, render_vjp, view_l2_grad, RenderConfig, RenderImage};

/// `count` azimuths spaced uniformly on `[0, 2π)`, starting at `offset`.
pub fn pose_grid(count: usize, offset: f64) -> Vec<CameraPose> {
    (0..count).map(|k| CameraPose::new(offset + std::f64::consts::TAU * k as f64 / count as f64)).collect()
}
