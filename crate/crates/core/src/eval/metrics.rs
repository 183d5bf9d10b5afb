use crate::diffusion::GaussianMixtureTarget;
use crate::error::{check_len, Error, Result};
use crate::linalg::{dot, norm, sq_dist};
use crate::render::{render, CameraPose, RenderConfig, Scene};
use crate::retrieval::{embed_image, embed_text};

/// Mean L2 distance between renders at cyclically adjacent grid poses,
/// divided by the mean render norm. Zero when every render is blank.
pub fn adjacent_view_inconsistency(scene: &Scene, pose_grid: &[CameraPose], cfg: &RenderConfig) -> Result<f64> {
    if pose_grid.len() < 2 {
        return Err(Error::Config("adjacent inconsistency needs at least two poses".into()));
    }
    let renders: Vec<Vec<f64>> = pose_grid.iter().map(|&p| render(scene, p, cfg).into_vec()).collect();
    Ok(adjacent_inconsistency_of(&renders))
}

/// The same quantity for precomputed renders ordered by azimuth.
pub fn adjacent_inconsistency_of(renders: &[Vec<f64>]) -> f64 {
    let n = renders.len();
    let mean_norm = renders.iter().map(|r| norm(r)).sum::<f64>() / n as f64;
    if mean_norm == 0.0 {
        return 0.0;
    }
    let pairs = if n == 2 { 1 } else { n };
    let total: f64 = (0..pairs).map(|k| sq_dist(&renders[k], &renders[(k + 1) % n]).sqrt()).sum();
    total / pairs as f64 / mean_norm
}

/// Mean cosine between the image embedding of each render and the prompt's
/// text embedding. Blank renders take the canonical image vector.
pub fn prompt_alignment_score<S: AsRef<str>>(
    scene: &Scene,
    prompt_tokens: &[S],
    pose_grid: &[CameraPose],
    cfg: &RenderConfig,
) -> Result<f64> {
    if pose_grid.is_empty() {
        return Err(Error::Config("alignment score needs at least one pose".into()));
    }
    let text = embed_text(prompt_tokens)?;
    let total: f64 = pose_grid
        .iter()
        .map(|&p| {
            let e = embed_image(&render(scene, p, cfg));
            if e.low_signal {
                0.0
            } else {
                dot(&e.vector, &text)
            }
        })
        .sum();
    Ok(total / pose_grid.len() as f64)
}

/// Mean negative clean log-density of `renders` under `target`.
pub fn mean_nll(renders: &[Vec<f64>], target: &GaussianMixtureTarget) -> Result<f64> {
    if renders.is_empty() {
        return Err(Error::Input("NLL needs at least one render".into()));
    }
    let mut total = 0.0;
    for r in renders {
        check_len(target.dim(), r.len())?;
        total -= target.log_density(r, 0.0)?;
    }
    Ok(total / renders.len() as f64)
}

/// Cross-entropy of the particle renders against the target minus the
/// target's entropy bound. Smaller is closer to the target's modes.
pub fn kl_estimate(renders: &[Vec<f64>], target: &GaussianMixtureTarget) -> Result<f64> {
    Ok(mean_nll(renders, target)? - target.entropy_upper_bound())
}

/// Index of the target component whose mean is nearest to `render_vec`.
pub fn nearest_component(render_vec: &[f64], target: &GaussianMixtureTarget) -> Result<usize> {
    check_len(target.dim(), render_vec.len())?;
    let mut best = (0, f64::INFINITY);
    for (k, c) in target.components.iter().enumerate() {
        let d = sq_dist(render_vec, &c.mean);
        if d < best.1 {
            best = (k, d);
        }
    }
    Ok(best.0)
}

/// Mean over poses of the squared distance from the scene's render to the
/// nearest component of `target`. Rotating a scene by a grid step does not
/// change it when the target covers the whole grid.
pub fn mode_distance(
    scene: &Scene,
    target: &GaussianMixtureTarget,
    poses: &[CameraPose],
    cfg: &RenderConfig,
) -> Result<f64> {
    if poses.is_empty() {
        return Err(Error::Config("mode distance needs at least one pose".into()));
    }
    check_len(target.dim(), cfg.dim())?;
    let total: f64 = poses
        .iter()
        .map(|&p| {
            let r = render(scene, p, cfg).into_vec();
            target.components.iter().map(|c| sq_dist(&r, &c.mean)).fold(f64::INFINITY, f64::min)
        })
        .sum();
    Ok(total / poses.len() as f64)
}

pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::{pose_grid, Point};

    fn on_axis() -> Scene {
        Scene::new(None, vec![Point::new(0.0, 0.3, 0.0, 1.0), Point::new(0.0, -0.4, 0.0, 0.7)]).unwrap()
    }

    #[test]
    fn axis_scene_is_view_consistent() {
        let cfg = RenderConfig::default();
        let v = adjacent_view_inconsistency(&on_axis(), &pose_grid(24, 0.0), &cfg).unwrap();
        assert!(v.abs() < 1e-12);
    }

    #[test]
    fn off_axis_point_increases_inconsistency() {
        let cfg = RenderConfig::default();
        let grid = pose_grid(24, 0.0);
        let mut s = on_axis();
        let before = adjacent_view_inconsistency(&s, &grid, &cfg).unwrap();
        s.points.push(Point::new(0.5, 0.0, 0.2, 1.0));
        let after = adjacent_view_inconsistency(&s, &grid, &cfg).unwrap();
        assert!(after > before);
    }

    #[test]
    fn grid_shift_by_one_step_is_invariant() {
        let cfg = RenderConfig::default();
        let s = Scene::new(None, vec![Point::new(0.5, 0.1, -0.3, 1.0), Point::new(-0.2, 0.4, 0.6, 0.8)]).unwrap();
        let g = pose_grid(12, 0.0);
        let mut shifted = g.clone();
        shifted.rotate_left(1);
        let a = adjacent_view_inconsistency(&s, &g, &cfg).unwrap();
        let b = adjacent_view_inconsistency(&s, &shifted, &cfg).unwrap();
        assert!((a - b).abs() < 1e-12);
        assert!(adjacent_view_inconsistency(&s, &g[..1], &cfg).is_err());
    }

    #[test]
    fn blank_scene_scores_zero() {
        let cfg = RenderConfig::default();
        let far = Scene::new(None, vec![Point::new(50.0, 50.0, 50.0, 1.0)]).unwrap();
        let s = prompt_alignment_score(&far, &["a", "chair"], &pose_grid(8, 0.0), &cfg).unwrap();
        assert_eq!(s, 0.0);
    }

    #[test]
    fn nll_closed_form() {
        let mean = vec![0.2, -0.1, 0.4, 0.0];
        let cov = 0.3;
        let t = GaussianMixtureTarget::single("g", mean.clone(), cov).unwrap();
        let d = mean.len() as f64;
        let min = 0.5 * d * (2.0 * std::f64::consts::PI * cov).ln();
        let at = mean_nll(std::slice::from_ref(&mean), &t).unwrap();
        assert!((at - min).abs() < 1e-12);
        let mut off = mean.clone();
        off[2] += 0.5;
        let grown = mean_nll(&[off], &t).unwrap() - at;
        assert!((grown - 0.25 / (2.0 * cov)).abs() < 1e-12);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }
}
