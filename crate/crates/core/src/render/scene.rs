use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub position: [f64; 3],
    pub weight: f64,
}

impl Point {
    pub fn new(x: f64, y: f64, z: f64, weight: f64) -> Self {
        Self { position: [x, y, z], weight }
    }
}

/// A weighted 3D point set: both the optimized particles and the retrieved
/// assets use this representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SceneJson", into = "SceneJson")]
pub struct Scene {
    pub id: Option<String>,
    pub points: Vec<Point>,
}

#[derive(Serialize, Deserialize)]
struct SceneJson {
    id: Option<String>,
    points: Vec<[f64; 4]>,
}

impl TryFrom<SceneJson> for Scene {
    type Error = Error;

    fn try_from(value: SceneJson) -> Result<Self> {
        let points = value.points.into_iter().map(|[x, y, z, w]| Point::new(x, y, z, w)).collect();
        Scene::new(value.id, points)
    }
}

impl From<Scene> for SceneJson {
    fn from(scene: Scene) -> Self {
        SceneJson {
            id: scene.id,
            points: scene.points.iter().map(|p| [p.position[0], p.position[1], p.position[2], p.weight]).collect(),
        }
    }
}

impl Scene {
    pub fn new(id: Option<String>, points: Vec<Point>) -> Result<Self> {
        let scene = Self { id, points };
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::Input("scene must contain at least one point".into()));
        }
        for (m, p) in self.points.iter().enumerate() {
            if !p.position.iter().all(|v| v.is_finite()) {
                return Err(Error::Input(format!("point {m} has a non-finite position")));
            }
            if !(p.weight.is_finite() && p.weight >= 0.0) {
                return Err(Error::Input(format!("point {m} has invalid weight {}", p.weight)));
            }
        }
        Ok(())
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = Some(id.into());
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.points.iter().map(|p| p.weight).sum()
    }

    /// Flattened parameter vector `[x, y, z, w]` per point.
    pub fn to_params(&self) -> Vec<f64> {
        self.points.iter().flat_map(|p| [p.position[0], p.position[1], p.position[2], p.weight]).collect()
    }

    /// Inverse of [`Scene::to_params`]; does not clamp weights.
    pub fn from_params(id: Option<String>, params: &[f64]) -> Result<Self> {
        if params.is_empty() || !params.len().is_multiple_of(4) {
            return Err(Error::Input(format!(
                "parameter vector length {} is not a positive multiple of 4",
                params.len()
            )));
        }
        let points = params.chunks_exact(4).map(|c| Point::new(c[0], c[1], c[2], c[3])).collect();
        Scene::new(id, points)
    }

    /// Gradient step `θ ← θ − lr · g`, with weights projected back onto `w ≥ 0`.
    pub fn descend(&mut self, grad: &SceneGrad, lr: f64) {
        debug_assert_eq!(grad.0.len(), 4 * self.points.len());
        for (p, g) in self.points.iter_mut().zip(grad.0.chunks_exact(4)) {
            for (x, d) in p.position.iter_mut().zip(g) {
                *x -= lr * d;
            }
            p.weight = (p.weight - lr * g[3]).max(0.0);
        }
    }
}

/// Gradient with respect to a scene, laid out like [`Scene::to_params`].
#[derive(Debug, Clone, PartialEq)]
pub struct SceneGrad(pub Vec<f64>);

impl SceneGrad {
    pub fn zeros(points: usize) -> Self {
        Self(vec![0.0; 4 * points])
    }

    pub fn points(&self) -> usize {
        self.0.len() / 4
    }

    pub fn position(&self, m: usize) -> [f64; 3] {
        [self.0[4 * m], self.0[4 * m + 1], self.0[4 * m + 2]]
    }

    pub fn weight(&self, m: usize) -> f64 {
        self.0[4 * m + 3]
    }

    pub fn norm(&self) -> f64 {
        crate::linalg::norm(&self.0)
    }

    pub fn add_scaled(&mut self, a: f64, other: &SceneGrad) {
        crate::linalg::axpy(a, &other.0, &mut self.0);
    }

    pub fn scaled(&self, a: f64) -> SceneGrad {
        SceneGrad(crate::linalg::scale(a, &self.0))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// Camera on the horizontal orbit. Elevation is fixed at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    azimuth: f64,
}

impl CameraPose {
    pub fn new(azimuth: f64) -> Self {
        let mut a = azimuth.rem_euclid(TAU);
        if a >= TAU {
            a = 0.0;
        }
        Self { azimuth: a }
    }

    pub fn azimuth(&self) -> f64 {
        self.azimuth
    }

    pub fn shifted(&self, delta: f64) -> Self {
        Self::new(self.azimuth + delta)
    }
}

/// Rotation by `angle` about the vertical axis.
#[inline]
pub fn rotate_point(p: [f64; 3], angle: f64) -> [f64; 3] {
    let (s, c) = angle.sin_cos();
    [p[0] * c - p[2] * s, p[1], p[0] * s + p[2] * c]
}

pub fn rotate_scene(scene: &Scene, delta_azimuth: f64) -> Scene {
    Scene {
        id: scene.id.clone(),
        points: scene
            .points
            .iter()
            .map(|p| Point { position: rotate_point(p.position, delta_azimuth), weight: p.weight })
            .collect(),
    }
}
