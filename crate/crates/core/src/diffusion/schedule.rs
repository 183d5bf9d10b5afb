use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::rng::Rng;

/// `(alpha, sigma) = (√(1−t), √t)`.
pub fn schedule_coeffs(t: f64) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Domain(format!("noise level t={t} outside [0, 1]")));
    }
    Ok(((1.0 - t).sqrt(), t.sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    #[default]
    Constant,
    SigmaSquared,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSchedule {
    pub t_min: f64,
    pub t_max: f64,
    pub weight_mode: WeightMode,
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self { t_min: 0.02, t_max: 0.98, weight_mode: WeightMode::Constant }
    }
}

impl NoiseSchedule {
    pub fn validate(&self) -> Result<()> {
        let ok = self.t_min > 0.0 && self.t_max < 1.0 && self.t_min <= self.t_max;
        if !ok {
            return Err(Error::Config(format!(
                "schedule needs 0 < t_min <= t_max < 1, got [{}, {}]",
                self.t_min, self.t_max
            )));
        }
        Ok(())
    }

    pub fn coeffs(&self, t: f64) -> Result<(f64, f64)> {
        schedule_coeffs(t)
    }

    /// Distillation weighting `w(t)`.
    pub fn weight(&self, t: f64) -> f64 {
        match self.weight_mode {
            WeightMode::Constant => 1.0,
            WeightMode::SigmaSquared => t,
        }
    }

    pub fn sample_t(&self, rng: &mut Rng) -> f64 {
        if self.t_min == self.t_max {
            self.t_min
        } else {
            rng.random_range(self.t_min..self.t_max)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedSample {
    pub x_t: Vec<f64>,
    pub t: f64,
    pub epsilon: Vec<f64>,
}

/// Forward diffusion `x_t = α(t)·x + σ(t)·ε`.
pub fn perturb(x: &[f64], t: f64, epsilon: &[f64]) -> Result<PerturbedSample> {
    check_len(x.len(), epsilon.len())?;
    let (alpha, sigma) = schedule_coeffs(t)?;
    let x_t = x.iter().zip(epsilon).map(|(a, e)| alpha * a + sigma * e).collect();
    Ok(PerturbedSample { x_t, t, epsilon: epsilon.to_vec() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_closed_form() {
        assert_eq!(schedule_coeffs(0.0).unwrap(), (1.0, 0.0));
        assert_eq!(schedule_coeffs(1.0).unwrap(), (0.0, 1.0));
        let (a, s) = schedule_coeffs(0.36).unwrap();
        assert!((a - 0.8).abs() < 1e-15 && (s - 0.6).abs() < 1e-15);
        assert!(schedule_coeffs(-0.1).is_err());
        assert!(schedule_coeffs(1.5).is_err());
    }

    #[test]
    fn variance_preserving_and_monotone() {
        let mut prev = (f64::INFINITY, -1.0);
        for k in 0..=1000 {
            let t = k as f64 / 1000.0;
            let (a, s) = schedule_coeffs(t).unwrap();
            assert!((a * a + s * s - 1.0).abs() <= 1e-12);
            assert!(a <= prev.0 && s >= prev.1);
            prev = (a, s);
        }
    }

    #[test]
    fn perturb_examples() {
        let z = perturb(&[0.0, 0.0], 0.7, &[0.0, 0.0]).unwrap();
        assert_eq!(z.x_t, vec![0.0, 0.0]);
        let id = perturb(&[0.3, -1.2], 0.0, &[5.0, 5.0]).unwrap();
        assert_eq!(id.x_t, vec![0.3, -1.2]);
        let p = perturb(&[1.0, 0.0], 0.36, &[0.0, 1.0]).unwrap();
        assert!((p.x_t[0] - 0.8).abs() < 1e-15 && (p.x_t[1] - 0.6).abs() < 1e-15);
        assert!(perturb(&[1.0], 0.5, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn weight_modes() {
        let mut s = NoiseSchedule::default();
        assert_eq!(s.weight(0.3), 1.0);
        s.weight_mode = WeightMode::SigmaSquared;
        assert_eq!(s.weight(0.3), 0.3);
        assert!(s.validate().is_ok());
        s.t_min = 0.0;
        assert!(s.validate().is_err());
    }
}
