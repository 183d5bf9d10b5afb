use super::mixture::{oracle_score, GaussianMixtureTarget};
use super::schedule::schedule_coeffs;
use crate::error::{check_len, Error, Result};

/// Deterministic DDIM (probability-flow) sampling from `t_start` down to 0 in
/// `steps` uniform steps, using the analytic score.
pub fn ddim_sample(target: &GaussianMixtureTarget, steps: usize, x_start: &[f64], t_start: f64) -> Result<Vec<f64>> {
    check_len(target.dim(), x_start.len())?;
    ddim_sample_eps(steps, x_start, t_start, |x, t| {
        let (_, sigma) = schedule_coeffs(t)?;
        Ok(oracle_score(x, t, target)?.iter().map(|s| -sigma * s).collect())
    })
}

/// DDIM driven by an arbitrary ε-prediction `eps(x_t, t)`; it is only
/// evaluated at `t > 0`.
pub fn ddim_sample_eps(
    steps: usize,
    x_start: &[f64],
    t_start: f64,
    mut eps: impl FnMut(&[f64], f64) -> Result<Vec<f64>>,
) -> Result<Vec<f64>> {
    if steps == 0 {
        return Err(Error::Config("ddim needs at least one step".into()));
    }
    if !(t_start > 0.0 && t_start < 1.0) {
        return Err(Error::Domain(format!("ddim start t={t_start} must be in (0, 1)")));
    }
    let mut x = x_start.to_vec();
    for k in 0..steps {
        let t = t_start * (1.0 - k as f64 / steps as f64);
        let t_next = t_start * (1.0 - (k + 1) as f64 / steps as f64);
        let (alpha, sigma) = schedule_coeffs(t)?;
        let (alpha_n, sigma_n) = schedule_coeffs(t_next.max(0.0))?;
        let e = eps(&x, t)?;
        check_len(x.len(), e.len())?;
        for (xi, ei) in x.iter_mut().zip(&e) {
            let x0 = (*xi - sigma * ei) / alpha;
            *xi = alpha_n * x0 + sigma_n * ei;
        }
    }
    Ok(x)
}
