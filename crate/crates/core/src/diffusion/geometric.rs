//! Discrete check of the geometric-expectation identity: for per-view
//! densities `p_ψ` on a finite state space, with `G ∝ Π_ψ p_ψ^{1/V}`
//! normalised by `Z`,
//! `KL(q ‖ G/Z) = mean_ψ KL(q ‖ p_ψ) − log κ` where `κ = 1/Z`.

use crate::error::{Error, Result};

/// `Σ q log(q/p)`, with `0 log 0 = 0`.
pub fn kl_discrete(q: &[f64], p: &[f64]) -> Result<f64> {
    crate::error::check_len(q.len(), p.len())?;
    let mut kl = 0.0;
    for (&qi, &pi) in q.iter().zip(p) {
        if qi > 0.0 {
            if pi <= 0.0 {
                return Ok(f64::INFINITY);
            }
            kl += qi * (qi / pi).ln();
        }
    }
    Ok(kl)
}

/// Unnormalised geometric mean over views and its normaliser `Z`.
pub fn geometric_mean(views: &[Vec<f64>]) -> Result<(Vec<f64>, f64)> {
    let Some(first) = views.first() else {
        return Err(Error::Input("need at least one view density".into()));
    };
    let n = first.len();
    let inv = 1.0 / views.len() as f64;
    let mut g = vec![0.0; n];
    for view in views {
        crate::error::check_len(n, view.len())?;
        for (gi, p) in g.iter_mut().zip(view) {
            *gi += inv * p.ln();
        }
    }
    let g: Vec<f64> = g.into_iter().map(f64::exp).collect();
    let z = g.iter().sum();
    Ok((g, z))
}

/// Returns `(KL(q ‖ G/Z), mean_ψ KL(q ‖ p_ψ) − log κ)`; the two agree.
pub fn geometric_identity_sides(q: &[f64], views: &[Vec<f64>]) -> Result<(f64, f64)> {
    let (g, z) = geometric_mean(views)?;
    let normalized: Vec<f64> = g.iter().map(|v| v / z).collect();
    let lhs = kl_discrete(q, &normalized)?;
    let mut mean_kl = 0.0;
    for view in views {
        mean_kl += kl_discrete(q, view)? / views.len() as f64;
    }
    let kappa = 1.0 / z;
    Ok((lhs, mean_kl - kappa.ln()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_views_have_unit_normaliser() {
        let p = vec![0.2, 0.3, 0.5];
        let (g, z) = geometric_mean(&[p.clone(), p.clone()]).unwrap();
        assert!((z - 1.0).abs() < 1e-15);
        for (a, b) in g.iter().zip(&p) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn kl_of_self_is_zero() {
        let p = vec![0.1, 0.9];
        assert_eq!(kl_discrete(&p, &p).unwrap(), 0.0);
        assert_eq!(kl_discrete(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), f64::INFINITY);
    }
}
