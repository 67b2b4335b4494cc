//! Margin and gradient analysis of the wrapped Cauchy logit.

use std::f64::consts::PI;

use crate::error::{check_rho, Error, Result};
use crate::reference::bisect;
use crate::wcdas::head::{wc_drho, wc_logit_density};

/// `(ρ + ρ²) / (π (1 − ρ)³)`: the slope of the wrapped Cauchy density with
/// respect to `cos θ` at `θ = 0`.
pub fn margin_factor(rho: f64) -> Result<f64> {
    check_rho(rho)?;
    Ok((rho + rho * rho) / (PI * (1.0 - rho).powi(3)))
}

/// The concentration at which [`margin_factor`] crosses one, by bisection.
pub fn margin_threshold() -> f64 {
    bisect(|r| (r + r * r) / (PI * (1.0 - r).powi(3)) - 1.0, 0.0, 0.99, 1e-14)
        .expect("margin factor changes sign on [0, 0.99]")
}

/// True iff `|f(θ_j) − f(θ_k)| > |cos θ_j − cos θ_k|` for every pair.
///
/// Each pair must satisfy `cos θ_j > cos θ_k`.
pub fn margin_lower_bound_check(rho: f64, theta_pairs: &[(f64, f64)]) -> Result<bool> {
    check_rho(rho)?;
    for (i, &(tj, tk)) in theta_pairs.iter().enumerate() {
        if !(tj.cos() > tk.cos()) {
            return Err(Error::Precondition(format!(
                "pair {i}: cos θ_j = {} must exceed cos θ_k = {}",
                tj.cos(),
                tk.cos()
            )));
        }
    }
    Ok(theta_pairs.iter().all(|&(tj, tk)| {
        let (cj, ck) = (tj.cos(), tk.cos());
        let df = (wc_logit_density(rho, cj) - wc_logit_density(rho, ck)).abs();
        df > (cj - ck).abs()
    }))
}

/// Fraction of pairs on which the amplification holds, for diagnostics.
pub fn margin_amplified_fraction(rho: f64, theta_pairs: &[(f64, f64)]) -> Result<f64> {
    check_rho(rho)?;
    if theta_pairs.is_empty() {
        return Ok(1.0);
    }
    let ok = theta_pairs
        .iter()
        .filter(|&&(tj, tk)| {
            let (cj, ck) = (tj.cos(), tk.cos());
            (wc_logit_density(rho, cj) - wc_logit_density(rho, ck)).abs() > (cj - ck).abs()
        })
        .count();
    Ok(ok as f64 / theta_pairs.len() as f64)
}

/// All ordered pairs `(θ_j, θ_k)` from an n-point grid on [0, π] with `cos θ_j > cos θ_k`.
pub fn theta_pair_grid(n: usize) -> Vec<(f64, f64)> {
    let grid: Vec<f64> = (0..n).map(|i| PI * i as f64 / (n - 1).max(1) as f64).collect();
    let mut pairs = Vec::new();
    for &tj in &grid {
        for &tk in &grid {
            if tj.cos() > tk.cos() {
                pairs.push((tj, tk));
            }
        }
    }
    pairs
}

/// ∂f/∂ρ of the wrapped Cauchy density tabulated on `rho_grid × theta_grid`,
/// ρ-major.
pub fn gradient_surface(rho_grid: &[f64], theta_grid: &[f64]) -> Result<Vec<Vec<f64>>> {
    if rho_grid.is_empty() || theta_grid.is_empty() {
        return Err(Error::Precondition("gradient grids must be non-empty".into()));
    }
    rho_grid
        .iter()
        .map(|&rho| {
            check_rho(rho)?;
            Ok(theta_grid.iter().map(|&t| wc_drho(rho, t.cos())).collect())
        })
        .collect()
}

/// The angle where ∂f/∂ρ changes sign: `cos θ* = 2ρ / (1 + ρ²)`.
pub fn gradient_sign_change(rho: f64) -> Result<f64> {
    check_rho(rho)?;
    Ok((2.0 * rho / (1.0 + rho * rho)).acos())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::central_difference;
    use approx::assert_relative_eq;

    #[test]
    fn factor_values() {
        assert_eq!(margin_factor(0.0).unwrap(), 0.0);
        assert_relative_eq!(margin_factor(0.5).unwrap(), 1.909_859_317_102_744, max_relative = 1e-12);
        assert_relative_eq!(margin_factor(0.1).unwrap(), 0.048_030_298_326_772_25, max_relative = 1e-12);
        assert!(margin_factor(1.0).is_err());
    }

    #[test]
    fn threshold_near_published_root() {
        assert!((margin_threshold() - 0.42332).abs() < 1e-4);
    }

    #[test]
    fn factor_is_increasing() {
        let v: Vec<f64> = (0..999).map(|i| margin_factor(i as f64 / 1000.0).unwrap()).collect();
        assert!(v.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn amplification_examples() {
        // |Δf| ≈ 0.499 and |Δcos| ≈ 1.396 for this pair, so no amplification
        assert!(!margin_lower_bound_check(0.6, &[(0.2, 2.0)]).unwrap());
        assert!(!margin_lower_bound_check(0.1, &[(0.0, PI)]).unwrap());
        // close to θ = 0 the slope is the margin factor, which exceeds one here
        assert!(margin_lower_bound_check(0.6, &[(0.0, 0.01)]).unwrap());
        assert!(margin_lower_bound_check(0.6, &[(2.0, 0.2)]).is_err());
    }

    #[test]
    fn surface_matches_finite_differences() {
        let rhos: Vec<f64> = (1..20).map(|i| i as f64 / 20.0).collect();
        let thetas: Vec<f64> = (0..50).map(|i| -PI + i as f64 * 0.128).collect();
        let surf = gradient_surface(&rhos, &thetas).unwrap();
        for (i, &r) in rhos.iter().enumerate() {
            for (j, &t) in thetas.iter().enumerate() {
                let fd = central_difference(|x| crate::reference::wrapped_cauchy_direct(x, t), r, 1e-6);
                assert!((surf[i][j] - fd).abs() < 1e-7 * fd.abs().max(1.0));
            }
        }
    }

    #[test]
    fn surface_point_values_and_sign_change() {
        let s = gradient_surface(&[0.5, 1e-9], &[0.0]).unwrap();
        assert_relative_eq!(s[0][0], 1.273_239_544_735_162_8, max_relative = 1e-12);
        assert_relative_eq!(s[1][0], 1.0 / PI, max_relative = 1e-8);
        for rho in [0.1, 0.4, 0.8] {
            let t_star = gradient_sign_change(rho).unwrap();
            let s = gradient_surface(&[rho], &[0.0, 0.99 * t_star, 1.01 * t_star, PI]).unwrap();
            assert!(s[0][0] > 0.0 && s[0][1] > 0.0);
            assert!(s[0][2] < 0.0 && s[0][3] < 0.0);
        }
    }
}
