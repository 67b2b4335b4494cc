//! Least-squares fitting of a single wrapped Cauchy or wrapped Normal to the
//! cosine moments of a kernel mixture, and the (μ_ρ, σ_ρ) preference map.
//!
//! The residual is measured in moment space, `Δ(ρ) = Σ_n (α_fit[n] − α[n])²`.
//! By Parseval this is π times the L² distance between the two densities; the
//! constant is dropped since it does not move the minimizer.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circular::{KernelMixture, TrigMoments};
use crate::error::{check_rho, Error, Result};

/// Number of cosine moments used when fitting.
pub const FIT_N_TRUNC: usize = 64;

/// Upper end of the fitting interval.
pub const FIT_RHO_MAX: f64 = 1.0 - 1e-9;

/// Points in the coarse scan that brackets the global minimum.
pub const COARSE_GRID: usize = 1001;

/// Sampled concentrations are clipped to `[0, CLIP_RHO_MAX]`.
pub const CLIP_RHO_MAX: f64 = 1.0 - 1e-6;

/// Default number of kernels drawn per preference cell.
pub const DEFAULT_SAMPLES: usize = 1000;

/// The two fitted families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "WC")]
    WrappedCauchy,
    #[serde(rename = "WN")]
    WrappedNormal,
}

impl Family {
    /// Cosine moment `n` of a zero-centered member with concentration `rho`.
    #[inline]
    pub fn moment(self, rho: f64, n: usize) -> f64 {
        match self {
            Family::WrappedCauchy => rho.powi(n as i32),
            Family::WrappedNormal => rho.powf((n * n) as f64),
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            Family::WrappedCauchy => "WC",
            Family::WrappedNormal => "WN",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "WC" | "wc" => Ok(Family::WrappedCauchy),
            "WN" | "wn" => Ok(Family::WrappedNormal),
            other => Err(Error::Format(format!("unknown family {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub family: Family,
    pub rho_min: f64,
    pub delta: f64,
}

#[inline]
fn delta_unchecked(alpha: &[f64], family: Family, rho: f64) -> f64 {
    alpha
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            let d = family.moment(rho, i + 1) - a;
            d * d
        })
        .sum()
}

/// Moment-space residual of fitting `family` with concentration `rho`.
pub fn delta_of_rho(alpha_mixed: &TrigMoments, family: Family, rho: f64) -> Result<f64> {
    check_rho(rho)?;
    Ok(delta_unchecked(alpha_mixed.as_slice(), family, rho))
}

/// Golden-section search for a minimum of `f` on `[lo, hi]`; stops once the
/// bracket is narrower than `tol`.
pub fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Least-squares concentration for `family` against the given moments.
///
/// A coarse scan of [`COARSE_GRID`] points brackets the global minimum, which is
/// then refined by golden-section search. The returned residual is never larger
/// than the best scanned point.
pub fn fit_family(alpha_mixed: &TrigMoments, family: Family) -> FitResult {
    let alpha = alpha_mixed.as_slice();
    if alpha.iter().all(|&a| a == 0.0) {
        return FitResult {
            family,
            rho_min: 0.0,
            delta: 0.0,
        };
    }
    let step = FIT_RHO_MAX / (COARSE_GRID - 1) as f64;
    let (best_i, best_delta) = (0..COARSE_GRID)
        .map(|i| (i, delta_unchecked(alpha, family, i as f64 * step)))
        .fold((0, f64::INFINITY), |acc, (i, d)| if d < acc.1 { (i, d) } else { acc });
    let lo = best_i.saturating_sub(1) as f64 * step;
    let hi = ((best_i + 1).min(COARSE_GRID - 1)) as f64 * step;
    let (rho, delta) = golden_section(|r| delta_unchecked(alpha, family, r), lo, hi, 1e-13);
    if delta <= best_delta {
        FitResult {
            family,
            rho_min: rho,
            delta,
        }
    } else {
        FitResult {
            family,
            rho_min: best_i as f64 * step,
            delta: best_delta,
        }
    }
}

/// Fits both families and returns `(wc, wn)`.
pub fn fit_both(alpha_mixed: &TrigMoments) -> (FitResult, FitResult) {
    (
        fit_family(alpha_mixed, Family::WrappedCauchy),
        fit_family(alpha_mixed, Family::WrappedNormal),
    )
}

/// Ties go to the wrapped Normal.
pub fn winner(delta_wc: f64, delta_wn: f64) -> Family {
    if delta_wc < delta_wn {
        Family::WrappedCauchy
    } else {
        Family::WrappedNormal
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceCell {
    pub mu_rho: f64,
    pub sigma_rho: f64,
    pub winner: Family,
    pub delta_wc: f64,
    pub delta_wn: f64,
    pub rho_wc: f64,
    pub rho_wn: f64,
    pub n_samples: usize,
    pub seed: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Random stream for one cell. Keyed by the cell coordinates, not its position,
/// so a sub-grid reproduces the same cells as the full grid.
pub fn cell_rng(seed: u64, mu_rho: f64, sigma_rho: f64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(splitmix64(mu_rho.to_bits()) ^ splitmix64(sigma_rho.to_bits()).rotate_left(17));
    rng
}

/// Draws `n_samples` concentrations from N(μ_ρ, σ_ρ), clipped to `[0, CLIP_RHO_MAX]`.
pub fn sample_rhos(rng: &mut impl Rng, mu_rho: f64, sigma_rho: f64, n_samples: usize) -> Vec<f64> {
    (0..n_samples)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            (mu_rho + sigma_rho * z).clamp(0.0, CLIP_RHO_MAX)
        })
        .collect()
}

/// Evaluates a single (μ_ρ, σ_ρ) cell.
pub fn preference_cell(mu_rho: f64, sigma_rho: f64, n_samples: usize, seed: u64) -> Result<PreferenceCell> {
    validate_grid_value("mu_rho", mu_rho)?;
    validate_grid_value("sigma_rho", sigma_rho)?;
    if n_samples < 2 {
        return Err(Error::Precondition(format!(
            "n_samples must be at least 2, got {n_samples}"
        )));
    }
    let mut rng = cell_rng(seed, mu_rho, sigma_rho);
    let rhos = sample_rhos(&mut rng, mu_rho, sigma_rho, n_samples);
    let moments = KernelMixture::centered(2.0, &rhos)?.moments(FIT_N_TRUNC)?;
    let (wc, wn) = fit_both(&moments);
    Ok(PreferenceCell {
        mu_rho,
        sigma_rho,
        winner: winner(wc.delta, wn.delta),
        delta_wc: wc.delta,
        delta_wn: wn.delta,
        rho_wc: wc.rho_min,
        rho_wn: wn.rho_min,
        n_samples,
        seed,
    })
}

fn validate_grid_value(name: &'static str, v: f64) -> Result<()> {
    if (0.0..1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::Domain {
            name,
            value: v,
            domain: "[0, 1)",
        })
    }
}

/// The preference map over `sigma_grid × mu_grid`, σ-major.
///
/// Cells are evaluated in parallel; each draws from its own stream, so the
/// result does not depend on scheduling.
pub fn preference_map(
    mu_grid: &[f64],
    sigma_grid: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<Vec<PreferenceCell>> {
    if mu_grid.is_empty() || sigma_grid.is_empty() {
        return Err(Error::Precondition("grids must be non-empty".into()));
    }
    for &m in mu_grid {
        validate_grid_value("mu_rho", m)?;
    }
    for &s in sigma_grid {
        validate_grid_value("sigma_rho", s)?;
    }
    let coords: Vec<(f64, f64)> = sigma_grid
        .iter()
        .flat_map(|&s| mu_grid.iter().map(move |&m| (m, s)))
        .collect();
    coords
        .par_iter()
        .map(|&(m, s)| preference_cell(m, s, n_samples, seed))
        .collect()
}

/// The grid {0.1, 0.2, …, 0.9}.
pub fn default_grid() -> Vec<f64> {
    (1..=9).map(|i| i as f64 / 10.0).collect()
}

/// Moments of the uniform concentration grid `rho_m = m / N`, `m = 0..N`,
/// for wrapped Normal kernels.
pub fn uniform_grid_moments(n_kernels: usize, n_trunc: usize) -> Result<TrigMoments> {
    let rhos: Vec<f64> = (0..n_kernels).map(|m| m as f64 / n_kernels as f64).collect();
    KernelMixture::centered(2.0, &rhos)?.moments(n_trunc)
}
