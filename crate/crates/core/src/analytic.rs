//! Closed-form series for two scaled Brownian motions.
//!
//! For `B₁ = √v₁ W` and `B₂ = √v₂ W` on `[0, 1]` the covariance operators
//! share the eigenfunctions of `W`, with eigenvalues `v_i λ_n` and
//! `λ_n = ((n − ½)π)^{−2}`. The squared Hilbert–Schmidt norm of the
//! regularized difference is a series that diverges as `γ → 0`.
//!
//! Only about `1/(π sqrt(γ/v₁))` terms are of order one, so the series grows
//! like `γ^{−1/2}` ([`bm_hs_sq_limit`]). [`bm_rate_approx`] is the
//! `γ^{−3/2}` law obtained by comparing a different sum with an integral
//! over `[0, ∞)`; it is kept for reference and does not describe the series.

use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{invalid, Result};
use crate::linalg::pairwise_sum;

/// Default truncation length of the series.
pub const DEFAULT_TERMS: u64 = 10_000_000;

const CHUNK: usize = 4096;

/// Parameters of the Brownian-motion series.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BMConfig {
    pub v1: f64,
    pub v2: f64,
    pub gamma: f64,
    pub n_terms: u64,
}

impl BMConfig {
    pub fn new(v1: f64, v2: f64, gamma: f64, n_terms: u64) -> Result<Self> {
        for (name, v) in [("v1", v1), ("v2", v2), ("gamma", gamma)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, "must be positive and finite"));
            }
        }
        if n_terms == 0 {
            return Err(invalid("n_terms", "at least one term is required"));
        }
        Ok(BMConfig { v1, v2, gamma, n_terms })
    }

    pub fn with_default_terms(v1: f64, v2: f64, gamma: f64) -> Result<Self> {
        Self::new(v1, v2, gamma, DEFAULT_TERMS)
    }
}

/// `λ_n = ((n − ½)π)^{−2}` for `n ≥ 1`.
pub fn bm_eigenvalue(n: u64) -> f64 {
    let t = (n as f64 - 0.5) * PI;
    1.0 / (t * t)
}

/// `(v₂ − v₁)² Σ_{n=1}^{N} (λ_n / (v₁λ_n + γ))²`, summed in a fixed pairwise order.
pub fn bm_hs_sq(cfg: &BMConfig) -> f64 {
    let diff = cfg.v2 - cfg.v1;
    if diff == 0.0 {
        return 0.0;
    }
    let mut buf = [0.0f64; CHUNK];
    let mut partials = Vec::with_capacity((cfg.n_terms as usize).div_ceil(CHUNK));
    let mut start = 1u64;
    while start <= cfg.n_terms {
        let len = (cfg.n_terms - start + 1).min(CHUNK as u64) as usize;
        for (i, slot) in buf[..len].iter_mut().enumerate() {
            let lambda = bm_eigenvalue(start + i as u64);
            let r = lambda / (cfg.v1 * lambda + cfg.gamma);
            *slot = r * r;
        }
        partials.push(pairwise_sum(&buf[..len]));
        start += len as u64;
    }
    diff * diff * pairwise_sum(&partials)
}

/// Upper bound on the terms dropped by truncating at `N`.
///
/// Uses `(λ/(v₁λ + γ))² ≤ λ²/γ²` and `Σ_{n>N} (n − ½)^{−4} ≤ (N − ½)^{−3}/3`.
pub fn bm_tail_bound(cfg: &BMConfig) -> f64 {
    let diff = cfg.v2 - cfg.v1;
    let t = cfg.n_terms as f64 - 0.5;
    diff * diff / (3.0 * cfg.gamma * cfg.gamma * PI * PI * PI * PI * t * t * t)
}

/// The rate `(v₂ − v₁)² / (4 γ^{3/2} √v₁)` commonly quoted for this pair.
///
/// It does not match the series; [`bm_hs_sq_limit`] gives its actual
/// small-γ behaviour.
pub fn bm_rate_approx(v1: f64, v2: f64, gamma: f64) -> f64 {
    let diff = v2 - v1;
    diff * diff / (4.0 * libm::pow(gamma, 1.5) * libm::sqrt(v1))
}

/// Small-γ limit of [`bm_hs_sq`]: `(v₂ − v₁)² / (4 v₁^{3/2} γ^{1/2})`.
///
/// Substituting `u = (n − ½)π sqrt(γ/v₁)` turns the sum into a Riemann sum
/// of `∫_0^∞ (1 + u²)^{−2} du = π/4`.
pub fn bm_hs_sq_limit(v1: f64, v2: f64, gamma: f64) -> f64 {
    let diff = v2 - v1;
    diff * diff / (4.0 * libm::pow(v1, 1.5) * libm::sqrt(gamma))
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(crate::Error::DimensionMismatch {
            expected: xs.len(),
            found: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(invalid("points", "at least two points are needed for a slope"));
    }
    if xs.iter().chain(ys).any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(invalid("points", "log-log fit needs positive finite values"));
    }
    let lx: Vec<f64> = xs.iter().map(|&v| libm::log(v)).collect();
    let ly: Vec<f64> = ys.iter().map(|&v| libm::log(v)).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(invalid("points", "x values must not all coincide"));
    }
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn equal_scales_give_zero() {
        for gamma in [1e-4, 1.0] {
            let cfg = BMConfig::new(1.0, 1.0, gamma, 1000).unwrap();
            assert_eq!(bm_hs_sq(&cfg), 0.0);
            assert_eq!(bm_rate_approx(1.0, 1.0, gamma), 0.0);
        }
    }

    #[test]
    fn single_term_by_hand() {
        let cfg = BMConfig::new(1.0, 2.0, 1.0, 1).unwrap();
        let l1 = 4.0 / (PI * PI);
        let expected = (l1 / (l1 + 1.0)).powi(2);
        assert_relative_eq!(bm_hs_sq(&cfg), expected, max_relative = 1e-14);
        assert!((bm_hs_sq(&cfg) - 0.08317).abs() < 1e-5);
    }

    #[test]
    fn approximation_at_unit_gamma() {
        assert_eq!(bm_rate_approx(1.0, 2.0, 1.0), 0.25);
    }

    #[test]
    fn truncation_tail_is_negligible() {
        let a = bm_hs_sq(&BMConfig::new(1.0, 2.0, 1e-3, 1_000_000).unwrap());
        let b = bm_hs_sq(&BMConfig::new(1.0, 2.0, 1e-3, 2_000_000).unwrap());
        assert!(((a - b) / b).abs() < 1e-9);
        let cfg = BMConfig::new(1.0, 2.0, 1e-3, 1_000_000).unwrap();
        assert!(b - a <= bm_tail_bound(&cfg) * (1.0 + 1e-6) + 1e-12 * b);
    }

    #[test]
    fn monotone_in_terms_and_gamma() {
        let mut last = 0.0;
        for n in [1, 2, 5, 50, 500] {
            let v = bm_hs_sq(&BMConfig::new(1.0, 3.0, 0.01, n).unwrap());
            assert!(v >= last);
            last = v;
        }
        let mut last = f64::INFINITY;
        for gamma in [1e-4, 1e-3, 1e-2, 1e-1, 1.0] {
            let v = bm_hs_sq(&BMConfig::new(1.0, 3.0, gamma, 10_000).unwrap());
            assert!(v < last);
            last = v;
        }
    }

    #[test]
    fn slope_of_exact_power_law() {
        let xs = [1e-2, 1e-3, 1e-4];
        let ys: Vec<f64> = xs.iter().map(|&x: &f64| 3.0 * x.powf(-1.5)).collect();
        assert_relative_eq!(loglog_slope(&xs, &ys).unwrap(), -1.5, epsilon = 1e-12);
        assert!(loglog_slope(&xs[..1], &ys[..1]).is_err());
        assert!(loglog_slope(&[1.0, 2.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn series_follows_inverse_square_root_law() {
        let gammas = [1e-2, 1e-3, 1e-4];
        let series: Vec<f64> = gammas
            .iter()
            .map(|&g| bm_hs_sq(&BMConfig::new(1.0, 2.0, g, 1_000_000).unwrap()))
            .collect();
        for (&g, &s) in gammas.iter().zip(&series) {
            assert_relative_eq!(s, bm_hs_sq_limit(1.0, 2.0, g), max_relative = 1e-6);
        }
        assert!((loglog_slope(&gammas, &series).unwrap() + 0.5).abs() < 1e-6);
        let v = bm_hs_sq(&BMConfig::new(2.0, 5.0, 1e-5, 1_000_000).unwrap());
        assert_relative_eq!(v, bm_hs_sq_limit(2.0, 5.0, 1e-5), max_relative = 1e-3);
    }

    #[test]
    fn invalid_config() {
        assert!(BMConfig::new(0.0, 1.0, 1.0, 1).is_err());
        assert!(BMConfig::new(1.0, 1.0, -1.0, 1).is_err());
        assert!(BMConfig::new(1.0, 1.0, 1.0, 0).is_err());
    }
}
