//! Permutation calibration, Bonferroni aggregation and analytic thresholds.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::embedding::Partition;
use crate::error::{invalid, Error, Result};

/// Permutation count, master seed and level of a permutation test.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct PermutationPlan {
    pub permutations: usize,
    pub master_seed: u64,
    pub alpha: f64,
}

impl PermutationPlan {
    pub fn new(permutations: usize, master_seed: u64, alpha: f64) -> Result<Self> {
        if permutations == 0 {
            return Err(invalid("permutations", "at least one permutation is required"));
        }
        check_level(alpha)?;
        Ok(PermutationPlan {
            permutations,
            master_seed,
            alpha,
        })
    }
}

fn check_level(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(invalid("alpha", alloc::format!("level must lie in (0, 1), got {alpha}")))
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based generator for `(master_seed, domain, index)`.
///
/// The key is derived from `(master_seed, domain)` and `index` selects the
/// ChaCha stream, so every draw is addressable without shared state and the
/// result does not depend on evaluation order.
pub fn substream(master_seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut state = master_seed ^ domain.wrapping_mul(0xD605_BBB5_8C8A_BBF5);
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(index);
    rng
}

/// Uniformly random split of `0..n+m` into sizes `(n, m)`.
pub fn random_partition(n: usize, m: usize, rng: &mut ChaCha8Rng) -> Result<Partition> {
    let mut order: Vec<usize> = (0..n + m).collect();
    order.shuffle(rng);
    let y = order.split_off(n);
    Partition::new(order, y)
}

/// `(1 + #{b : T_b ≥ T_obs}) / (B + 1)`.
pub fn permutation_pvalue_from(observed: f64, permuted: &[f64]) -> f64 {
    let exceed = permuted.iter().filter(|&&t| t >= observed).count();
    (1 + exceed) as f64 / (permuted.len() + 1) as f64
}

/// Order statistic of rank `⌈(1 − α)(B + 1)⌉` among `{T_1, …, T_B, T_obs}`.
pub fn permutation_quantile(observed: f64, permuted: &[f64], alpha: f64) -> f64 {
    let mut all: Vec<f64> = permuted.to_vec();
    all.push(observed);
    all.sort_by(f64::total_cmp);
    let total = all.len();
    let rank = libm::ceil((1.0 - alpha) * total as f64) as usize;
    all[rank.clamp(1, total) - 1]
}

/// Outcome of a single-cell permutation test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PermutationOutcome {
    pub p_value: f64,
    pub quantile: f64,
    pub observed: f64,
}

/// Permutation test of a statistic defined on partitions of `0..n+m`.
///
/// The observed statistic uses the contiguous partition (first `n` indices
/// to the first sample); permutation `b` draws from
/// `substream(seed, cell_id, b)`.
pub fn permutation_pvalue<F>(mut stat: F, n: usize, m: usize, plan: &PermutationPlan, cell_id: u64) -> Result<PermutationOutcome>
where
    F: FnMut(&Partition) -> Result<f64>,
{
    if n + m < 2 || n == 0 || m == 0 {
        return Err(invalid("sample sizes", "both samples must be nonempty"));
    }
    let observed = stat(&Partition::contiguous(n, m)?)?;
    let mut permuted = Vec::with_capacity(plan.permutations);
    for b in 0..plan.permutations {
        let mut rng = substream(plan.master_seed, cell_id, b as u64);
        permuted.push(stat(&random_partition(n, m, &mut rng)?)?);
    }
    Ok(PermutationOutcome {
        p_value: permutation_pvalue_from(observed, &permuted),
        quantile: permutation_quantile(observed, &permuted, plan.alpha),
        observed,
    })
}

/// Shape of an aggregation grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSize {
    pub ridges: usize,
    pub bandwidths: usize,
}

impl GridSize {
    pub fn cells(self) -> usize {
        self.ridges * self.bandwidths
    }
}

/// One cell of an aggregated test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellPValue {
    pub bandwidth: f64,
    pub ridge: Option<f64>,
    pub p_value: f64,
}

/// Bonferroni level `α / (|Λ| · |K|)`.
pub fn corrected_level(alpha: f64, grid: GridSize) -> f64 {
    alpha / grid.cells() as f64
}

/// Rejects when any cell's p-value is at most `α / (|Λ| · |K|)`.
pub fn aggregate_test(cells: &[CellPValue], alpha: f64, grid: GridSize) -> Result<bool> {
    if cells.is_empty() || grid.cells() == 0 {
        return Err(Error::Empty("aggregation grid"));
    }
    if cells.len() != grid.cells() {
        return Err(Error::DimensionMismatch {
            expected: grid.cells(),
            found: cells.len(),
        });
    }
    check_level(alpha)?;
    let level = corrected_level(alpha, grid);
    Ok(cells.iter().any(|c| c.p_value <= level))
}

/// Uniform-over-distributions threshold
/// `u = n^{−β/2} · 6K (4 K^{1/2} + K C sqrt(ln(1/α)))`.
pub fn analytic_threshold(alpha: f64, n: u64, beta: f64, c: f64, k_sup: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(invalid("alpha", "must lie in (0, 1]"));
    }
    if n == 0 {
        return Err(invalid("n", "must be at least one"));
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(invalid("beta", "must lie in (0, 1]"));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(invalid("C", "must be positive"));
    }
    if !(k_sup > 0.0 && k_sup.is_finite()) {
        return Err(invalid("K", "must be positive"));
    }
    let scale = libm::pow(n as f64, -beta / 2.0);
    let log_term = libm::sqrt(libm::log(1.0 / alpha));
    Ok(scale * 6.0 * k_sup * (4.0 * libm::sqrt(k_sup) + k_sup * c * log_term))
}

/// Smallest `B` with `B ≥ ln(2/δ) / (2 α̃²)`.
pub fn min_permutations(alpha_tilde: f64, delta: f64) -> Result<u64> {
    if !(alpha_tilde > 0.0 && alpha_tilde < 1.0) {
        return Err(invalid("alpha_tilde", "must lie in (0, 1)"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid("delta", "must lie in (0, 1)"));
    }
    let bound = libm::log(2.0 / delta) / (2.0 * alpha_tilde * alpha_tilde);
    // Guard against 1e-13 overshoot turning an exact integer into the next one.
    let rounded = libm::round(bound);
    if (bound - rounded).abs() <= 1e-9 * bound.max(1.0) {
        Ok(rounded as u64)
    } else {
        Ok(libm::ceil(bound) as u64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn pvalue_counts_ties_and_exceedances() {
        assert_relative_eq!(permutation_pvalue_from(0.25, &[0.1, 0.2, 0.3, 0.4]), 0.6);
        assert_relative_eq!(permutation_pvalue_from(5.0, &[0.1, 0.2, 0.3, 0.4]), 0.2);
        assert_relative_eq!(permutation_pvalue_from(0.3, &[0.3, 0.3]), 1.0);
    }

    #[test]
    fn quantile_rank() {
        // Six values, α = 0.5 → rank ⌈3⌉ = 3.
        let q = permutation_quantile(0.25, &[0.5, 0.1, 0.4, 0.2, 0.3], 0.5);
        assert_eq!(q, 0.25);
        let q = permutation_quantile(0.0, &[1.0, 2.0, 3.0], 0.01);
        assert_eq!(q, 3.0);
    }

    #[test]
    fn substreams_are_reproducible_and_distinct() {
        let a: u64 = substream(7, 1, 3).random();
        let b: u64 = substream(7, 1, 3).random();
        let c: u64 = substream(7, 1, 4).random();
        let d: u64 = substream(7, 2, 3).random();
        let e: u64 = substream(8, 1, 3).random();
        assert_eq!(a, b);
        assert!(a != c && a != d && a != e);
    }

    #[test]
    fn random_partition_shapes() {
        let mut rng = substream(1, 0, 0);
        let p = random_partition(3, 5, &mut rng).unwrap();
        assert_eq!((p.x().len(), p.y().len()), (3, 5));
    }

    #[test]
    fn permutation_test_on_separated_samples() {
        let values = [0.0, 0.1, 0.2, 0.3, 10.0, 10.1, 10.2, 10.3];
        let stat = |p: &Partition| -> Result<f64> {
            let mx: f64 = p.x().iter().map(|&i| values[i]).sum::<f64>() / 4.0;
            let my: f64 = p.y().iter().map(|&i| values[i]).sum::<f64>() / 4.0;
            Ok((mx - my).abs())
        };
        let plan = PermutationPlan::new(99, 5, 0.05).unwrap();
        let out = permutation_pvalue(stat, 4, 4, &plan, 0).unwrap();
        // Only the observed split and its mirror reach the observed value (2/70 of splits).
        assert!(out.p_value < 0.1, "{out:?}");
        assert_eq!(out.observed, 10.0);
        assert!(permutation_pvalue(stat, 0, 4, &plan, 0).is_err());
    }

    #[test]
    fn aggregation() {
        let cells = [
            CellPValue { bandwidth: 1.0, ridge: Some(0.1), p_value: 0.004 },
            CellPValue { bandwidth: 1.0, ridge: Some(0.01), p_value: 0.2 },
        ];
        let grid = GridSize { ridges: 2, bandwidths: 1 };
        assert!(aggregate_test(&cells, 0.05, grid).unwrap());
        let ones = [CellPValue { p_value: 1.0, ..cells[0] }, CellPValue { p_value: 1.0, ..cells[1] }];
        assert!(!aggregate_test(&ones, 0.05, grid).unwrap());
        assert!(aggregate_test(&[], 0.05, grid).is_err());
        assert!(aggregate_test(&cells[..1], 0.05, grid).is_err());
    }

    #[test]
    fn default_grid_correction() {
        let grid = GridSize { ridges: 7, bandwidths: 6 };
        assert_relative_eq!(corrected_level(0.05, grid), 0.05 / 42.0);
    }

    #[test]
    fn threshold_values() {
        assert_relative_eq!(analytic_threshold(1.0, 16, 1.0, 2.0, 1.0).unwrap(), 24.0 / 4.0, max_relative = 1e-15);
        let u = analytic_threshold((-1.0f64).exp(), 900, 1.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(u, 1.0, max_relative = 1e-14);
        let small_n = analytic_threshold(0.05, 100, 0.5, 1.0, 1.0).unwrap();
        let large_n = analytic_threshold(0.05, 1000, 0.5, 1.0, 1.0).unwrap();
        assert!(large_n < small_n);
        let strict = analytic_threshold(0.01, 100, 0.5, 1.0, 1.0).unwrap();
        assert!(strict > small_n);
        assert!(analytic_threshold(0.0, 1, 1.0, 1.0, 1.0).is_err());
        assert!(analytic_threshold(0.5, 0, 1.0, 1.0, 1.0).is_err());
        assert!(analytic_threshold(0.5, 1, 1.5, 1.0, 1.0).is_err());
    }

    #[test]
    fn permutation_bound() {
        assert_eq!(min_permutations(0.1, 0.05).unwrap(), 185);
        let delta = 2.0 / core::f64::consts::E;
        assert_eq!(min_permutations(0.1, delta).unwrap(), 50);
        assert_eq!(min_permutations(0.3, delta).unwrap(), 6);
        assert!(min_permutations(0.05, 0.05).unwrap() > min_permutations(0.1, 0.05).unwrap());
        assert!(min_permutations(0.0, 0.05).is_err());
        assert!(min_permutations(0.1, 1.0).is_err());
    }

    #[test]
    fn plan_validation() {
        assert!(PermutationPlan::new(0, 1, 0.05).is_err());
        assert!(PermutationPlan::new(10, 1, 1.0).is_err());
        assert!(PermutationPlan::new(10, 1, 0.05).is_ok());
    }

    proptest! {
        #[test]
        fn pvalue_lies_on_the_lattice(obs in -1.0f64..1.0, perm in prop::collection::vec(-1.0f64..1.0, 1..50)) {
            let p = permutation_pvalue_from(obs, &perm);
            let b = perm.len() as f64;
            let k = p * (b + 1.0);
            prop_assert!((k - k.round()).abs() < 1e-9 && k >= 1.0 && k <= b + 1.0);
        }

        #[test]
        fn monotone_transforms_preserve_pvalues(obs in -16i32..16, perm in prop::collection::vec(-16i32..16, 1..40)) {
            // Eighths keep both transforms exact in floating point.
            let obs = obs as f64 / 8.0;
            let perm: Vec<f64> = perm.iter().map(|&t| t as f64 / 8.0).collect();
            let p = permutation_pvalue_from(obs, &perm);
            let affine: Vec<f64> = perm.iter().map(|t| 2.0 * t + 1.0).collect();
            prop_assert_eq!(p, permutation_pvalue_from(2.0 * obs + 1.0, &affine));
            let cubic: Vec<f64> = perm.iter().map(|t| t * t * t).collect();
            prop_assert_eq!(p, permutation_pvalue_from(obs * obs * obs, &cubic));
        }
    }

    #[test]
    fn cubic_transform_on_ties() {
        let perm = vec![0.5, 0.5, -0.5];
        assert_eq!(permutation_pvalue_from(0.5, &perm), permutation_pvalue_from(0.125, &[0.125, 0.125, -0.125]));
    }
}
