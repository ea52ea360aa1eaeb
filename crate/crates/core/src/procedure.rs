//! The aggregated permutation test over a (bandwidth × ridge) grid.
//!
//! Work is split into independent units so that callers can schedule them
//! freely: [`PreparedTest::observed`] per bandwidth and
//! [`PreparedTest::permuted`] per (bandwidth, permutation). Permutation `b`
//! at bandwidth index `i` always draws from `substream(seed, i, b)` and is
//! shared by every statistic and ridge at that bandwidth, so results do not
//! depend on evaluation order.

use alloc::vec::Vec;

use crate::calibration::{corrected_level, permutation_pvalue_from, permutation_quantile, random_partition, substream, GridSize};
use crate::embedding::{Design, Partition};
use crate::error::{invalid, Error, Result};
use crate::evaluator::{BandwidthEvaluator, StatisticLayout};
use crate::kernels::{median_heuristic, KernelFamily, KernelSpec, MedianBandwidth, BANDWIDTH_MULTIPLIERS};
use crate::sample::Sample;
use crate::statistics::StatisticKind;

/// Significance level used throughout the benchmarks.
pub const DEFAULT_ALPHA: f64 = 0.05;

/// Default permutation count.
pub const DEFAULT_PERMUTATIONS: usize = 300;

/// Ridge grid `{10⁻⁷, 10⁻⁶, …, 10⁻¹}`.
pub const DEFAULT_RIDGES: [f64; 7] = [1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1];

/// Settings of one aggregated test.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct TestConfig {
    pub kinds: Vec<StatisticKind>,
    pub ridges: Vec<f64>,
    pub multipliers: Vec<f64>,
    pub kernel: KernelFamily,
    /// `None` picks the smallest count that can reach the corrected level,
    /// but never fewer than [`DEFAULT_PERMUTATIONS`].
    pub permutations: Option<usize>,
    pub alpha: f64,
    pub seed: u64,
    /// Points of each sample reserved for the second-moment estimate.
    pub split: Option<usize>,
}

impl Default for TestConfig {
    fn default() -> Self {
        TestConfig {
            kinds: StatisticKind::ALL.to_vec(),
            ridges: DEFAULT_RIDGES.to_vec(),
            multipliers: BANDWIDTH_MULTIPLIERS.to_vec(),
            kernel: KernelFamily::Gaussian,
            permutations: None,
            alpha: DEFAULT_ALPHA,
            seed: 0,
            split: None,
        }
    }
}

impl TestConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(invalid("alpha", alloc::format!("level must lie in (0, 1), got {}", self.alpha)));
        }
        if self.permutations == Some(0) {
            return Err(invalid("permutations", "at least one permutation is required"));
        }
        if self.multipliers.is_empty() {
            return Err(Error::Empty("bandwidth multipliers"));
        }
        if let Some(bad) = self.multipliers.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(invalid("bandwidth multipliers", alloc::format!("must be positive, got {bad}")));
        }
        StatisticLayout::new(&self.kinds, &self.ridges)?;
        Ok(())
    }

    /// Grid shape seen by the Bonferroni correction of `kind`.
    pub fn grid(&self, kind: StatisticKind) -> GridSize {
        GridSize {
            ridges: if kind.uses_ridge() { self.ridges.len() } else { 1 },
            bandwidths: self.multipliers.len(),
        }
    }

    /// Permutation count actually used.
    pub fn resolved_permutations(&self) -> usize {
        self.permutations.unwrap_or_else(|| {
            let cells = self.kinds.iter().map(|&k| self.grid(k).cells()).max().unwrap_or(1);
            required_permutations(self.alpha, cells).max(DEFAULT_PERMUTATIONS)
        })
    }
}

/// Smallest `B` with `1/(B + 1) ≤ α / cells`, the fewest permutations for
/// which the aggregated test can reject at all.
pub fn required_permutations(alpha: f64, cells: usize) -> usize {
    let need = libm::ceil(cells as f64 / alpha - 1e-9) as usize;
    need.saturating_sub(1).max(1)
}

/// One (bandwidth, ridge) cell of a statistic.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct CellResult {
    pub multiplier: f64,
    pub bandwidth: f64,
    pub ridge: Option<f64>,
    pub observed: f64,
    /// Permutation quantile at the corrected level.
    pub quantile: f64,
    pub p_value: f64,
}

/// Aggregated decision for one statistic.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct StatisticReport {
    pub kind: StatisticKind,
    pub corrected_level: f64,
    pub min_p_value: f64,
    pub reject: bool,
    /// False when `1/(B + 1)` exceeds the corrected level.
    pub rejection_possible: bool,
    pub cells: Vec<CellResult>,
}

/// Full outcome of an aggregated test.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct TestReport {
    pub n: usize,
    pub m: usize,
    pub dim: usize,
    pub kernel: KernelFamily,
    pub alpha: f64,
    pub permutations: usize,
    pub seed: u64,
    pub split: Option<usize>,
    pub median_bandwidth: f64,
    pub median_degenerate: bool,
    pub multipliers: Vec<f64>,
    pub bandwidths: Vec<f64>,
    pub ridges: Vec<f64>,
    pub statistics: Vec<StatisticReport>,
}

impl TestReport {
    pub fn statistic(&self, kind: StatisticKind) -> Option<&StatisticReport> {
        self.statistics.iter().find(|s| s.kind == kind)
    }
}

/// Pooled sample, bandwidths and kernel matrices, ready for permutation.
#[derive(Debug, Clone)]
pub struct PreparedTest {
    config: TestConfig,
    n: usize,
    m: usize,
    dim: usize,
    permutations: usize,
    median: MedianBandwidth,
    multipliers: Vec<f64>,
    bandwidths: Vec<f64>,
    evaluators: Vec<BandwidthEvaluator>,
    layout: StatisticLayout,
}

impl PreparedTest {
    pub fn new(x: &Sample, y: &Sample, config: &TestConfig) -> Result<Self> {
        config.validate()?;
        if x.is_empty() || y.is_empty() {
            return Err(Error::Empty("sample"));
        }
        let (n, m) = (x.len(), y.len());
        if let Some(s) = config.split {
            Design::split(&Partition::contiguous(n, m)?, s)?;
        }
        let pooled = x.concat(y)?;
        let median = median_heuristic(&pooled)?;
        let mut multipliers = config.multipliers.clone();
        multipliers.sort_by(f64::total_cmp);
        let bandwidths: Vec<f64> = multipliers.iter().map(|c| c * median.value).collect();
        let evaluators = bandwidths
            .iter()
            .map(|&h| BandwidthEvaluator::new(&KernelSpec::new(config.kernel, h)?, &pooled))
            .collect::<Result<Vec<_>>>()?;
        Ok(PreparedTest {
            config: config.clone(),
            n,
            m,
            dim: x.dim(),
            permutations: config.resolved_permutations(),
            median,
            multipliers,
            bandwidths,
            evaluators,
            layout: StatisticLayout::new(&config.kinds, &config.ridges)?,
        })
    }

    pub fn bandwidth_count(&self) -> usize {
        self.bandwidths.len()
    }

    pub fn permutations(&self) -> usize {
        self.permutations
    }

    pub fn median(&self) -> MedianBandwidth {
        self.median
    }

    pub fn bandwidths(&self) -> &[f64] {
        &self.bandwidths
    }

    pub fn layout(&self) -> &StatisticLayout {
        &self.layout
    }

    fn design(&self, p: &Partition) -> Result<Design> {
        match self.config.split {
            Some(s) => Design::split(p, s),
            None => Ok(Design::full(p)),
        }
    }

    fn evaluator(&self, bw: usize) -> Result<&BandwidthEvaluator> {
        self.evaluators
            .get(bw)
            .ok_or_else(|| invalid("bandwidth index", alloc::format!("{bw} out of range")))
    }

    /// Statistics of the given partition at bandwidth `bw`, in layout order.
    pub fn evaluate(&self, bw: usize, partition: &Partition) -> Result<Vec<f64>> {
        self.evaluator(bw)?.evaluate(&self.design(partition)?, &self.layout)
    }

    /// Statistics of the observed split at bandwidth `bw`.
    pub fn observed(&self, bw: usize) -> Result<Vec<f64>> {
        self.evaluate(bw, &Partition::contiguous(self.n, self.m)?)
    }

    /// Statistics of permutation `b` at bandwidth `bw`.
    pub fn permuted(&self, bw: usize, b: usize) -> Result<Vec<f64>> {
        let mut rng = substream(self.config.seed, bw as u64, b as u64);
        self.evaluate(bw, &random_partition(self.n, self.m, &mut rng)?)
    }

    /// Builds the report from `observed[bw]` and `permuted[bw][b]`.
    pub fn assemble(&self, observed: &[Vec<f64>], permuted: &[Vec<Vec<f64>>]) -> Result<TestReport> {
        let nb = self.bandwidth_count();
        if observed.len() != nb || permuted.len() != nb {
            return Err(Error::DimensionMismatch {
                expected: nb,
                found: observed.len().min(permuted.len()),
            });
        }
        for (obs, perms) in observed.iter().zip(permuted) {
            if perms.len() != self.permutations {
                return Err(Error::DimensionMismatch {
                    expected: self.permutations,
                    found: perms.len(),
                });
            }
            if obs.len() != self.layout.len() || perms.iter().any(|p| p.len() != self.layout.len()) {
                return Err(Error::DimensionMismatch {
                    expected: self.layout.len(),
                    found: obs.len(),
                });
            }
        }
        let alpha = self.config.alpha;
        let floor = 1.0 / (self.permutations + 1) as f64;
        let mut statistics = Vec::with_capacity(self.layout.kinds().len());
        let mut column = Vec::with_capacity(self.permutations);
        let mut offset = 0;
        for (ki, &kind) in self.layout.kinds().iter().enumerate() {
            let ridges = self.layout.cells(ki);
            let level = corrected_level(alpha, self.config.grid(kind));
            let mut cells = Vec::with_capacity(nb * ridges.len());
            for bw in 0..nb {
                for (ri, &ridge) in ridges.iter().enumerate() {
                    let slot = offset + ri;
                    let obs = observed[bw][slot];
                    column.clear();
                    column.extend(permuted[bw].iter().map(|p| p[slot]));
                    cells.push(CellResult {
                        multiplier: self.multipliers[bw],
                        bandwidth: self.bandwidths[bw],
                        ridge,
                        observed: obs,
                        quantile: permutation_quantile(obs, &column, level),
                        p_value: permutation_pvalue_from(obs, &column),
                    });
                }
            }
            offset += ridges.len();
            let min_p_value = cells.iter().map(|c| c.p_value).fold(1.0, f64::min);
            statistics.push(StatisticReport {
                kind,
                corrected_level: level,
                min_p_value,
                reject: min_p_value <= level,
                rejection_possible: floor <= level,
                cells,
            });
        }
        Ok(TestReport {
            n: self.n,
            m: self.m,
            dim: self.dim,
            kernel: self.config.kernel,
            alpha,
            permutations: self.permutations,
            seed: self.config.seed,
            split: self.config.split,
            median_bandwidth: self.median.value,
            median_degenerate: self.median.degenerate,
            multipliers: self.multipliers.clone(),
            bandwidths: self.bandwidths.clone(),
            ridges: self.config.ridges.clone(),
            statistics,
        })
    }

    /// Evaluates every unit in order on the current thread.
    pub fn run_sequential(&self) -> Result<TestReport> {
        let nb = self.bandwidth_count();
        let mut observed = Vec::with_capacity(nb);
        let mut permuted = Vec::with_capacity(nb);
        for bw in 0..nb {
            observed.push(self.observed(bw)?);
            permuted.push((0..self.permutations).map(|b| self.permuted(bw, b)).collect::<Result<Vec<_>>>()?);
        }
        self.assemble(&observed, &permuted)
    }
}

/// Runs the aggregated test on the current thread.
pub fn run_test(x: &Sample, y: &Sample, config: &TestConfig) -> Result<TestReport> {
    PreparedTest::new(x, y, config)?.run_sequential()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{sample, Model, ModelSpec, Side};

    fn small_config() -> TestConfig {
        TestConfig {
            kinds: StatisticKind::ALL.to_vec(),
            ridges: alloc::vec![1e-3, 1e-1],
            multipliers: alloc::vec![1.0, 5.0],
            permutations: Some(99),
            seed: 11,
            ..TestConfig::default()
        }
    }

    #[test]
    fn auto_permutations_reach_corrected_level() {
        let cfg = TestConfig::default();
        assert_eq!(cfg.grid(StatisticKind::Klr).cells(), 42);
        assert_eq!(cfg.grid(StatisticKind::Mmd).cells(), 6);
        let b = cfg.resolved_permutations();
        assert_eq!(b, 839);
        assert!(1.0 / (b + 1) as f64 <= 0.05 / 42.0);
        assert!(1.0 / b as f64 > 0.05 / 42.0);
        assert_eq!(required_permutations(0.05, 1), 19);
        let fixed = TestConfig { permutations: Some(7), ..cfg };
        assert_eq!(fixed.resolved_permutations(), 7);
    }

    #[test]
    fn identical_samples_accept_with_zero_statistics() {
        let spec = ModelSpec::new(Model::GaussianMeanShift { delta: 0.0, support: 1 }, 2, Side::P).unwrap();
        let x = sample(&spec, 12, 3).unwrap();
        let report = run_test(&x, &x, &small_config()).unwrap();
        for s in &report.statistics {
            assert!(!s.reject);
            for c in &s.cells {
                // HSR is a square root, so roundoff of order 1e-16 shows up near 1e-8.
                let tol = if s.kind == StatisticKind::Hsr { 1e-6 } else { 1e-8 };
                assert!(c.observed.abs() < tol, "{:?} {}", s.kind, c.observed);
            }
        }
    }

    #[test]
    fn report_shape_and_pvalue_lattice() {
        let p = ModelSpec::new(Model::GaussianMeanShift { delta: 1.5, support: 2 }, 3, Side::P).unwrap();
        let x = sample(&p, 15, 1).unwrap();
        let y = sample(&p.with_side(Side::Q), 15, 2).unwrap();
        let cfg = small_config();
        let report = run_test(&x, &y, &cfg).unwrap();
        assert_eq!(report.permutations, 99);
        assert_eq!(report.statistics.len(), 5);
        for s in &report.statistics {
            let expected = if s.kind.uses_ridge() { 4 } else { 2 };
            assert_eq!(s.cells.len(), expected);
            assert_eq!(s.reject, s.cells.iter().any(|c| c.p_value <= s.corrected_level));
            for c in &s.cells {
                let k = c.p_value * 100.0;
                assert!((k - k.round()).abs() < 1e-9 && (1.0..=100.0).contains(&k.round()));
            }
        }
        assert!(report.statistic(StatisticKind::Klr).unwrap().reject);
    }

    #[test]
    fn assembling_in_any_order_is_identical() {
        let p = ModelSpec::new(Model::SpikedVariance { lambda: 3.0, support: 1 }, 2, Side::P).unwrap();
        let x = sample(&p, 10, 1).unwrap();
        let y = sample(&p.with_side(Side::Q), 9, 2).unwrap();
        let prepared = PreparedTest::new(&x, &y, &small_config()).unwrap();
        let reference = prepared.run_sequential().unwrap();
        let nb = prepared.bandwidth_count();
        let observed: Vec<_> = (0..nb).rev().map(|bw| prepared.observed(bw).unwrap()).rev().collect();
        let permuted: Vec<Vec<_>> = (0..nb)
            .map(|bw| {
                let mut v: Vec<_> = (0..prepared.permutations()).rev().map(|b| prepared.permuted(bw, b).unwrap()).collect();
                v.reverse();
                v
            })
            .collect();
        assert_eq!(prepared.assemble(&observed, &permuted).unwrap(), reference);
    }

    #[test]
    fn split_design_runs() {
        let p = ModelSpec::new(Model::GaussianMeanShift { delta: 0.0, support: 1 }, 2, Side::P).unwrap();
        let x = sample(&p, 12, 1).unwrap();
        let y = sample(&p, 12, 2).unwrap();
        let cfg = TestConfig { split: Some(4), ..small_config() };
        assert_eq!(run_test(&x, &y, &cfg).unwrap().split, Some(4));
        let bad = TestConfig { split: Some(12), ..small_config() };
        assert!(run_test(&x, &y, &bad).is_err());
    }

    #[test]
    fn config_errors() {
        let x = Sample::new(alloc::vec![0.0, 1.0, 2.0], 3, 1).unwrap();
        let y = Sample::new(alloc::vec![0.0, 1.0], 1, 2).unwrap();
        assert!(run_test(&x, &y, &small_config()).is_err());
        for cfg in [
            TestConfig { alpha: 1.0, ..small_config() },
            TestConfig { permutations: Some(0), ..small_config() },
            TestConfig { ridges: alloc::vec![], ..small_config() },
            TestConfig { multipliers: alloc::vec![-1.0], ..small_config() },
            TestConfig { kinds: alloc::vec![], ..small_config() },
        ] {
            assert!(cfg.validate().is_err());
        }
    }
}
