//! Kernel evaluation, kernel matrices and bandwidth heuristics.
//!
//! Both implemented families are bounded by one (`sup |k| = 1`):
//!
//! ```text
//! gaussian   k(x, y) = exp(-‖x - y‖² / (2h))
//! laplacian  k(x, y) = exp(-‖x - y‖ / h)
//! ```
//!
//! For the gaussian family `h` scales the *squared* distance, so a bandwidth
//! grid built from the median inter-point distance is applied verbatim.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};
use crate::linalg::squared_distance;
use crate::sample::Sample;

/// Supremum of `|k|` for every implemented kernel family.
pub const KERNEL_SUP: f64 = 1.0;

/// Multipliers applied to the median heuristic to form the bandwidth grid.
pub const BANDWIDTH_MULTIPLIERS: [f64; 6] = [1.0 / 50.0, 1.0 / 10.0, 1.0 / 5.0, 1.0, 5.0, 10.0];

/// Bandwidth used when every pooled point coincides.
pub const FALLBACK_BANDWIDTH: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum KernelFamily {
    Gaussian,
    Laplacian,
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelFamily::Gaussian => "gaussian",
            KernelFamily::Laplacian => "laplacian",
        })
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" | "rbf" => Ok(KernelFamily::Gaussian),
            "laplacian" | "laplace" => Ok(KernelFamily::Laplacian),
            other => Err(invalid("kernel", alloc::format!("unknown kernel family `{other}`"))),
        }
    }
}

/// A kernel family together with a positive bandwidth.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct KernelSpec {
    family: KernelFamily,
    bandwidth: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(invalid("bandwidth", alloc::format!("must be positive and finite, got {bandwidth}")));
        }
        Ok(KernelSpec { family, bandwidth })
    }

    pub fn gaussian(bandwidth: f64) -> Result<Self> {
        Self::new(KernelFamily::Gaussian, bandwidth)
    }

    pub fn laplacian(bandwidth: f64) -> Result<Self> {
        Self::new(KernelFamily::Laplacian, bandwidth)
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    #[inline]
    fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        let sq = squared_distance(x, y);
        match self.family {
            KernelFamily::Gaussian => libm::exp(-sq / (2.0 * self.bandwidth)),
            KernelFamily::Laplacian => libm::exp(-libm::sqrt(sq) / self.bandwidth),
        }
    }
}

/// `k(x, y)` for the given kernel.
pub fn eval_kernel(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    Ok(spec.eval_unchecked(x, y))
}

/// A kernel matrix `K[i, j] = k(a_i, b_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    values: DMatrix<f64>,
    same_points: bool,
}

impl KernelMatrix {
    /// Wraps a precomputed matrix. `same_points` asserts that rows and
    /// columns index the same point set, which requires a square matrix.
    pub fn from_matrix(values: DMatrix<f64>, same_points: bool) -> Result<Self> {
        if same_points && !values.is_square() {
            return Err(Error::DimensionMismatch {
                expected: values.nrows(),
                found: values.ncols(),
            });
        }
        Ok(KernelMatrix { values, same_points })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    /// True when rows and columns refer to the same points.
    pub fn same_points(&self) -> bool {
        self.same_points
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    /// Entrywise square `k²`, itself a kernel matrix.
    pub fn squared(&self) -> KernelMatrix {
        KernelMatrix {
            values: self.values.map(|v| v * v),
            same_points: self.same_points,
        }
    }
}

/// Kernel matrix between two point sets. When `a` and `b` are the same
/// object, only the upper triangle is evaluated and mirrored.
pub fn kernel_matrix(spec: &KernelSpec, a: &Sample, b: &Sample) -> Result<KernelMatrix> {
    if a.is_empty() {
        return Err(Error::Empty("kernel matrix rows"));
    }
    if b.is_empty() {
        return Err(Error::Empty("kernel matrix columns"));
    }
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    if core::ptr::eq(a, b) {
        return gram_matrix(spec, a);
    }
    let values = DMatrix::from_fn(a.len(), b.len(), |i, j| spec.eval_unchecked(a.row(i), b.row(j)));
    Ok(KernelMatrix {
        values,
        same_points: false,
    })
}

/// Symmetric kernel matrix of a single point set, unit diagonal.
pub fn gram_matrix(spec: &KernelSpec, points: &Sample) -> Result<KernelMatrix> {
    let n = points.len();
    if n == 0 {
        return Err(Error::Empty("kernel matrix rows"));
    }
    let mut values = DMatrix::identity(n, n);
    for j in 0..n {
        for i in 0..j {
            let v = spec.eval_unchecked(points.row(i), points.row(j));
            values[(i, j)] = v;
            values[(j, i)] = v;
        }
    }
    Ok(KernelMatrix {
        values,
        same_points: true,
    })
}

/// Result of the median heuristic.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct MedianBandwidth {
    pub value: f64,
    /// Set when all points coincide and [`FALLBACK_BANDWIDTH`] was used.
    pub degenerate: bool,
}

/// Median of `‖q − q′‖` over distinct unordered pairs of the pooled sample.
///
/// Every pair is enumerated; for an even pair count the two central order
/// statistics are averaged.
pub fn median_heuristic(pooled: &Sample) -> Result<MedianBandwidth> {
    let n = pooled.len();
    if n < 2 {
        return Err(invalid("pooled sample", "median heuristic needs at least two points"));
    }
    let mut distances = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            distances.push(libm::sqrt(squared_distance(pooled.row(i), pooled.row(j))));
        }
    }
    let value = median_in_place(&mut distances);
    if value > 0.0 {
        Ok(MedianBandwidth {
            value,
            degenerate: false,
        })
    } else {
        Ok(MedianBandwidth {
            value: FALLBACK_BANDWIDTH,
            degenerate: true,
        })
    }
}

fn median_in_place(values: &mut [f64]) -> f64 {
    let len = values.len();
    let mid = len / 2;
    let (lower, upper_mid, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let upper_mid = *upper_mid;
    if len % 2 == 1 {
        upper_mid
    } else {
        let lower_mid = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower_mid + upper_mid)
    }
}

/// The six-point bandwidth grid `{h/50, h/10, h/5, h, 5h, 10h}`, ascending.
pub fn bandwidth_grid(median: f64) -> Result<Vec<f64>> {
    scaled_bandwidths(median, &BANDWIDTH_MULTIPLIERS)
}

/// Bandwidths `multiplier · median` sorted ascending.
pub fn scaled_bandwidths(median: f64, multipliers: &[f64]) -> Result<Vec<f64>> {
    if !(median > 0.0 && median.is_finite()) {
        return Err(invalid("median bandwidth", alloc::format!("must be positive, got {median}")));
    }
    if multipliers.is_empty() {
        return Err(Error::Empty("bandwidth multipliers"));
    }
    if let Some(bad) = multipliers.iter().find(|m| !(**m > 0.0 && m.is_finite())) {
        return Err(invalid("bandwidth multipliers", alloc::format!("must be positive, got {bad}")));
    }
    let mut grid: Vec<f64> = multipliers.iter().map(|m| m * median).collect();
    grid.sort_by(f64::total_cmp);
    Ok(grid)
}
