//! Empirical kernel-map representation of the two samples.
//!
//! With the pooled points `Z_1..Z_N` (`N = n + m`) and pooled kernel matrix
//! `K`, the first-sample mean embedding and second-moment operator act on
//! the system `{k_{Z_1}, …, k_{Z_N}}` as
//!
//! ```text
//! m_x[i]    = (1/n) Σ_{ℓ ∈ X} K[i, ℓ]
//! S_x       = (1/n) G_x G_xᵀ,      G_x = K[:, X]
//! ```
//!
//! and analogously for the second sample.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::kernels::KernelMatrix;

/// A split of pooled indices `0..N` into the two samples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    x: Vec<usize>,
    y: Vec<usize>,
}

impl Partition {
    /// Validates that `x` and `y` are nonempty, disjoint and cover `0..x.len() + y.len()`.
    pub fn new(x: Vec<usize>, y: Vec<usize>) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::Empty("first-sample index set"));
        }
        if y.is_empty() {
            return Err(Error::Empty("second-sample index set"));
        }
        let total = x.len() + y.len();
        let mut seen = vec![false; total];
        for &i in x.iter().chain(&y) {
            if i >= total || seen[i] {
                return Err(invalid("partition", "index sets must partition 0..N"));
            }
            seen[i] = true;
        }
        Ok(Partition { x, y })
    }

    /// First `n` pooled indices to the first sample, the remaining `m` to the second.
    pub fn contiguous(n: usize, m: usize) -> Result<Self> {
        Partition::new((0..n).collect(), (n..n + m).collect())
    }

    pub fn x(&self) -> &[usize] {
        &self.x
    }

    pub fn y(&self) -> &[usize] {
        &self.y
    }

    pub fn total(&self) -> usize {
        self.x.len() + self.y.len()
    }
}

/// Index sets used for the mean and second-moment estimates of each sample.
///
/// Without sample splitting both roles use the full sample. With splitting,
/// the last `s` points of each sample estimate the second moment and the
/// remaining points estimate the mean.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Design {
    pub mean_x: Vec<usize>,
    pub cov_x: Vec<usize>,
    pub mean_y: Vec<usize>,
    pub cov_y: Vec<usize>,
}

impl Design {
    pub fn full(p: &Partition) -> Self {
        Design {
            mean_x: p.x.clone(),
            cov_x: p.x.clone(),
            mean_y: p.y.clone(),
            cov_y: p.y.clone(),
        }
    }

    pub fn split(p: &Partition, s: usize) -> Result<Self> {
        let (n, m) = (p.x.len(), p.y.len());
        if s == 0 || s >= n.min(m) {
            return Err(invalid(
                "split",
                alloc::format!("split size must satisfy 1 <= s < min(n, m) = {}, got {s}", n.min(m)),
            ));
        }
        Ok(Design {
            mean_x: p.x[..n - s].to_vec(),
            cov_x: p.x[n - s..].to_vec(),
            mean_y: p.y[..m - s].to_vec(),
            cov_y: p.y[m - s..].to_vec(),
        })
    }

    /// `w = 1_{mean_y}/|mean_y| − 1_{mean_x}/|mean_x|`, so that `m_y − m_x = K w`.
    pub fn mean_difference_weights(&self, total: usize) -> Vec<f64> {
        let mut w = vec![0.0; total];
        let wx = 1.0 / self.mean_x.len() as f64;
        let wy = 1.0 / self.mean_y.len() as f64;
        for &i in &self.mean_x {
            w[i] -= wx;
        }
        for &j in &self.mean_y {
            w[j] += wy;
        }
        w
    }
}

/// Mean embeddings and second-moment (Gram) matrices of the two samples in
/// pooled coordinates.
#[derive(Debug, Clone)]
pub struct PooledEmbedding {
    kernel: DMatrix<f64>,
    design: Design,
    pub mean_x: DVector<f64>,
    pub mean_y: DVector<f64>,
    pub second_x: DMatrix<f64>,
    pub second_y: DMatrix<f64>,
}

impl PooledEmbedding {
    pub fn kernel(&self) -> &DMatrix<f64> {
        &self.kernel
    }

    pub fn design(&self) -> &Design {
        &self.design
    }

    /// Pooled size `N`.
    pub fn total(&self) -> usize {
        self.kernel.nrows()
    }

    /// Number of points behind the first-sample second moment.
    pub fn n(&self) -> usize {
        self.design.cov_x.len()
    }

    /// Number of points behind the second-sample second moment.
    pub fn m(&self) -> usize {
        self.design.cov_y.len()
    }
}

/// Centered covariance matrices and their pooled average.
#[derive(Debug, Clone)]
pub struct CenteredEmbedding {
    pub sigma_x: DMatrix<f64>,
    pub sigma_y: DMatrix<f64>,
    pub sigma_pooled: DMatrix<f64>,
}

fn column_mean(kernel: &DMatrix<f64>, cols: &[usize]) -> DVector<f64> {
    let mut out = DVector::zeros(kernel.nrows());
    for &c in cols {
        out += kernel.column(c);
    }
    out / cols.len() as f64
}

fn second_moment(kernel: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    let g = kernel.select_columns(cols);
    let mut s = &g * g.transpose() / cols.len() as f64;
    crate::linalg::symmetrize(&mut s);
    s
}

fn check_pooled(k: &KernelMatrix, total: usize) -> Result<()> {
    if !k.values().is_square() || !k.same_points() {
        return Err(invalid("kernel matrix", "pooled embedding needs a square same-point kernel matrix"));
    }
    if k.nrows() != total {
        return Err(Error::DimensionMismatch {
            expected: total,
            found: k.nrows(),
        });
    }
    Ok(())
}

fn embed(k: &KernelMatrix, design: Design) -> PooledEmbedding {
    let kernel = k.values().clone();
    PooledEmbedding {
        mean_x: column_mean(&kernel, &design.mean_x),
        mean_y: column_mean(&kernel, &design.mean_y),
        second_x: second_moment(&kernel, &design.cov_x),
        second_y: second_moment(&kernel, &design.cov_y),
        kernel,
        design,
    }
}

/// Full-sample embedding: both means and both second moments use every point.
pub fn build_embedding(k: &KernelMatrix, partition: &Partition) -> Result<PooledEmbedding> {
    check_pooled(k, partition.total())?;
    Ok(embed(k, Design::full(partition)))
}

/// Sample-split embedding: the last `s` points of each sample estimate the
/// second moment, the others estimate the mean.
pub fn build_split_embedding(k: &KernelMatrix, partition: &Partition, s: usize) -> Result<PooledEmbedding> {
    check_pooled(k, partition.total())?;
    Ok(embed(k, Design::split(partition, s)?))
}

/// `Σ_x = S_x − μ_x μ_xᵀ`, `Σ_y` likewise, and `Σ̄ = (Σ_x + Σ_y) / 2`.
///
/// `μ_x` is the mean of the points that estimate `S_x`, so each `Σ` is a
/// proper covariance even under sample splitting. Without splitting it is
/// the mean embedding `m_x`.
pub fn center(e: &PooledEmbedding) -> CenteredEmbedding {
    let mu_x = column_mean(&e.kernel, &e.design.cov_x);
    let mu_y = column_mean(&e.kernel, &e.design.cov_y);
    let sigma_x = &e.second_x - &mu_x * mu_x.transpose();
    let sigma_y = &e.second_y - &mu_y * mu_y.transpose();
    let sigma_pooled = (&sigma_x + &sigma_y) * 0.5;
    CenteredEmbedding {
        sigma_x,
        sigma_y,
        sigma_pooled,
    }
}
