//! Test statistics on a pooled embedding.
//!
//! The likelihood-ratio statistics share one spectral core: the eigenvalues
//! `a_i` of `A = S_{X,γ}^{-1/2} S_{Y,γ} S_{X,γ}^{-1/2}` together with the
//! whitened mean difference `S_{X,γ}^{-1/2}(m_y − m_x)`, where
//! `S_{·,γ} = S_· + γI`. From these,
//!
//! ```text
//! KLR  = ‖S_{X,γ}^{-1/2}(m_y − m_x)‖² + Σ_i (a_i − ln a_i − 1)
//! KLR0 =                               Σ_i (a_i − ln a_i − 1)
//! HSR  = sqrt(Σ_i (a_i − 1)²)
//! ```
//!
//! The spectral sum equals `−log det₂(I + H)` with `H = A − I`, which is
//! nonnegative. The functions here form every matrix densely and serve as the
//! reference path; [`crate::evaluator`] computes the same quantities in the
//! sample-size coordinates used by the permutation loop.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::embedding::{CenteredEmbedding, Partition, PooledEmbedding};
use crate::error::{invalid, Error, Result};
use crate::kernels::KernelMatrix;
use crate::linalg::{psd_eigen, symmetrize};

/// Eigenvalues of `A` are floored here after the sign check.
pub const EIGEN_FLOOR: f64 = 1e-12;

/// Eigenvalues of `A` below this value signal corrupted input rather than roundoff.
pub const NEGATIVE_EIGEN_LIMIT: f64 = -1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum StatisticKind {
    /// Non-central Gaussian embeddings: Mahalanobis plus log-determinant term.
    #[cfg_attr(feature = "serde", serde(rename = "KLR"))]
    Klr,
    /// Central Gaussian embeddings: log-determinant term only.
    #[cfg_attr(feature = "serde", serde(rename = "KLR0"))]
    Klr0,
    /// Regularized Hilbert–Schmidt discrepancy of the second moments.
    #[cfg_attr(feature = "serde", serde(rename = "HSR"))]
    Hsr,
    /// Biased (V-statistic) squared MMD.
    #[cfg_attr(feature = "serde", serde(rename = "MMD"))]
    Mmd,
    /// MMD whitened by the ridge-regularized pooled centred covariance.
    #[cfg_attr(feature = "serde", serde(rename = "SRMMD"))]
    Srmmd,
}

impl StatisticKind {
    pub const ALL: [StatisticKind; 5] = [
        StatisticKind::Klr,
        StatisticKind::Klr0,
        StatisticKind::Hsr,
        StatisticKind::Mmd,
        StatisticKind::Srmmd,
    ];

    /// Whether the statistic depends on the ridge parameter.
    pub fn uses_ridge(self) -> bool {
        !matches!(self, StatisticKind::Mmd)
    }

    pub fn name(self) -> &'static str {
        match self {
            StatisticKind::Klr => "KLR",
            StatisticKind::Klr0 => "KLR0",
            StatisticKind::Hsr => "HSR",
            StatisticKind::Mmd => "MMD",
            StatisticKind::Srmmd => "SRMMD",
        }
    }
}

impl fmt::Display for StatisticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StatisticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let upper = s.trim().to_ascii_uppercase().replace('-', "");
        StatisticKind::ALL
            .into_iter()
            .find(|k| k.name() == upper)
            .ok_or_else(|| invalid("statistic", alloc::format!("unknown statistic `{}`", s.trim())))
    }
}

/// Spectrum of the whitened second-moment ratio and the whitened mean difference.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCore {
    eigvals: Vec<f64>,
    whitened_mean_diff: DVector<f64>,
    gamma: f64,
}

impl SpectralCore {
    /// Assembles a core from precomputed parts; every eigenvalue must be positive.
    pub fn from_parts(eigvals: Vec<f64>, whitened_mean_diff: DVector<f64>, gamma: f64) -> Result<Self> {
        check_ridge(gamma)?;
        if eigvals.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
            return Err(invalid("eigenvalues", "spectral core eigenvalues must be positive"));
        }
        Ok(SpectralCore {
            eigvals,
            whitened_mean_diff,
            gamma,
        })
    }

    pub fn eigvals(&self) -> &[f64] {
        &self.eigvals
    }

    pub fn whitened_mean_diff(&self) -> &DVector<f64> {
        &self.whitened_mean_diff
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `Σ_i (a_i − ln a_i − 1) = −log det₂(A)`.
    pub fn log_det_term(&self) -> f64 {
        log_det_term(&self.eigvals)
    }

    /// `‖S_{X,γ}^{-1/2}(m_y − m_x)‖²`.
    pub fn mahalanobis(&self) -> f64 {
        self.whitened_mean_diff.norm_squared()
    }
}

/// `Σ_i (a_i − ln a_i − 1)` evaluated as `Σ (h − ln(1 + h))`, `h = a − 1`,
/// which keeps precision near `a = 1`.
pub fn log_det_term(eigvals: &[f64]) -> f64 {
    eigvals
        .iter()
        .map(|&a| {
            let h = a - 1.0;
            h - libm::log1p(h)
        })
        .sum()
}

/// `Σ_i (a_i − 1)² / a_i`, the upper bound on [`log_det_term`].
pub fn log_det_upper_bound(eigvals: &[f64]) -> f64 {
    eigvals.iter().map(|&a| (a - 1.0) * (a - 1.0) / a).sum()
}

fn check_ridge(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(invalid("gamma", alloc::format!("ridge must be positive and finite, got {gamma}")))
    }
}

fn clamp_ratio_spectrum(values: impl Iterator<Item = f64>) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for a in values {
        if a.is_nan() || a < NEGATIVE_EIGEN_LIMIT {
            return Err(Error::Numerical(alloc::format!(
                "whitened second-moment ratio has eigenvalue {a:e}"
            )));
        }
        out.push(a.max(EIGEN_FLOOR));
    }
    Ok(out)
}

/// Dense spectral core: eigendecomposition of `S_x` (floored at zero) gives
/// `S_{X,γ}^{-1/2}`, then `A` is formed, symmetrized and diagonalized.
pub fn spectral_core(e: &PooledEmbedding, gamma: f64) -> Result<SpectralCore> {
    check_ridge(gamma)?;
    let total = e.total();
    let (d, u) = psd_eigen(e.second_x.clone());
    let scale = DMatrix::from_diagonal(&d.map(|v| 1.0 / libm::sqrt(v + gamma)));
    let whiten = &u * scale * u.transpose();
    let sy = &e.second_y + DMatrix::identity(total, total) * gamma;
    let mut a = &whiten * sy * &whiten;
    symmetrize(&mut a);
    let eigvals = clamp_ratio_spectrum(a.symmetric_eigenvalues().iter().copied())?;
    let whitened_mean_diff = whiten * (&e.mean_y - &e.mean_x);
    Ok(SpectralCore {
        eigvals,
        whitened_mean_diff,
        gamma,
    })
}

/// KLR or KLR0 from a spectral core.
pub fn klr_statistic(core: &SpectralCore, variant: StatisticKind) -> Result<f64> {
    let term = core.log_det_term();
    match variant {
        StatisticKind::Klr => Ok(core.mahalanobis() + term),
        StatisticKind::Klr0 => Ok(term),
        other => Err(invalid("variant", alloc::format!("{other} is not a likelihood-ratio statistic"))),
    }
}

/// KLR or KLR0 through a Cholesky factor `S_{X,γ} = L Lᵀ`: the mean term is
/// `‖L⁻¹(m_y − m_x)‖²` and the spectrum is that of `L⁻¹ S_{Y,γ} L⁻ᵀ`, which is
/// similar to `A`.
pub fn klr_statistic_factored(e: &PooledEmbedding, gamma: f64, variant: StatisticKind) -> Result<f64> {
    check_ridge(gamma)?;
    if !matches!(variant, StatisticKind::Klr | StatisticKind::Klr0) {
        return Err(invalid("variant", alloc::format!("{variant} is not a likelihood-ratio statistic")));
    }
    let total = e.total();
    let eye = DMatrix::<f64>::identity(total, total);
    let sx = &e.second_x + &eye * gamma;
    let sy = &e.second_y + &eye * gamma;
    let chol = sx
        .cholesky()
        .ok_or_else(|| Error::Numerical("regularized first-sample second moment is not positive definite".into()))?;
    let l = chol.l();
    let left = l
        .solve_lower_triangular(&sy)
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    let mut c = l
        .solve_lower_triangular(&left.transpose())
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    symmetrize(&mut c);
    let eigvals = clamp_ratio_spectrum(c.symmetric_eigenvalues().iter().copied())?;
    let term = log_det_term(&eigvals);
    if variant == StatisticKind::Klr0 {
        return Ok(term);
    }
    let white = l
        .solve_lower_triangular(&(&e.mean_y - &e.mean_x))
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    Ok(white.norm_squared() + term)
}

/// `‖S_{X,γ}^{-1/2}(S_y − S_x)S_{X,γ}^{-1/2}‖_HS = sqrt(Σ (a_i − 1)²)`.
pub fn hsr_statistic(core: &SpectralCore) -> f64 {
    libm::sqrt(core.eigvals.iter().map(|a| (a - 1.0) * (a - 1.0)).sum())
}

fn block_mean(k: &DMatrix<f64>, rows: &[usize], cols: &[usize], f: impl Fn(f64) -> f64) -> f64 {
    let mut acc = 0.0;
    for &i in rows {
        for &j in cols {
            acc += f(k[(i, j)]);
        }
    }
    acc / (rows.len() * cols.len()) as f64
}

fn check_square(k: &KernelMatrix, p: &Partition) -> Result<()> {
    if k.nrows() != p.total() || k.ncols() != p.total() {
        return Err(Error::DimensionMismatch {
            expected: p.total(),
            found: k.nrows(),
        });
    }
    Ok(())
}

/// Biased squared MMD: `mean(K_xx) + mean(K_yy) − 2·mean(K_xy)`.
pub fn mmd_statistic(k: &KernelMatrix, p: &Partition) -> Result<f64> {
    check_square(k, p)?;
    let v = k.values();
    let id = |x: f64| x;
    let value = block_mean(v, p.x(), p.x(), id) + block_mean(v, p.y(), p.y(), id) - 2.0 * block_mean(v, p.x(), p.y(), id);
    Ok(value.max(0.0))
}

/// Empirical `‖S_{P_n} − S_{Q_m}‖²_HS` as double sums of the squared kernel:
/// `ΣΣ k²(x, x′)/n² + ΣΣ k²(y, y′)/m² − 2 ΣΣ k²(x, y)/(nm)`.
pub fn hs_discrepancy(k: &KernelMatrix, p: &Partition) -> Result<f64> {
    check_square(k, p)?;
    let v = k.values();
    let (n, m) = (p.x().len() as f64, p.y().len() as f64);
    let mut xx = 0.0;
    let mut yy = 0.0;
    let mut xy = 0.0;
    for &i in p.x() {
        for &j in p.x() {
            xx += v[(i, j)] * v[(i, j)];
        }
        for &j in p.y() {
            xy += v[(i, j)] * v[(i, j)];
        }
    }
    for &i in p.y() {
        for &j in p.y() {
            yy += v[(i, j)] * v[(i, j)];
        }
    }
    Ok((xx / (n * n) + yy / (m * m) - 2.0 * xy / (n * m)).max(0.0))
}

/// `(m_x − m_y)ᵀ (Σ̄ + γI)⁻¹ (m_x − m_y)` by a symmetric (Cholesky) solve.
pub fn srmmd_statistic(e: &PooledEmbedding, c: &CenteredEmbedding, gamma: f64) -> Result<f64> {
    check_ridge(gamma)?;
    let total = e.total();
    let reg = &c.sigma_pooled + DMatrix::identity(total, total) * gamma;
    let diff = &e.mean_x - &e.mean_y;
    let chol = reg
        .cholesky()
        .ok_or_else(|| Error::Numerical("regularized pooled covariance is not positive definite".into()))?;
    let solved = chol.solve(&diff);
    Ok(diff.dot(&solved).max(0.0))
}
