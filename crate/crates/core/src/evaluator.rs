//! Per-bandwidth statistic evaluation for arbitrary partitions of the pooled
//! sample, used inside the permutation loop.
//!
//! The pooled kernel matrix `K` and its square `K²` are computed once per
//! bandwidth. For a partition, write `G_x = K[:, X]` so that
//! `S_x = G_x G_xᵀ / n` and `G_xᵀ G_x = K²[X, X]`. With the eigenpairs
//! `(λ_r, v_r)` of `K²[X, X]` and the eigenvalues `μ_j` of `K²[Y, Y]`,
//! Woodbury and Sylvester's determinant identity give, for every ridge `γ`,
//!
//! ```text
//! (S_x + γI)⁻¹      = (I − G_x (nγ I + K²[X, X])⁻¹ G_xᵀ) / γ
//! tr((S_x+γ)⁻¹ S_y) = (tr S_y − Σ_r ‖K²[Y, X] v_r‖² / (m (nγ + λ_r))) / γ
//! log det(S_x + γI) = N ln γ + Σ_r ln(1 + λ_r / (nγ))
//! ```
//!
//! so the whole ridge grid costs one `n × n` and one `m × m`
//! eigendecomposition per partition instead of `N × N` work per ridge.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::embedding::Design;
use crate::error::{invalid, Error, Result};
use crate::kernels::{gram_matrix, KernelMatrix, KernelSpec};
use crate::linalg::{psd_eigen, psd_eigenvalues, submatrix};
use crate::sample::Sample;
use crate::statistics::StatisticKind;

/// Which statistics to compute and over which ridges, with a fixed output layout.
#[derive(Debug, Clone, PartialEq)]
pub struct StatisticLayout {
    kinds: Vec<StatisticKind>,
    ridges: Vec<f64>,
    offsets: Vec<usize>,
    len: usize,
}

impl StatisticLayout {
    pub fn new(kinds: &[StatisticKind], ridges: &[f64]) -> Result<Self> {
        if kinds.is_empty() {
            return Err(Error::Empty("statistic list"));
        }
        let mut unique = kinds.to_vec();
        unique.sort();
        unique.dedup();
        if unique.len() != kinds.len() {
            return Err(invalid("statistics", "duplicate statistic"));
        }
        if kinds.iter().any(|k| k.uses_ridge()) && ridges.is_empty() {
            return Err(Error::Empty("ridge grid"));
        }
        if let Some(bad) = ridges.iter().find(|g| !(**g > 0.0 && g.is_finite())) {
            return Err(invalid("ridges", alloc::format!("ridge values must be positive, got {bad}")));
        }
        let mut offsets = Vec::with_capacity(kinds.len());
        let mut len = 0;
        for k in kinds {
            offsets.push(len);
            len += if k.uses_ridge() { ridges.len() } else { 1 };
        }
        Ok(StatisticLayout {
            kinds: kinds.to_vec(),
            ridges: ridges.to_vec(),
            offsets,
            len,
        })
    }

    pub fn kinds(&self) -> &[StatisticKind] {
        &self.kinds
    }

    pub fn ridges(&self) -> &[f64] {
        &self.ridges
    }

    /// Total number of values per evaluation.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Ridge values attached to a statistic's cells; `None` for ridge-free statistics.
    pub fn cells(&self, kind_index: usize) -> Vec<Option<f64>> {
        if self.kinds[kind_index].uses_ridge() {
            self.ridges.iter().copied().map(Some).collect()
        } else {
            vec![None]
        }
    }

    /// Slice of `values` belonging to the statistic at `kind_index`.
    pub fn slice<'a>(&self, values: &'a [f64], kind_index: usize) -> &'a [f64] {
        let start = self.offsets[kind_index];
        let end = self.offsets.get(kind_index + 1).copied().unwrap_or(self.len);
        &values[start..end]
    }
}

/// Quantities of one partition from which KLR/KLR0 follow in `O(n)` per ridge.
#[derive(Debug, Clone)]
pub struct LikelihoodParts {
    lambda: Vec<f64>,
    mu: Vec<f64>,
    cross: Vec<f64>,
    mean_proj: Vec<f64>,
    mean_sq: f64,
    trace_y: f64,
    nx: f64,
    ny: f64,
    eigvecs: DMatrix<f64>,
}

impl LikelihoodParts {
    /// `Σ (a_i − ln a_i − 1)` over the spectrum of the whitened ratio.
    pub fn log_det_term(&self, gamma: f64) -> f64 {
        let a = self.nx * gamma;
        let mut cross = 0.0;
        let mut ratio = 0.0;
        let mut log_x = 0.0;
        for (&l, &q) in self.lambda.iter().zip(&self.cross) {
            cross += q / (a + l);
            ratio += l / (a + l);
            log_x += libm::log1p(l / a);
        }
        let b = self.ny * gamma;
        let log_y: f64 = self.mu.iter().map(|&u| libm::log1p(u / b)).sum();
        let trace = (self.trace_y - cross / self.ny) / gamma;
        (trace - ratio + log_x - log_y).max(0.0)
    }

    /// `(m_y − m_x)ᵀ (S_x + γI)⁻¹ (m_y − m_x)`.
    pub fn mahalanobis(&self, gamma: f64) -> f64 {
        let a = self.nx * gamma;
        let proj: f64 = self.lambda.iter().zip(&self.mean_proj).map(|(&l, &c)| c / (a + l)).sum();
        ((self.mean_sq - proj) / gamma).max(0.0)
    }
}

/// Kernel matrix of the pooled sample at one bandwidth, with its square.
#[derive(Debug, Clone)]
pub struct BandwidthEvaluator {
    kernel: DMatrix<f64>,
    kernel_sq: DMatrix<f64>,
}

impl BandwidthEvaluator {
    pub fn new(spec: &KernelSpec, pooled: &Sample) -> Result<Self> {
        Self::from_kernel(gram_matrix(spec, pooled)?)
    }

    pub fn from_kernel(k: KernelMatrix) -> Result<Self> {
        if !k.same_points() {
            return Err(invalid("kernel matrix", "evaluator needs the pooled same-point kernel matrix"));
        }
        let kernel = k.into_values();
        let mut kernel_sq = &kernel * &kernel;
        crate::linalg::symmetrize(&mut kernel_sq);
        Ok(BandwidthEvaluator { kernel, kernel_sq })
    }

    pub fn kernel(&self) -> &DMatrix<f64> {
        &self.kernel
    }

    pub fn total(&self) -> usize {
        self.kernel.nrows()
    }

    fn check_design(&self, design: &Design) -> Result<()> {
        let total = self.total();
        let all = [&design.mean_x, &design.cov_x, &design.mean_y, &design.cov_y];
        if all.iter().any(|s| s.is_empty()) {
            return Err(Error::Empty("design index set"));
        }
        if all.iter().flat_map(|s| s.iter()).any(|&i| i >= total) {
            return Err(invalid("design", "index outside the pooled sample"));
        }
        Ok(())
    }

    /// Spectral quantities of a partition for the likelihood-ratio statistics.
    pub fn likelihood_parts(&self, design: &Design) -> Result<LikelihoodParts> {
        self.check_design(design)?;
        let k2 = &self.kernel_sq;
        let (cx, cy) = (&design.cov_x, &design.cov_y);
        let (lambda, eigvecs) = psd_eigen(submatrix(k2, cx, cx));
        let mu = psd_eigenvalues(submatrix(k2, cy, cy));
        let z = submatrix(k2, cy, cx) * &eigvecs;
        let cross = z.column_iter().map(|c| c.norm_squared()).collect();
        let trace_y = cy.iter().map(|&j| k2[(j, j)]).sum::<f64>() / cy.len() as f64;

        let w = design.mean_difference_weights(self.total());
        let support: Vec<usize> = (0..w.len()).filter(|&i| w[i] != 0.0).collect();
        let mut mean_sq = 0.0;
        for &a in &support {
            let row: f64 = support.iter().map(|&b| k2[(a, b)] * w[b]).sum();
            mean_sq += w[a] * row;
        }
        let g = DVector::from_iterator(cx.len(), cx.iter().map(|&i| support.iter().map(|&b| k2[(i, b)] * w[b]).sum::<f64>()));
        let mean_proj = (eigvecs.transpose() * g).iter().map(|c| c * c).collect();

        Ok(LikelihoodParts {
            lambda: lambda.iter().copied().collect(),
            mu,
            cross,
            mean_proj,
            mean_sq,
            trace_y,
            nx: cx.len() as f64,
            ny: cy.len() as f64,
            eigvecs,
        })
    }

    /// `sqrt(Σ (a_i − 1)²)` for each ridge, through `Q = Fᵀ(S_x + γI)⁻¹F`
    /// with `F = [G_x, G_y]` and weights `J = (−1/n, …, 1/m, …)`:
    /// `Σ (a_i − 1)² = Σ_ab J_a J_b Q_ab²`.
    fn hsr_values(&self, design: &Design, parts: &LikelihoodParts, ridges: &[f64], out: &mut Vec<f64>) {
        let k2 = &self.kernel_sq;
        let cols: Vec<usize> = design.cov_x.iter().chain(&design.cov_y).copied().collect();
        let nx = design.cov_x.len();
        let weights: Vec<f64> = (0..cols.len())
            .map(|a| if a < nx { -1.0 / parts.nx } else { 1.0 / parts.ny })
            .collect();
        let base = submatrix(k2, &cols, &cols);
        let proj = submatrix(k2, &cols, &design.cov_x) * &parts.eigvecs;
        for &gamma in ridges {
            let a = parts.nx * gamma;
            let mut scaled = proj.clone();
            for (r, mut col) in scaled.column_iter_mut().enumerate() {
                col /= a + parts.lambda[r];
            }
            let q = (&base - scaled * proj.transpose()) / gamma;
            let mut acc = 0.0;
            for j in 0..cols.len() {
                for i in 0..cols.len() {
                    let v = q[(i, j)];
                    acc += weights[i] * weights[j] * v * v;
                }
            }
            out.push(libm::sqrt(acc.max(0.0)));
        }
    }

    /// Squared MMD `wᵀ K w` with the design's mean weights.
    pub fn mmd(&self, design: &Design) -> Result<f64> {
        self.check_design(design)?;
        let w = design.mean_difference_weights(self.total());
        let support: Vec<usize> = (0..w.len()).filter(|&i| w[i] != 0.0).collect();
        let mut acc = 0.0;
        for &a in &support {
            let row: f64 = support.iter().map(|&b| self.kernel[(a, b)] * w[b]).sum();
            acc += w[a] * row;
        }
        Ok(acc.max(0.0))
    }

    fn srmmd_values(&self, design: &Design, ridges: &[f64], out: &mut Vec<f64>) {
        let k = &self.kernel;
        let total = self.total();
        let mean_of = |idx: &[usize]| {
            let mut m = DVector::zeros(total);
            for &i in idx {
                m += k.column(i);
            }
            m / idx.len() as f64
        };
        let second_of = |idx: &[usize]| {
            let g = k.select_columns(idx);
            &g * g.transpose() / idx.len() as f64
        };
        let mx = mean_of(&design.mean_x);
        let my = mean_of(&design.mean_y);
        let (cx, cy) = (mean_of(&design.cov_x), mean_of(&design.cov_y));
        let mut pooled = (second_of(&design.cov_x) - &cx * cx.transpose() + second_of(&design.cov_y) - &cy * cy.transpose()) * 0.5;
        crate::linalg::symmetrize(&mut pooled);
        let (values, vectors) = psd_eigen(pooled);
        let proj = vectors.transpose() * (mx - my);
        for &gamma in ridges {
            let v: f64 = proj.iter().zip(values.iter()).map(|(t, e)| t * t / (e + gamma)).sum();
            out.push(v);
        }
    }

    /// Every statistic in `layout` for the partition described by `design`.
    pub fn evaluate(&self, design: &Design, layout: &StatisticLayout) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(layout.len());
        let needs_parts = layout
            .kinds()
            .iter()
            .any(|k| matches!(k, StatisticKind::Klr | StatisticKind::Klr0 | StatisticKind::Hsr));
        let parts = if needs_parts {
            Some(self.likelihood_parts(design)?)
        } else {
            self.check_design(design)?;
            None
        };
        for kind in layout.kinds() {
            match (kind, &parts) {
                (StatisticKind::Klr, Some(p)) => out.extend(layout.ridges().iter().map(|&g| p.mahalanobis(g) + p.log_det_term(g))),
                (StatisticKind::Klr0, Some(p)) => out.extend(layout.ridges().iter().map(|&g| p.log_det_term(g))),
                (StatisticKind::Hsr, Some(p)) => self.hsr_values(design, p, layout.ridges(), &mut out),
                (StatisticKind::Mmd, _) => out.push(self.mmd(design)?),
                (StatisticKind::Srmmd, _) => self.srmmd_values(design, layout.ridges(), &mut out),
                _ => unreachable!("likelihood parts are computed whenever a likelihood statistic is requested"),
            }
        }
        for v in &out {
            if !v.is_finite() {
                return Err(Error::Numerical(alloc::format!("non-finite statistic value {v}")));
            }
        }
        Ok(out)
    }
}
