//! Seeded generators for the eight benchmark models.
//!
//! Each model pairs a reference distribution `P` with a perturbed `Q`. The
//! `P` side is the same generator with the perturbation parameter set to its
//! null value, so a `Q`-side spec whose perturbation is null reproduces the
//! `P` side draw for draw under a shared seed.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::error::{invalid, Result};
use crate::kernels::KernelFamily;
use crate::sample::Sample;

/// Which distribution of a model pair to draw from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Side {
    P,
    Q,
}

/// Model parameters. `support` is the number of perturbed leading coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
#[cfg_attr(feature = "serde", serde(tag = "model"))]
pub enum Model {
    /// `N(0, I)` vs `N(m_{Δ,P}, I)`.
    GaussianMeanShift { delta: f64, support: usize },
    /// Product `Laplace(0, 1)` vs `Laplace(m_j, 1)`.
    LaplaceMeanShift { delta: f64, support: usize },
    /// `N(0, I)` vs `½N(−m_{Δ,P}, I) + ½N(m_{Δ,P}, I)`.
    GaussianMixture { delta: f64, support: usize },
    /// `N(0, I)` vs `N(0, diag(λ, …, λ, 1, …, 1))`.
    SpikedVariance { lambda: f64, support: usize },
    /// `N(0, Σ_α)` vs `N(0, Σ_{α+ε})`, `Σ_α[i, j] = (1 + |i − j|)^{−α}`.
    PowerLawCorrelation { alpha: f64, epsilon: f64 },
    /// `N(0, Σ_α)` vs `N(0, Σ_{α+ε})`, `Σ_α = (1 − α)I + α 11ᵀ`.
    Equicorrelation { alpha: f64, epsilon: f64 },
    /// `Unif([0, 1]^d)` vs `Unif([0, 1 − ε]^P × [0, 1]^{d−P})`.
    ThinHypercube { epsilon: f64, support: usize },
    /// Uniform on spheres of radius 1 vs `1 + ε`.
    ConcentricSpheres { epsilon: f64 },
}

impl Model {
    /// Model number, 1 through 8.
    pub fn id(&self) -> u8 {
        match self {
            Model::GaussianMeanShift { .. } => 1,
            Model::LaplaceMeanShift { .. } => 2,
            Model::GaussianMixture { .. } => 3,
            Model::SpikedVariance { .. } => 4,
            Model::PowerLawCorrelation { .. } => 5,
            Model::Equicorrelation { .. } => 6,
            Model::ThinHypercube { .. } => 7,
            Model::ConcentricSpheres { .. } => 8,
        }
    }

    /// The same model with its perturbation switched off (the `P` side).
    pub fn null(&self) -> Model {
        match *self {
            Model::GaussianMeanShift { support, .. } => Model::GaussianMeanShift { delta: 0.0, support },
            Model::LaplaceMeanShift { support, .. } => Model::LaplaceMeanShift { delta: 0.0, support },
            Model::GaussianMixture { support, .. } => Model::GaussianMixture { delta: 0.0, support },
            Model::SpikedVariance { support, .. } => Model::SpikedVariance { lambda: 1.0, support },
            Model::PowerLawCorrelation { alpha, .. } => Model::PowerLawCorrelation { alpha, epsilon: 0.0 },
            Model::Equicorrelation { alpha, .. } => Model::Equicorrelation { alpha, epsilon: 0.0 },
            Model::ThinHypercube { support, .. } => Model::ThinHypercube { epsilon: 0.0, support },
            Model::ConcentricSpheres { .. } => Model::ConcentricSpheres { epsilon: 0.0 },
        }
    }
}

/// A model, an ambient dimension and a side.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ModelSpec {
    pub model: Model,
    pub dim: usize,
    pub side: Side,
}

impl ModelSpec {
    pub fn new(model: Model, dim: usize, side: Side) -> Result<Self> {
        let spec = ModelSpec { model, dim, side };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_side(self, side: Side) -> Self {
        ModelSpec { side, ..self }
    }

    /// Parameters actually used for drawing: the null model on the `P` side.
    pub fn effective_model(&self) -> Model {
        match self.side {
            Side::P => self.model.null(),
            Side::Q => self.model,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim;
        if d == 0 {
            return Err(invalid("dim", "dimension must be at least one"));
        }
        let finite = |name: &'static str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(invalid(name, "must be finite"))
            }
        };
        let support_ok = |p: usize| {
            if p <= d {
                Ok(())
            } else {
                Err(invalid("support", alloc::format!("P = {p} exceeds dimension {d}")))
            }
        };
        match self.model {
            Model::GaussianMeanShift { delta, support } | Model::LaplaceMeanShift { delta, support } | Model::GaussianMixture { delta, support } => {
                finite("delta", delta)?;
                support_ok(support)
            }
            Model::SpikedVariance { lambda, support } => {
                if !(lambda > 0.0 && lambda.is_finite()) {
                    return Err(invalid("lambda", "variance must be positive"));
                }
                support_ok(support)
            }
            Model::PowerLawCorrelation { alpha, epsilon } => {
                finite("alpha", alpha)?;
                finite("epsilon", epsilon)?;
                if alpha < 0.0 || alpha + epsilon < 0.0 {
                    return Err(invalid("alpha", "power-law exponents α and α + ε must be nonnegative"));
                }
                Ok(())
            }
            Model::Equicorrelation { alpha, epsilon } => {
                let lower = if d > 1 { -1.0 / (d as f64 - 1.0) } else { f64::NEG_INFINITY };
                for (name, v) in [("alpha", alpha), ("epsilon", alpha + epsilon)] {
                    if !(v > lower && v < 1.0) {
                        return Err(invalid(name, alloc::format!("correlation {v} must lie in (−1/(d−1), 1)")));
                    }
                }
                Ok(())
            }
            Model::ThinHypercube { epsilon, support } => {
                if !(epsilon > 0.0 && epsilon < 1.0) {
                    return Err(invalid("epsilon", "must lie in (0, 1)"));
                }
                support_ok(support)
            }
            Model::ConcentricSpheres { epsilon } => {
                if !(epsilon > -1.0 && epsilon.is_finite()) {
                    return Err(invalid("epsilon", "must exceed −1"));
                }
                Ok(())
            }
        }
    }
}

enum Draw {
    Shift { mean: Vec<f64>, laplace: bool, mixture: bool },
    Scale { std: Vec<f64> },
    Root { root: DMatrix<f64> },
    Equi { diag: f64, ones: f64 },
    Cube { upper: Vec<f64> },
    Sphere { radius: f64 },
}

/// A validated generator with its covariance root precomputed.
pub struct ModelSampler {
    spec: ModelSpec,
    draw: Draw,
}

fn leading(d: usize, p: usize, inside: f64, outside: f64) -> Vec<f64> {
    (0..d).map(|j| if j < p { inside } else { outside }).collect()
}

/// Symmetric square root of the power-law covariance, eigenvalues clipped at `1e-10`.
fn power_law_root(d: usize, alpha: f64) -> DMatrix<f64> {
    let sigma = DMatrix::from_fn(d, d, |i, j| libm::pow(1.0 + i.abs_diff(j) as f64, -alpha));
    let eig = sigma.symmetric_eigen();
    let roots = eig.eigenvalues.map(|v| libm::sqrt(v.max(1e-10)));
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

impl ModelSampler {
    pub fn new(spec: ModelSpec) -> Result<Self> {
        spec.validate()?;
        let d = spec.dim;
        let draw = match spec.effective_model() {
            Model::GaussianMeanShift { delta, support } => Draw::Shift { mean: leading(d, support, delta, 0.0), laplace: false, mixture: false },
            Model::LaplaceMeanShift { delta, support } => Draw::Shift { mean: leading(d, support, delta, 0.0), laplace: true, mixture: false },
            Model::GaussianMixture { delta, support } => Draw::Shift { mean: leading(d, support, delta, 0.0), laplace: false, mixture: true },
            Model::SpikedVariance { lambda, support } => Draw::Scale { std: leading(d, support, libm::sqrt(lambda), 1.0) },
            Model::PowerLawCorrelation { alpha, epsilon } => Draw::Root { root: power_law_root(d, alpha + epsilon) },
            Model::Equicorrelation { alpha, epsilon } => {
                // Σ^{1/2} = sqrt(1 − ρ) I + c 11ᵀ with sqrt(1 − ρ) + c d = sqrt(1 − ρ + dρ).
                let rho = alpha + epsilon;
                let diag = libm::sqrt(1.0 - rho);
                let ones = (libm::sqrt(1.0 - rho + d as f64 * rho) - diag) / d as f64;
                Draw::Equi { diag, ones }
            }
            Model::ThinHypercube { epsilon, support } => Draw::Cube { upper: leading(d, support, 1.0 - epsilon, 1.0) },
            Model::ConcentricSpheres { epsilon } => Draw::Sphere { radius: 1.0 + epsilon },
        };
        Ok(ModelSampler { spec, draw })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// `n` i.i.d. rows, deterministic in `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Sample> {
        if n == 0 {
            return Err(invalid("n", "sample size must be at least one"));
        }
        let d = self.spec.dim;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = Vec::with_capacity(n * d);
        let mut z = vec![0.0; d];
        for _ in 0..n {
            match &self.draw {
                Draw::Shift { mean, laplace, mixture } => {
                    let sign = if *mixture && rng.random::<bool>() { -1.0 } else { 1.0 };
                    for &mu in mean {
                        let noise = if *laplace {
                            let a: f64 = Exp1.sample(&mut rng);
                            let b: f64 = Exp1.sample(&mut rng);
                            a - b
                        } else {
                            StandardNormal.sample(&mut rng)
                        };
                        data.push(sign * mu + noise);
                    }
                }
                Draw::Scale { std } => {
                    for &s in std {
                        let g: f64 = StandardNormal.sample(&mut rng);
                        data.push(s * g);
                    }
                }
                Draw::Root { root } => {
                    let g = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
                    data.extend((root * g).iter());
                }
                Draw::Equi { diag, ones } => {
                    for v in z.iter_mut() {
                        *v = StandardNormal.sample(&mut rng);
                    }
                    let total: f64 = z.iter().sum();
                    data.extend(z.iter().map(|v| diag * v + ones * total));
                }
                Draw::Cube { upper } => {
                    for &u in upper {
                        data.push(u * rng.random::<f64>());
                    }
                }
                Draw::Sphere { radius } => {
                    let mut norm = 0.0;
                    while norm == 0.0 {
                        for v in z.iter_mut() {
                            *v = StandardNormal.sample(&mut rng);
                        }
                        norm = libm::sqrt(z.iter().map(|v| v * v).sum());
                    }
                    data.extend(z.iter().map(|v| radius * v / norm));
                }
            }
        }
        Sample::new(data, n, d)
    }
}

/// `n` rows from `spec`, deterministic in `seed`.
pub fn sample(spec: &ModelSpec, n: usize, seed: u64) -> Result<Sample> {
    ModelSampler::new(*spec)?.sample(n, seed)
}

/// A benchmark configuration: both sides, sample sizes and kernel family.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct Scenario {
    pub p: ModelSpec,
    pub q: ModelSpec,
    pub n: usize,
    pub m: usize,
    pub kernel: KernelFamily,
}

impl Scenario {
    pub fn model(&self) -> Model {
        self.q.model
    }

    /// Same parameters in dimension `dim`.
    pub fn with_dim(self, dim: usize) -> Result<Self> {
        Ok(Scenario {
            p: ModelSpec::new(self.p.model, dim, Side::P)?,
            q: ModelSpec::new(self.q.model, dim, Side::Q)?,
            ..self
        })
    }

    pub fn with_model(self, model: Model) -> Result<Self> {
        Ok(Scenario {
            p: ModelSpec::new(model, self.p.dim, Side::P)?,
            q: ModelSpec::new(model, self.q.dim, Side::Q)?,
            ..self
        })
    }

    /// Both sides drawn from `P`.
    pub fn null(self) -> Self {
        Scenario {
            q: self.p,
            ..self
        }
    }
}

/// Default ε for the correlation models, whose figures sweep ε.
pub const DEFAULT_CORRELATION_EPSILON: f64 = 0.1;

/// Default ambient dimension for models whose figures sweep dimension.
pub const DEFAULT_DIM: usize = 50;

/// Benchmark parameters for model `id` in 1..=8, with `n = m = 100`.
///
/// Models 1–4 use the gaussian kernel and 5–8 the laplacian kernel. Models
/// 5 and 6 use `d = 500`; the others default to [`DEFAULT_DIM`] (see
/// [`Scenario::with_dim`]).
pub fn paper_scenario(id: u8) -> Result<Scenario> {
    let (model, dim) = match id {
        1 => (Model::GaussianMeanShift { delta: 1.0, support: 2 }, DEFAULT_DIM),
        2 => (Model::LaplaceMeanShift { delta: 1.0, support: 4 }, DEFAULT_DIM),
        3 => (Model::GaussianMixture { delta: 4.0, support: 1 }, DEFAULT_DIM),
        4 => (Model::SpikedVariance { lambda: 3.0, support: 5 }, DEFAULT_DIM),
        5 => (Model::PowerLawCorrelation { alpha: 0.5, epsilon: DEFAULT_CORRELATION_EPSILON }, 500),
        6 => (Model::Equicorrelation { alpha: 0.5, epsilon: DEFAULT_CORRELATION_EPSILON }, 500),
        7 => (Model::ThinHypercube { epsilon: 0.02, support: 30 }, DEFAULT_DIM),
        8 => (Model::ConcentricSpheres { epsilon: 0.02 }, DEFAULT_DIM),
        other => return Err(invalid("model", alloc::format!("unknown model id {other}; expected 1..=8"))),
    };
    let kernel = if id <= 4 { KernelFamily::Gaussian } else { KernelFamily::Laplacian };
    Ok(Scenario {
        p: ModelSpec::new(model, dim, Side::P)?,
        q: ModelSpec::new(model, dim, Side::Q)?,
        n: 100,
        m: 100,
        kernel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn column_stats(s: &Sample, j: usize) -> (f64, f64) {
        let n = s.len() as f64;
        let mean = s.rows().map(|r| r[j]).sum::<f64>() / n;
        let var = s.rows().map(|r| (r[j] - mean) * (r[j] - mean)).sum::<f64>() / (n - 1.0);
        (mean, var)
    }

    #[test]
    fn gaussian_mean_shift_q_side() {
        let spec = ModelSpec::new(Model::GaussianMeanShift { delta: 1.0, support: 2 }, 3, Side::Q).unwrap();
        let s = sample(&spec, 20_000, 1).unwrap();
        assert_eq!(s.dim(), 3);
        let expected = [1.0, 1.0, 0.0];
        for (j, &mu) in expected.iter().enumerate() {
            let (mean, var) = column_stats(&s, j);
            assert!((mean - mu).abs() < 0.04, "coordinate {j}: {mean}");
            assert!((var - 1.0).abs() < 0.05, "coordinate {j}: {var}");
        }
    }

    #[test]
    fn sphere_radius_is_exact() {
        let spec = ModelSpec::new(Model::ConcentricSpheres { epsilon: 0.02 }, 7, Side::Q).unwrap();
        let s = sample(&spec, 200, 3).unwrap();
        for r in s.rows() {
            let norm: f64 = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert_relative_eq!(norm, 1.02, epsilon = 1e-12);
        }
    }

    #[test]
    fn thin_hypercube_support() {
        let spec = ModelSpec::new(Model::ThinHypercube { epsilon: 0.02, support: 30 }, 50, Side::Q).unwrap();
        let s = sample(&spec, 500, 4).unwrap();
        for r in s.rows() {
            assert!(r[..30].iter().all(|&v| (0.0..=0.98).contains(&v)));
            assert!(r[30..].iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn null_q_side_matches_p_side() {
        let models = [
            Model::GaussianMeanShift { delta: 0.0, support: 2 },
            Model::LaplaceMeanShift { delta: 0.0, support: 2 },
            Model::GaussianMixture { delta: 0.0, support: 1 },
            Model::SpikedVariance { lambda: 1.0, support: 3 },
            Model::PowerLawCorrelation { alpha: 0.5, epsilon: 0.0 },
            Model::Equicorrelation { alpha: 0.5, epsilon: 0.0 },
            Model::ThinHypercube { epsilon: 0.3, support: 2 },
            Model::ConcentricSpheres { epsilon: 0.0 },
        ];
        for model in models {
            let q = ModelSpec::new(model, 6, Side::Q).unwrap();
            let p = q.with_side(Side::P);
            let a = sample(&p, 17, 99).unwrap();
            let b = sample(&q.with_side(Side::Q), 17, 99).unwrap();
            if model.id() == 7 {
                // ε = 0 is outside the model's range, so compare against the P side directly.
                assert_eq!(sample(&p, 17, 99).unwrap(), a);
            } else {
                assert_eq!(a, b, "model {}", model.id());
            }
        }
    }

    #[test]
    fn same_seed_same_output_different_seed_different_output() {
        let spec = paper_scenario(3).unwrap().q;
        assert_eq!(sample(&spec, 5, 1).unwrap(), sample(&spec, 5, 1).unwrap());
        assert_ne!(sample(&spec, 5, 1).unwrap(), sample(&spec, 5, 2).unwrap());
    }

    #[test]
    fn spiked_variance_moments() {
        let spec = ModelSpec::new(Model::SpikedVariance { lambda: 3.0, support: 5 }, 8, Side::Q).unwrap();
        let s = sample(&spec, 100_000, 5).unwrap();
        for j in 0..8 {
            let (_, var) = column_stats(&s, j);
            let target = if j < 5 { 3.0 } else { 1.0 };
            assert!((var / target - 1.0).abs() < 0.05, "coordinate {j}: {var}");
        }
    }

    #[test]
    fn equicorrelation_moments() {
        let spec = ModelSpec::new(Model::Equicorrelation { alpha: 0.5, epsilon: 0.1 }, 4, Side::Q).unwrap();
        let s = sample(&spec, 100_000, 6).unwrap();
        let n = s.len() as f64;
        let (m0, v0) = column_stats(&s, 0);
        let (m3, v3) = column_stats(&s, 3);
        let cov = s.rows().map(|r| (r[0] - m0) * (r[3] - m3)).sum::<f64>() / (n - 1.0);
        let corr = cov / (v0 * v3).sqrt();
        assert!((corr - 0.6).abs() < 0.01, "{corr}");
        assert!((v0 - 1.0).abs() < 0.03);
        // P side uses α alone.
        let p = sample(&spec.with_side(Side::P), 100_000, 6).unwrap();
        let (a0, w0) = column_stats(&p, 0);
        let (a1, w1) = column_stats(&p, 1);
        let cov = p.rows().map(|r| (r[0] - a0) * (r[1] - a1)).sum::<f64>() / (n - 1.0);
        assert!((cov / (w0 * w1).sqrt() - 0.5).abs() < 0.01);
    }

    #[test]
    fn power_law_covariance() {
        let spec = ModelSpec::new(Model::PowerLawCorrelation { alpha: 0.5, epsilon: 0.0 }, 5, Side::Q).unwrap();
        let s = sample(&spec, 100_000, 7).unwrap();
        let n = s.len() as f64;
        let (m0, v0) = column_stats(&s, 0);
        let (m2, _) = column_stats(&s, 2);
        let cov = s.rows().map(|r| (r[0] - m0) * (r[2] - m2)).sum::<f64>() / (n - 1.0);
        assert!((v0 - 1.0).abs() < 0.03);
        assert!((cov - 3f64.powf(-0.5)).abs() < 0.02, "{cov}");
    }

    #[test]
    fn mixture_is_centered_and_spread() {
        let spec = ModelSpec::new(Model::GaussianMixture { delta: 4.0, support: 1 }, 2, Side::Q).unwrap();
        let s = sample(&spec, 50_000, 8).unwrap();
        let (mean, var) = column_stats(&s, 0);
        // Mean 0 within Monte Carlo error (sd ≈ sqrt(17 / 50000) ≈ 0.018).
        assert!(mean.abs() < 0.06, "{mean}");
        assert!((var - 17.0).abs() < 0.5, "{var}");
    }

    #[test]
    fn laplace_variance_is_two() {
        let spec = ModelSpec::new(Model::LaplaceMeanShift { delta: 1.0, support: 1 }, 2, Side::Q).unwrap();
        let s = sample(&spec, 100_000, 9).unwrap();
        let (mean, var) = column_stats(&s, 0);
        assert!((mean - 1.0).abs() < 0.03);
        assert!((var - 2.0).abs() < 0.06);
    }

    #[test]
    fn scenarios_follow_captions() {
        let s1 = paper_scenario(1).unwrap();
        assert_eq!(s1.q.model, Model::GaussianMeanShift { delta: 1.0, support: 2 });
        assert_eq!((s1.n, s1.m, s1.kernel), (100, 100, KernelFamily::Gaussian));
        let s4 = paper_scenario(4).unwrap();
        assert_eq!(s4.q.model, Model::SpikedVariance { lambda: 3.0, support: 5 });
        assert_eq!(s4.kernel, KernelFamily::Gaussian);
        let s8 = paper_scenario(8).unwrap();
        assert_eq!(s8.q.model, Model::ConcentricSpheres { epsilon: 0.02 });
        assert_eq!((s8.n, s8.m, s8.kernel), (100, 100, KernelFamily::Laplacian));
        assert_eq!(paper_scenario(6).unwrap().q.dim, 500);
        assert!(paper_scenario(0).is_err());
        assert!(paper_scenario(9).is_err());
    }

    #[test]
    fn invalid_parameters() {
        assert!(ModelSpec::new(Model::GaussianMeanShift { delta: 1.0, support: 4 }, 3, Side::Q).is_err());
        assert!(ModelSpec::new(Model::Equicorrelation { alpha: 0.5, epsilon: 0.5 }, 10, Side::Q).is_err());
        assert!(ModelSpec::new(Model::Equicorrelation { alpha: -0.2, epsilon: 0.0 }, 10, Side::Q).is_err());
        assert!(ModelSpec::new(Model::ThinHypercube { epsilon: 1.0, support: 1 }, 3, Side::Q).is_err());
        assert!(ModelSpec::new(Model::ConcentricSpheres { epsilon: -1.0 }, 3, Side::Q).is_err());
        assert!(ModelSpec::new(Model::SpikedVariance { lambda: 0.0, support: 1 }, 3, Side::Q).is_err());
        let ok = ModelSpec::new(Model::GaussianMeanShift { delta: 1.0, support: 1 }, 3, Side::Q).unwrap();
        assert!(sample(&ok, 0, 1).is_err());
    }
}
