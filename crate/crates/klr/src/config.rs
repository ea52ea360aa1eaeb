//! Experiment configuration: a flat TOML file whose keys mirror the
//! command-line flags. Flags win over the file, the file wins over defaults.

use std::path::{Path, PathBuf};

use clap::Args;
use klr_core::kernels::BANDWIDTH_MULTIPLIERS;
use klr_core::procedure::{DEFAULT_ALPHA, DEFAULT_RIDGES};
use klr_core::synthetic::{paper_scenario, Model, Scenario};
use klr_core::{KernelFamily, StatisticKind, TestConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Environment variable holding the default worker count.
pub const THREADS_ENV: &str = "KLR_THREADS";

/// Replications per benchmark cell.
pub const DEFAULT_REPLICATIONS: usize = 250;

/// Every configurable key. Used both as the file schema and as flags.
#[derive(Debug, Clone, Default, PartialEq, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: $KLR_THREADS, else all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Significance level.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Permutations per test (default: enough to reach the corrected level, at least 300).
    #[arg(long)]
    pub permutations: Option<usize>,
    /// Statistics, comma separated: KLR, KLR0, HSR, MMD, SRMMD.
    #[arg(long, value_delimiter = ',')]
    pub stats: Option<Vec<String>>,
    /// Ridge grid, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub ridges: Option<Vec<f64>>,
    /// Multipliers of the median bandwidth, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub bandwidth_multipliers: Option<Vec<f64>>,
    /// Kernel family: gaussian or laplacian.
    #[arg(long)]
    pub kernel: Option<String>,
    /// Points per sample reserved for the second-moment estimate.
    #[arg(long)]
    pub split: Option<usize>,
    /// Replications per benchmark cell.
    #[arg(long)]
    pub replications: Option<usize>,
    /// Synthetic model, 1 to 8.
    #[arg(long)]
    pub model: Option<u8>,
    /// Ambient dimensions, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub dims: Option<Vec<usize>>,
    /// First sample size.
    #[arg(long)]
    pub n: Option<usize>,
    /// Second sample size.
    #[arg(long)]
    pub m: Option<usize>,
    /// Draw both samples from the reference distribution.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub null: Option<bool>,
    /// Mean shift Δ (models 1–3).
    #[arg(long, allow_negative_numbers = true)]
    pub delta: Option<f64>,
    /// Spiked variance λ (model 4).
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Number of perturbed coordinates P (models 1–4, 7).
    #[arg(long)]
    pub support: Option<usize>,
    /// Baseline correlation parameter α (models 5, 6).
    #[arg(long, allow_negative_numbers = true)]
    pub model_alpha: Option<f64>,
    /// Perturbation ε (models 5–8).
    #[arg(long, allow_negative_numbers = true)]
    pub epsilon: Option<f64>,
    /// Report path (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Optional comma-separated table for plotting.
    #[arg(long)]
    pub table: Option<PathBuf>,
}

macro_rules! merge_fields {
    ($dst:ident, $src:ident; $($f:ident),*) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f; } )*
    };
}

impl Settings {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Values set in `flags` replace those in `self`.
    pub fn overridden_by(mut self, flags: Settings) -> Self {
        merge_fields!(self, flags; seed, threads, alpha, permutations, stats, ridges, bandwidth_multipliers,
            kernel, split, replications, model, dims, n, m, null, delta, lambda, support, model_alpha,
            epsilon, out, table);
        self
    }

    /// Loads `config` if given and applies `flags` on top.
    pub fn load(config: Option<&Path>, flags: Settings) -> CliResult<Self> {
        let base = match config {
            Some(p) => Self::from_file(p)?,
            None => Settings::default(),
        };
        Ok(base.overridden_by(flags))
    }

    /// Worker count: flag or file, then the environment, then all cores.
    pub fn resolved_threads(&self) -> CliResult<usize> {
        let threads = match self.threads {
            Some(t) => t,
            None => match std::env::var(THREADS_ENV) {
                Ok(v) => v
                    .trim()
                    .parse()
                    .map_err(|_| CliError::config(format!("{THREADS_ENV}=`{v}` is not a thread count")))?,
                Err(_) => std::thread::available_parallelism().map_or(1, |n| n.get()),
            },
        };
        if threads == 0 {
            return Err(CliError::config("threads must be at least 1"));
        }
        Ok(threads)
    }

    fn kinds(&self) -> CliResult<Vec<StatisticKind>> {
        match &self.stats {
            None => Ok(StatisticKind::ALL.to_vec()),
            Some(list) => list.iter().map(|s| s.parse().map_err(|e: klr_core::Error| CliError::config(e.to_string()))).collect(),
        }
    }

    fn kernel_family(&self) -> CliResult<Option<KernelFamily>> {
        self.kernel
            .as_deref()
            .map(|k| k.parse().map_err(|e: klr_core::Error| CliError::config(e.to_string())))
            .transpose()
    }

    /// Test settings; `kernel` is used when no kernel key is set.
    pub fn test_config(&self, kernel: KernelFamily) -> CliResult<TestConfig> {
        let cfg = TestConfig {
            kinds: self.kinds()?,
            ridges: self.ridges.clone().unwrap_or_else(|| DEFAULT_RIDGES.to_vec()),
            multipliers: self.bandwidth_multipliers.clone().unwrap_or_else(|| BANDWIDTH_MULTIPLIERS.to_vec()),
            kernel: self.kernel_family()?.unwrap_or(kernel),
            permutations: self.permutations,
            alpha: self.alpha.unwrap_or(DEFAULT_ALPHA),
            seed: self.seed.unwrap_or(0),
            split: self.split,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The scenario of `model` with caption defaults and any overrides.
    pub fn scenario(&self) -> CliResult<Scenario> {
        let id = self.model.ok_or_else(|| CliError::config("a model (1 to 8) is required"))?;
        let base = paper_scenario(id)?;
        let mut model = base.q.model;
        let unused = |key: &str| CliError::config(format!("`{key}` does not apply to model {id}"));
        if let Some(v) = self.delta {
            match &mut model {
                Model::GaussianMeanShift { delta, .. } | Model::LaplaceMeanShift { delta, .. } | Model::GaussianMixture { delta, .. } => *delta = v,
                _ => return Err(unused("delta")),
            }
        }
        if let Some(v) = self.lambda {
            match &mut model {
                Model::SpikedVariance { lambda, .. } => *lambda = v,
                _ => return Err(unused("lambda")),
            }
        }
        if let Some(v) = self.support {
            match &mut model {
                Model::GaussianMeanShift { support, .. }
                | Model::LaplaceMeanShift { support, .. }
                | Model::GaussianMixture { support, .. }
                | Model::SpikedVariance { support, .. }
                | Model::ThinHypercube { support, .. } => *support = v,
                _ => return Err(unused("support")),
            }
        }
        if let Some(v) = self.model_alpha {
            match &mut model {
                Model::PowerLawCorrelation { alpha, .. } | Model::Equicorrelation { alpha, .. } => *alpha = v,
                _ => return Err(unused("model_alpha")),
            }
        }
        if let Some(v) = self.epsilon {
            match &mut model {
                Model::PowerLawCorrelation { epsilon, .. }
                | Model::Equicorrelation { epsilon, .. }
                | Model::ThinHypercube { epsilon, .. }
                | Model::ConcentricSpheres { epsilon } => *epsilon = v,
                _ => return Err(unused("epsilon")),
            }
        }
        let mut scenario = base.with_model(model)?;
        scenario.n = self.n.unwrap_or(scenario.n);
        scenario.m = self.m.unwrap_or(scenario.m);
        if scenario.n == 0 || scenario.m == 0 {
            return Err(CliError::config("sample sizes must be at least 1"));
        }
        if let Some(k) = self.kernel_family()? {
            scenario.kernel = k;
        }
        Ok(scenario)
    }

    pub fn dims(&self, scenario: &Scenario) -> CliResult<Vec<usize>> {
        let dims = self.dims.clone().unwrap_or_else(|| vec![scenario.q.dim]);
        if dims.is_empty() || dims.contains(&0) {
            return Err(CliError::config("dimensions must be positive"));
        }
        Ok(dims)
    }

    pub fn replications(&self) -> CliResult<usize> {
        match self.replications.unwrap_or(DEFAULT_REPLICATIONS) {
            0 => Err(CliError::config("replications must be at least 1")),
            r => Ok(r),
        }
    }
}

/// Resolved settings of a study, embedded in its report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyConfig {
    pub scenario: Scenario,
    pub null: bool,
    pub dims: Vec<usize>,
    pub replications: usize,
    pub test: TestConfig,
    pub permutations: usize,
}

impl StudyConfig {
    pub fn from_settings(s: &Settings, force_null: bool) -> CliResult<Self> {
        let scenario = s.scenario()?;
        let test = s.test_config(scenario.kernel)?;
        let null = force_null || s.null.unwrap_or(false);
        Ok(StudyConfig {
            dims: s.dims(&scenario)?,
            replications: s.replications()?,
            permutations: test.resolved_permutations(),
            scenario,
            null,
            test,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_benchmark_setup() {
        let cfg = Settings::default().test_config(KernelFamily::Gaussian).unwrap();
        assert_eq!(cfg.alpha, 0.05);
        assert_eq!(cfg.ridges, vec![1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1]);
        assert_eq!(cfg.multipliers.len(), 6);
        assert_eq!(cfg.kinds.len(), 5);
        assert_eq!(Settings::default().replications().unwrap(), 250);
    }

    #[test]
    fn flags_override_file() {
        let file = Settings::from_toml("seed = 3\nalpha = 0.1\nstats = [\"klr\", \"MMD\"]\nmodel = 4\n").unwrap();
        let flags = Settings {
            alpha: Some(0.01),
            ..Settings::default()
        };
        let s = file.overridden_by(flags);
        assert_eq!(s.seed, Some(3));
        assert_eq!(s.alpha, Some(0.01));
        let cfg = s.test_config(KernelFamily::Gaussian).unwrap();
        assert_eq!(cfg.kinds, vec![StatisticKind::Klr, StatisticKind::Mmd]);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_config_errors() {
        assert_eq!(Settings::from_toml("nope = 1").unwrap_err().exit_code(), 3);
        let bad = Settings {
            alpha: Some(1.5),
            ..Settings::default()
        };
        assert!(bad.test_config(KernelFamily::Gaussian).is_err());
        let bad = Settings {
            stats: Some(vec!["foo".into()]),
            ..Settings::default()
        };
        assert!(bad.test_config(KernelFamily::Gaussian).is_err());
        let bad = Settings {
            model: Some(1),
            lambda: Some(2.0),
            ..Settings::default()
        };
        assert!(bad.scenario().is_err());
    }

    #[test]
    fn scenario_overrides() {
        let s = Settings {
            model: Some(1),
            delta: Some(0.0),
            n: Some(50),
            ..Settings::default()
        };
        let sc = s.scenario().unwrap();
        assert_eq!(sc.q.model, Model::GaussianMeanShift { delta: 0.0, support: 2 });
        assert_eq!((sc.n, sc.m), (50, 100));
        let s = Settings {
            model: Some(6),
            epsilon: Some(0.2),
            kernel: Some("gaussian".into()),
            ..Settings::default()
        };
        let sc = s.scenario().unwrap();
        assert_eq!(sc.kernel, KernelFamily::Gaussian);
        assert_eq!(sc.q.model, Model::Equicorrelation { alpha: 0.5, epsilon: 0.2 });
    }
}
