//! Subcommand implementations. Each returns the report text; writing is
//! left to [`emit`].

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use klr_core::analytic::{bm_hs_sq, bm_hs_sq_limit, bm_rate_approx, bm_tail_bound, loglog_slope, BMConfig};
use klr_core::synthetic::{ModelSampler, Side};
use klr_core::{TestConfig, TestReport};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Settings, StudyConfig};
use crate::driver::{run_study, run_test, thread_pool, Progress, StudyRow};
use crate::error::{CliError, CliResult};
use crate::io::{read_pair, write_sample};

/// Report envelope shared by all subcommands.
#[derive(Debug, Serialize)]
pub struct Report<C, R> {
    pub command: &'static str,
    pub version: &'static str,
    pub config: C,
    pub result: R,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_seconds: Option<f64>,
}

/// A finished command: the report and an optional flat table.
pub struct Output {
    pub report: String,
    pub table: Option<String>,
}

/// Options that do not affect results.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Embed wall time in the report (breaks byte-for-byte reproducibility).
    pub timing: bool,
    /// Print completion counts to standard error.
    pub progress: bool,
}

fn to_json<T: Serialize>(value: &T) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Numerical(format!("cannot serialize report: {e}")))?;
    s.push('\n');
    Ok(s)
}

fn csv_table<I, R>(rows: I) -> CliResult<String>
where
    I: IntoIterator<Item = R>,
    R: Serialize,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| CliError::config(format!("cannot write table: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::config(format!("cannot write table: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn elapsed(start: Instant, opts: RunOptions) -> Option<f64> {
    let secs = start.elapsed().as_secs_f64();
    if opts.progress {
        eprintln!("wall time: {secs:.3} s");
    }
    opts.timing.then_some(secs)
}

#[derive(Debug, Serialize)]
struct TestCommandConfig {
    x: String,
    y: String,
    #[serde(flatten)]
    test: TestConfig,
}

#[derive(Serialize)]
struct CellRow {
    statistic: String,
    multiplier: f64,
    bandwidth: f64,
    ridge: Option<f64>,
    observed: f64,
    quantile: f64,
    p_value: f64,
    corrected_level: f64,
}

fn cell_rows(report: &TestReport) -> Vec<CellRow> {
    report
        .statistics
        .iter()
        .flat_map(|s| {
            s.cells.iter().map(move |c| CellRow {
                statistic: s.kind.to_string(),
                multiplier: c.multiplier,
                bandwidth: c.bandwidth,
                ridge: c.ridge,
                observed: c.observed,
                quantile: c.quantile,
                p_value: c.p_value,
                corrected_level: s.corrected_level,
            })
        })
        .collect()
}

/// Aggregated test of the samples in two files.
pub fn cmd_test(x: &Path, y: &Path, settings: &Settings, opts: RunOptions) -> CliResult<Output> {
    let start = Instant::now();
    let (a, b) = read_pair(x, y)?;
    let test = settings.test_config(klr_core::KernelFamily::Gaussian)?;
    let pool = thread_pool(settings.resolved_threads()?)?;
    let result = pool.install(|| run_test(&a, &b, &test))?;
    let table = settings.table.as_ref().map(|_| csv_table(cell_rows(&result))).transpose()?;
    let report = Report {
        command: "test",
        version: env!("CARGO_PKG_VERSION"),
        config: TestCommandConfig {
            x: x.display().to_string(),
            y: y.display().to_string(),
            test,
        },
        result,
        wall_time_seconds: elapsed(start, opts),
    };
    Ok(Output {
        report: to_json(&report)?,
        table,
    })
}

#[derive(Serialize)]
struct StudyTableRow {
    model: u8,
    dim: usize,
    statistic: String,
    replications: usize,
    rejections: usize,
    rate: f64,
    std_error: f64,
    rejection_possible: bool,
}

#[derive(Debug, Serialize)]
pub struct StudyResult {
    pub rows: Vec<StudyRow>,
}

/// Rejection rates over replications; `null` forces both samples from `P`.
pub fn cmd_study(settings: &Settings, null: bool, opts: RunOptions) -> CliResult<Output> {
    let start = Instant::now();
    let config = StudyConfig::from_settings(settings, null)?;
    let pool = thread_pool(settings.resolved_threads()?)?;
    let total = config.replications * config.dims.len();
    let progress = if opts.progress {
        Progress::stderr(if config.null { "null-calibration" } else { "bench" }, total)
    } else {
        Progress::silent()
    };
    let rows = pool.install(|| run_study(&config.scenario, config.null, &config.dims, config.replications, &config.test, &progress));
    progress.finish();
    let rows = rows?;
    let table = settings
        .table
        .as_ref()
        .map(|_| {
            csv_table(rows.iter().map(|r| StudyTableRow {
                model: r.model,
                dim: r.dim,
                statistic: r.statistic.to_string(),
                replications: r.replications,
                rejections: r.rejections,
                rate: r.rate,
                std_error: r.std_error,
                rejection_possible: r.rejection_possible,
            }))
        })
        .transpose()?;
    let report = Report {
        command: if null { "null-calibration" } else { "bench" },
        version: env!("CARGO_PKG_VERSION"),
        config,
        result: StudyResult { rows },
        wall_time_seconds: elapsed(start, opts),
    };
    Ok(Output {
        report: to_json(&report)?,
        table,
    })
}

/// Parameters of the Brownian-motion rate table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BmRateConfig {
    pub v1: f64,
    pub v2: f64,
    pub gammas: Vec<f64>,
    pub terms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BmRow {
    pub gamma: f64,
    pub series: f64,
    pub approximation: f64,
    /// `series / approximation`, absent when both vanish.
    pub ratio: Option<f64>,
    /// Small-γ limit `(v₂ − v₁)² / (4 v₁^{3/2} γ^{1/2})` of the series.
    pub limit: f64,
    pub limit_ratio: Option<f64>,
    pub tail_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BmResult {
    pub rows: Vec<BmRow>,
    /// Log-log slope of the series against γ, absent when undefined.
    pub slope: Option<f64>,
}

pub fn bm_rate(config: &BmRateConfig) -> CliResult<BmResult> {
    if config.gammas.is_empty() {
        return Err(CliError::config("at least one gamma is required"));
    }
    let rows = config
        .gammas
        .par_iter()
        .map(|&gamma| {
            let cfg = BMConfig::new(config.v1, config.v2, gamma, config.terms)?;
            let series = bm_hs_sq(&cfg);
            let approximation = bm_rate_approx(config.v1, config.v2, gamma);
            let limit = bm_hs_sq_limit(config.v1, config.v2, gamma);
            Ok(BmRow {
                gamma,
                series,
                approximation,
                ratio: (approximation != 0.0).then(|| series / approximation),
                limit,
                limit_ratio: (limit != 0.0).then(|| series / limit),
                tail_bound: bm_tail_bound(&cfg),
            })
        })
        .collect::<Result<Vec<_>, klr_core::Error>>()?;
    let xs: Vec<f64> = rows.iter().map(|r| r.gamma).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.series).collect();
    Ok(BmResult {
        slope: loglog_slope(&xs, &ys).ok(),
        rows,
    })
}

pub fn cmd_bm_rate(config: BmRateConfig, settings: &Settings, opts: RunOptions) -> CliResult<Output> {
    let start = Instant::now();
    let pool = thread_pool(settings.resolved_threads()?)?;
    let result = pool.install(|| bm_rate(&config))?;
    let table = settings.table.as_ref().map(|_| csv_table(result.rows.iter())).transpose()?;
    let report = Report {
        command: "bm-rate",
        version: env!("CARGO_PKG_VERSION"),
        config,
        result,
        wall_time_seconds: elapsed(start, opts),
    };
    Ok(Output {
        report: to_json(&report)?,
        table,
    })
}

/// Draws `n` rows from one side of a model as comma-separated text.
pub fn cmd_generate(settings: &Settings, side: Side) -> CliResult<String> {
    let scenario = settings.scenario()?;
    let dim = match settings.dims.as_deref() {
        None => scenario.q.dim,
        Some([d]) if *d > 0 => *d,
        Some(_) => return Err(CliError::config("generate takes a single positive dimension")),
    };
    let scenario = scenario.with_dim(dim)?;
    let spec = match side {
        Side::P => scenario.p,
        Side::Q => scenario.q,
    };
    let n = match side {
        Side::P => scenario.n,
        Side::Q => scenario.m,
    };
    let sample = ModelSampler::new(spec)?.sample(n, settings.seed.unwrap_or(0))?;
    let mut buf = Vec::new();
    write_sample(&mut buf, &sample).map_err(|e| CliError::config(e.to_string()))?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

fn write_file(path: &PathBuf, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::config(format!("cannot write {}: {e}", path.display())))
}

/// Writes the report to `--out` (or standard output) and the table to `--table`.
pub fn emit(output: &Output, settings: &Settings) -> CliResult<()> {
    match &settings.out {
        Some(path) => write_file(path, &output.report)?,
        None => print!("{}", output.report),
    }
    if let (Some(path), Some(table)) = (&settings.table, &output.table) {
        write_file(path, table)?;
    }
    Ok(())
}
