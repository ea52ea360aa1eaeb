//! Parallel execution of tests and replication studies.
//!
//! Every unit of work derives its randomness from its own index, and
//! results are collected in index order, so output does not depend on the
//! number of threads or on scheduling.

use std::sync::mpsc::{channel, Sender};
use std::thread::JoinHandle;

use klr_core::calibration::substream;
use klr_core::synthetic::{ModelSampler, Scenario};
use klr_core::{PreparedTest, Sample, StatisticKind, TestConfig, TestReport};
use rand::RngCore;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{CliError, CliResult};

const REPLICATION_DOMAIN: u64 = 0x5EED_0001;

/// Builds a worker pool with exactly `threads` workers.
pub fn thread_pool(threads: usize) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::config(format!("cannot start {threads} worker threads: {e}")))
}

/// Completion counter fed through a channel and printed by one thread.
pub struct Progress {
    tx: Option<Sender<usize>>,
    handle: Option<JoinHandle<()>>,
}

impl Progress {
    pub fn silent() -> Self {
        Progress { tx: None, handle: None }
    }

    /// Prints `label: done/total` to standard error as units complete.
    pub fn stderr(label: &str, total: usize) -> Self {
        let (tx, rx) = channel::<usize>();
        let label = label.to_owned();
        let handle = std::thread::spawn(move || {
            let mut done = 0;
            let step = (total / 20).max(1);
            for k in rx {
                done += k;
                if done % step == 0 || done == total {
                    eprintln!("{label}: {done}/{total}");
                }
            }
        });
        Progress {
            tx: Some(tx),
            handle: Some(handle),
        }
    }

    fn tick(&self) {
        if let Some(tx) = &self.tx {
            let _ = tx.send(1);
        }
    }

    pub fn finish(mut self) {
        self.tx.take();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

/// Runs all permutation units of a prepared test on the current pool.
pub fn run_parallel(prepared: &PreparedTest) -> CliResult<TestReport> {
    let nb = prepared.bandwidth_count();
    let b = prepared.permutations();
    let observed = (0..nb)
        .into_par_iter()
        .map(|bw| prepared.observed(bw))
        .collect::<Result<Vec<_>, _>>()?;
    let flat = (0..nb * b)
        .into_par_iter()
        .map(|u| prepared.permuted(u / b, u % b))
        .collect::<Result<Vec<_>, _>>()?;
    let mut flat = flat.into_iter();
    let permuted: Vec<Vec<Vec<f64>>> = (0..nb).map(|_| flat.by_ref().take(b).collect()).collect();
    Ok(prepared.assemble(&observed, &permuted)?)
}

/// Runs one aggregated test on the current pool.
pub fn run_test(x: &Sample, y: &Sample, config: &TestConfig) -> CliResult<TestReport> {
    run_parallel(&PreparedTest::new(x, y, config)?)
}

/// Seeds of replication `rep`: both samples and the permutations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReplicationSeeds {
    pub x: u64,
    pub y: u64,
    pub permutation: u64,
}

pub fn replication_seeds(master: u64, rep: usize) -> ReplicationSeeds {
    let mut rng = substream(master, REPLICATION_DOMAIN, rep as u64);
    ReplicationSeeds {
        x: rng.next_u64(),
        y: rng.next_u64(),
        permutation: rng.next_u64(),
    }
}

/// Rejection summary of one (dimension, statistic) cell of a study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyRow {
    pub model: u8,
    pub dim: usize,
    pub statistic: StatisticKind,
    pub replications: usize,
    pub rejections: usize,
    pub rate: f64,
    /// Binomial standard error `sqrt(rate (1 − rate) / R)`.
    pub std_error: f64,
    pub rejection_possible: bool,
    pub decisions: Vec<bool>,
}

/// Decisions of one replication, one per statistic in layout order.
fn replicate(scenario: &Scenario, null: bool, test: &TestConfig, master: u64, rep: usize) -> CliResult<(Vec<bool>, Vec<bool>)> {
    let seeds = replication_seeds(master, rep);
    let p = ModelSampler::new(scenario.p)?;
    let q = if null { ModelSampler::new(scenario.p)? } else { ModelSampler::new(scenario.q)? };
    let x = p.sample(scenario.n, seeds.x)?;
    let y = q.sample(scenario.m, seeds.y)?;
    let cfg = TestConfig {
        seed: seeds.permutation,
        ..test.clone()
    };
    let report = run_test(&x, &y, &cfg)?;
    Ok((
        report.statistics.iter().map(|s| s.reject).collect(),
        report.statistics.iter().map(|s| s.rejection_possible).collect(),
    ))
}

/// Rejection rates over `replications` draws for each dimension.
///
/// With `null` both samples come from the reference distribution. The test
/// seed in `test` is the master seed; each replication derives its own.
pub fn run_study(scenario: &Scenario, null: bool, dims: &[usize], replications: usize, test: &TestConfig, progress: &Progress) -> CliResult<Vec<StudyRow>> {
    test.validate()?;
    let master = test.seed;
    let mut rows = Vec::new();
    for &dim in dims {
        let sc = scenario.with_dim(dim)?;
        let outcomes = (0..replications)
            .into_par_iter()
            .map(|rep| {
                let r = replicate(&sc, null, test, master, rep);
                progress.tick();
                r
            })
            .collect::<CliResult<Vec<_>>>()?;
        for (ki, &kind) in test.kinds.iter().enumerate() {
            let decisions: Vec<bool> = outcomes.iter().map(|(d, _)| d[ki]).collect();
            let rejections = decisions.iter().filter(|&&d| d).count();
            let rate = rejections as f64 / replications as f64;
            rows.push(StudyRow {
                model: sc.model().id(),
                dim,
                statistic: kind,
                replications,
                rejections,
                rate,
                std_error: (rate * (1.0 - rate) / replications as f64).sqrt(),
                rejection_possible: outcomes.iter().all(|(_, p)| p[ki]),
                decisions,
            });
        }
    }
    Ok(rows)
}
