//! Regularized kernel likelihood-ratio two-sample testing.
//!
//! Two samples are mapped to Gaussian measures on a reproducing kernel
//! Hilbert space (mean embedding and second-moment operator) and compared
//! by a ridge-regularized relative entropy, calibrated by permutation and
//! aggregated over bandwidths and ridges with a Bonferroni correction.
//! MMD, a spectrally regularized MMD and a Hilbert–Schmidt variant are
//! provided as baselines.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod analytic;
pub mod calibration;
pub mod embedding;
mod error;
pub mod evaluator;
pub mod kernels;
pub mod linalg;
pub mod procedure;
mod sample;
pub mod statistics;
pub mod synthetic;

pub use error::{Error, Result};
pub use nalgebra;
pub use kernels::{KernelFamily, KernelSpec};
pub use procedure::{run_test, PreparedTest, TestConfig, TestReport};
pub use sample::Sample;
pub use statistics::StatisticKind;
