//! Optimization loops built on the tape.
//!
//! Each `run_*` function is deterministic for a given seed and returns an
//! [`ExperimentResult`].

mod adam;
pub mod gcn;
pub mod heavyball;
pub mod jacobi;
pub mod pcg;
pub mod spai;

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use adam::Adam;
pub use gcn::{gcn_layer, planted_partition, run_gcn_experiment, GcnConfig, PlantedPartition};
pub use heavyball::{heavyball_iterate, run_heavyball_experiment, HeavyballConfig};
pub use jacobi::{jacobi_step, run_jacobi_experiment, JacobiConfig};
pub use pcg::{cg_solve, loss_weights, pcg_solve, run_pcg_experiment, PcgConfig};
pub use spai::{run_spai_experiment, spai_loss, spai_reference, SpaiConfig};

pub use crate::poisson::{poisson_1d as gen_poisson_1d, poisson_2d as gen_poisson_2d};

use crate::dense::DenseVector;
use crate::error::{Error, Result};

/// Outcome of one experiment run.
///
/// `epoch_series` entries have one value per epoch, like `loss_history`.
/// `series` holds sequences of other lengths, such as residual histories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub experiment: String,
    pub seed: u64,
    pub epochs: usize,
    pub loss_history: Vec<f64>,
    pub epoch_series: BTreeMap<String, Vec<f64>>,
    pub series: BTreeMap<String, Vec<f64>>,
    pub final_params: BTreeMap<String, Vec<f64>>,
    #[serde(flatten)]
    pub metrics: BTreeMap<String, f64>,
    pub wall_seconds: f64,
}

impl ExperimentResult {
    fn new(experiment: &str, seed: u64) -> Self {
        ExperimentResult {
            experiment: experiment.into(),
            seed,
            epochs: 0,
            loss_history: Vec::new(),
            epoch_series: BTreeMap::new(),
            series: BTreeMap::new(),
            final_params: BTreeMap::new(),
            metrics: BTreeMap::new(),
            wall_seconds: 0.0,
        }
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }

    fn push_epoch(&mut self, name: &str, value: f64) {
        self.epoch_series.entry(name.to_string()).or_default().push(value);
    }

    /// True when every recorded number is finite.
    pub fn all_finite(&self) -> bool {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        finite(&self.loss_history)
            && self.epoch_series.values().all(|v| finite(v))
            && self.series.values().all(|v| finite(v))
            && self.final_params.values().all(|v| finite(v))
            && self.metrics.values().all(|x| x.is_finite())
    }
}

/// `count` Gaussian vectors of length `n`, each scaled to unit norm.
pub fn unit_gaussian_vectors<R: Rng>(rng: &mut R, n: usize, count: usize) -> Vec<DenseVector> {
    (0..count)
        .map(|_| {
            let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            DenseVector::new(v.into_iter().map(|x| x / norm).collect())
        })
        .collect()
}

fn check_finite(what: &str, epoch: usize, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite(format!("{what} at epoch {epoch}")))
    }
}
