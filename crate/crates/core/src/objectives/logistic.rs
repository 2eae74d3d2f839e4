use nalgebra::DMatrix;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::partition::{dirichlet_partition, Partition};
use super::Objective;
use crate::error::{Error, Result};

/// One worker's local dataset. Features are row-major `m × p`, labels 0/1.
#[derive(Debug, Clone, Default)]
pub struct WorkerData {
    pub features: Vec<f64>,
    pub labels: Vec<f64>,
}

impl WorkerData {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Regularized logistic regression over per-worker datasets, with mini-batch
/// gradients drawn uniformly with replacement.
///
/// A worker with an empty dataset contributes only the regularizer.
#[derive(Debug, Clone)]
pub struct LogisticObjective {
    p: usize,
    data: Vec<WorkerData>,
    batch_size: usize,
    reg: f64,
    l_bound: f64,
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LogisticObjective {
    pub fn new(p: usize, data: Vec<WorkerData>, batch_size: usize, reg: f64) -> Result<Self> {
        if p == 0 || data.is_empty() {
            return Err(Error::invalid("need p >= 1 and at least one worker"));
        }
        if batch_size == 0 {
            return Err(Error::invalid("batch size must be >= 1"));
        }
        if !(reg >= 0.0 && reg.is_finite()) {
            return Err(Error::invalid(format!("regularizer must be >= 0, got {reg}")));
        }
        let mut l_bound: f64 = 0.0;
        for (i, d) in data.iter().enumerate() {
            if d.features.len() != d.len() * p {
                return Err(Error::DimensionMismatch {
                    expected: d.len() * p,
                    got: d.features.len(),
                });
            }
            if d.labels.iter().any(|&y| y != 0.0 && y != 1.0) {
                return Err(Error::invalid(format!("worker {i} has labels outside {{0, 1}}")));
            }
            if !d.is_empty() {
                let x = DMatrix::from_row_slice(d.len(), p, &d.features);
                let gram = x.transpose() * &x / d.len() as f64;
                l_bound = l_bound.max(0.25 * gram.symmetric_eigen().eigenvalues.max());
            }
        }
        Ok(Self {
            p,
            data,
            batch_size,
            reg,
            l_bound: l_bound + reg,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn data(&self, worker: usize) -> &WorkerData {
        &self.data[worker]
    }

    fn row(&self, worker: usize, k: usize) -> &[f64] {
        &self.data[worker].features[k * self.p..(k + 1) * self.p]
    }

    fn add_sample_grad(&self, worker: usize, k: usize, w: &[f64], weight: f64, out: &mut [f64]) {
        let x = self.row(worker, k);
        let z: f64 = x.iter().zip(w).map(|(a, b)| a * b).sum();
        let r = (sigmoid(z) - self.data[worker].labels[k]) * weight;
        for (o, xi) in out.iter_mut().zip(x) {
            *o += r * xi;
        }
    }
}

impl Objective for LogisticObjective {
    fn workers(&self) -> usize {
        self.data.len()
    }

    fn dim(&self) -> usize {
        self.p
    }

    fn local_loss(&self, worker: usize, w: &[f64]) -> f64 {
        let d = &self.data[worker];
        let reg = 0.5 * self.reg * w.iter().map(|v| v * v).sum::<f64>();
        if d.is_empty() {
            return reg;
        }
        let total: f64 = (0..d.len())
            .map(|k| {
                let z: f64 = self.row(worker, k).iter().zip(w).map(|(a, b)| a * b).sum();
                softplus(z) - d.labels[k] * z
            })
            .sum();
        total / d.len() as f64 + reg
    }

    fn local_gradient(&self, worker: usize, w: &[f64], out: &mut [f64]) {
        for (o, wi) in out.iter_mut().zip(w) {
            *o = self.reg * wi;
        }
        let m = self.data[worker].len();
        for k in 0..m {
            self.add_sample_grad(worker, k, w, 1.0 / m as f64, out);
        }
    }

    fn sample_gradient(&self, worker: usize, w: &[f64], rng: &mut dyn RngCore, out: &mut [f64]) {
        for (o, wi) in out.iter_mut().zip(w) {
            *o = self.reg * wi;
        }
        let m = self.data[worker].len();
        if m == 0 {
            return;
        }
        let weight = 1.0 / self.batch_size as f64;
        for _ in 0..self.batch_size {
            let k = rng.random_range(0..m);
            self.add_sample_grad(worker, k, w, weight, out);
        }
    }

    fn smoothness(&self) -> f64 {
        self.l_bound
    }

    fn noise_level(&self) -> Option<f64> {
        None
    }

    fn optimum(&self) -> Option<(Vec<f64>, f64)> {
        None
    }
}

/// Parameters of the synthetic classification problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogisticSpec {
    pub workers: usize,
    /// Feature dimension, including the trailing bias feature.
    pub dim: usize,
    pub samples: usize,
    pub classes: usize,
    /// Dirichlet concentration; smaller means more label skew.
    pub alpha: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_reg")]
    pub reg: f64,
    pub seed: u64,
}

fn default_batch() -> usize {
    64
}

fn default_reg() -> f64 {
    1e-3
}

/// Gaussian class clusters with binary label `class mod 2`, split across
/// workers by a Dirichlet partition over the class labels.
pub fn make_logistic(spec: &LogisticSpec) -> Result<(LogisticObjective, Partition)> {
    if spec.dim < 2 || spec.classes < 2 || spec.samples == 0 {
        return Err(Error::invalid(
            "logistic spec needs dim >= 2, classes >= 2, samples >= 1",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let feat = spec.dim - 1;
    let centers: Vec<Vec<f64>> = (0..spec.classes)
        .map(|_| (0..feat).map(|_| 1.5 * rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    let labels: Vec<usize> = (0..spec.samples).map(|_| rng.random_range(0..spec.classes)).collect();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(spec.samples);
    for &k in &labels {
        let mut x: Vec<f64> = centers[k]
            .iter()
            .map(|c| c + rng.sample::<f64, _>(StandardNormal))
            .collect();
        x.push(1.0);
        rows.push(x);
    }
    let part = dirichlet_partition(&labels, spec.workers, spec.alpha, spec.seed.wrapping_add(1))?;
    let mut data = vec![WorkerData::default(); spec.workers];
    for (idx, &i) in part.assignment.iter().enumerate() {
        data[i].features.extend_from_slice(&rows[idx]);
        data[i].labels.push((labels[idx] % 2) as f64);
    }
    let obj = LogisticObjective::new(spec.dim, data, spec.batch_size, spec.reg)?;
    Ok((obj, part))
}
