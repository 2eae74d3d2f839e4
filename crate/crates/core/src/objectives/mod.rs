//! Synthetic stochastic objectives with known constants.
//!
//! `F(w) = (1/n) Σ_i F_i(w)` where worker `i` only sees noisy gradients of its
//! own `F_i`. Quadratics give closed-form minimizers and an exact noise level;
//! the logistic objective gives a finite-sum problem with Dirichlet-skewed
//! local datasets.

mod hetero;
mod logistic;
mod partition;
mod quadratic;
pub mod streams;

use rand::RngCore;

pub use hetero::{default_probes, heterogeneity_report, HeterogeneityReport};
pub use logistic::{make_logistic, LogisticObjective, LogisticSpec, WorkerData};
pub use partition::{dirichlet_partition, Partition};
pub use quadratic::{make_quadratic, QuadraticObjective};
pub use streams::{sample_stream, SampleStreams};

use crate::error::{Error, Result};
use crate::state::{check_dim, GradientRecord, ModelVector};

/// A distributed stochastic objective.
///
/// Implementations are pure given `(w, rng)` and may be shared across runs.
pub trait Objective: Send + Sync + std::fmt::Debug {
    fn workers(&self) -> usize;

    fn dim(&self) -> usize;

    /// `F_i(w)`.
    fn local_loss(&self, worker: usize, w: &[f64]) -> f64;

    /// `∇F_i(w)` written into `out`.
    fn local_gradient(&self, worker: usize, w: &[f64], out: &mut [f64]);

    /// One draw of `∇f_i(w; ξ)` (a mini-batch where the objective has one).
    fn sample_gradient(&self, worker: usize, w: &[f64], rng: &mut dyn RngCore, out: &mut [f64]);

    /// Smoothness constant `L` of `F`.
    fn smoothness(&self) -> f64;

    /// Exact `σ` with `E‖∇f_i − ∇F_i‖² = σ²`, when known.
    fn noise_level(&self) -> Option<f64>;

    /// Global minimizer and optimal value, when known in closed form.
    fn optimum(&self) -> Option<(Vec<f64>, f64)>;

    /// `F(w)`.
    fn loss(&self, w: &[f64]) -> f64 {
        let n = self.workers();
        (0..n).map(|i| self.local_loss(i, w)).sum::<f64>() / n as f64
    }

    /// `∇F(w)`, averaged in ascending worker order.
    fn global_gradient(&self, w: &[f64], out: &mut [f64]) {
        let n = self.workers();
        let mut buf = vec![0.0; out.len()];
        out.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            self.local_gradient(i, w, &mut buf);
            for (o, b) in out.iter_mut().zip(&buf) {
                *o += b;
            }
        }
        out.iter_mut().for_each(|v| *v /= n as f64);
    }
}

/// Which gradient to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Worker(usize),
    All,
}

/// Exact `∇F_i(w)` or `∇F(w)`.
pub fn full_gradient(obj: &dyn Objective, target: Target, w: &ModelVector) -> Result<Vec<f64>> {
    check_dim(obj.dim(), w.dim())?;
    let mut out = vec![0.0; obj.dim()];
    match target {
        Target::Worker(i) => {
            check_worker(obj, i)?;
            obj.local_gradient(i, w.values(), &mut out);
        }
        Target::All => obj.global_gradient(w.values(), &mut out),
    }
    Ok(out)
}

/// `∇f_i(w; ξ_i^epoch)` drawn from the dedicated `(i, epoch)` stream.
pub fn stochastic_gradient(
    obj: &dyn Objective,
    worker: usize,
    w: &ModelVector,
    epoch: u64,
    streams: &mut SampleStreams,
) -> Result<GradientRecord> {
    check_dim(obj.dim(), w.dim())?;
    check_worker(obj, worker)?;
    let mut rng = streams.open(worker, epoch)?;
    let mut out = vec![0.0; obj.dim()];
    obj.sample_gradient(worker, w.values(), &mut rng, &mut out);
    GradientRecord::new(out, w.version(), epoch, worker)
}

fn check_worker(obj: &dyn Objective, worker: usize) -> Result<()> {
    if worker >= obj.workers() {
        return Err(Error::UnknownWorker {
            worker,
            n: obj.workers(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stochastic_gradient_stamps_epoch_and_version() {
        let obj = make_quadratic(2, 3, 0.5, 0.1, 1).unwrap();
        let w = ModelVector::new(vec![0.1, 0.2, 0.3], 4).unwrap();
        let mut s = SampleStreams::new(3);
        let g = stochastic_gradient(&obj, 1, &w, 7, &mut s).unwrap();
        assert_eq!((g.worker_id, g.model_version, g.sample_epoch), (1, 4, 7));
        assert!(matches!(
            stochastic_gradient(&obj, 1, &w, 7, &mut s),
            Err(Error::StreamReuse { worker: 1, epoch: 7 })
        ));
        assert!(stochastic_gradient(&obj, 2, &w, 1, &mut s).is_err());
        let bad = ModelVector::zeros(2);
        assert!(full_gradient(&obj, Target::All, &bad).is_err());
    }
}
