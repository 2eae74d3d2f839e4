//! Server and worker memory shared by every algorithm.
//!
//! The server keeps the current model `w̃`, the aggregated gradient `g̃` and a
//! [`DelayLedger`]; each worker keeps the last gradient it sent (`G̃_i`) and a
//! FIFO of models it has been asked to process.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense parameter vector stamped with the server iteration that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelVector {
    values: Vec<f64>,
    version: u64,
}

impl ModelVector {
    pub fn new(values: Vec<f64>, version: u64) -> Result<Self> {
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                iteration: version,
                what: format!("model coordinate {k}"),
            });
        }
        Ok(Self { values, version })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            values: vec![0.0; dim],
            version: 0,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `w ← w − η·direction`, bumping the version.
    pub fn descend(&mut self, eta: f64, direction: &[f64]) -> Result<()> {
        check_dim(self.values.len(), direction.len())?;
        let next = self.version + 1;
        for (w, g) in self.values.iter_mut().zip(direction) {
            *w -= eta * g;
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                iteration: next,
                what: "model after update".into(),
            });
        }
        self.version = next;
        Ok(())
    }

    /// Replace the coordinates wholesale, bumping the version.
    pub fn replace(&mut self, values: Vec<f64>) -> Result<()> {
        check_dim(self.values.len(), values.len())?;
        let next = Self::new(values, self.version + 1)?;
        *self = next;
        Ok(())
    }
}

/// A stochastic gradient together with the two stamps that define its delays.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientRecord {
    pub values: Vec<f64>,
    /// Version of the model the gradient was evaluated at.
    pub model_version: u64,
    /// Server iteration whose sample stream produced the data.
    pub sample_epoch: u64,
    pub worker_id: usize,
}

impl GradientRecord {
    pub fn new(values: Vec<f64>, model_version: u64, sample_epoch: u64, worker_id: usize) -> Result<Self> {
        if sample_epoch == 0 {
            return Err(Error::invalid("sample epochs start at 1"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                iteration: sample_epoch,
                what: format!("gradient from worker {worker_id}"),
            });
        }
        Ok(Self {
            values,
            model_version,
            sample_epoch,
            worker_id,
        })
    }
}

/// One worker's share of a server iteration: who contributed and which model
/// version its gradient was computed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contribution {
    pub worker: usize,
    pub model_version: u64,
}

/// Per-worker model and data-sample delays.
///
/// Absolute stamps are stored and the delays derived on demand:
/// `τ_i(t) = t − model_version_i`, `d_i(t) = t − sample_epoch_i`.
/// A slot stays empty until the worker first contributes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DelayLedger {
    t: u64,
    model_version: Vec<Option<u64>>,
    sample_epoch: Vec<Option<u64>>,
    tau_max_observed: u64,
}

impl DelayLedger {
    /// Empty ledger at `t = 0`; nobody has contributed yet.
    pub fn new(n: usize) -> Self {
        Self {
            t: 0,
            model_version: vec![None; n],
            sample_epoch: vec![None; n],
            tau_max_observed: 0,
        }
    }

    /// Ledger right after the all-worker initialization round:
    /// `t = 1`, `τ_i(1) = 1`, `d_i(1) = 0` for every worker.
    pub fn initialized(n: usize) -> Self {
        Self {
            t: 1,
            model_version: vec![Some(0); n],
            sample_epoch: vec![Some(1); n],
            tau_max_observed: if n > 0 { 1 } else { 0 },
        }
    }

    pub fn workers(&self) -> usize {
        self.model_version.len()
    }

    pub fn iteration(&self) -> u64 {
        self.t
    }

    pub fn tau(&self, worker: usize) -> Option<u64> {
        self.model_version.get(worker)?.map(|v| self.t - v)
    }

    pub fn d(&self, worker: usize) -> Option<u64> {
        self.sample_epoch.get(worker)?.map(|e| self.t - e)
    }

    pub fn taus(&self) -> Vec<Option<u64>> {
        (0..self.workers()).map(|i| self.tau(i)).collect()
    }

    pub fn ds(&self) -> Vec<Option<u64>> {
        (0..self.workers()).map(|i| self.d(i)).collect()
    }

    pub fn tau_max_observed(&self) -> u64 {
        self.tau_max_observed
    }

    /// Oldest model version still referenced by some slot.
    pub fn oldest_version(&self) -> Option<u64> {
        self.model_version.iter().flatten().min().copied()
    }

    /// Move to the next server iteration. Contributors get `d = 0` and the
    /// model version their gradient was computed on; everyone else ages by one.
    pub fn advance(&mut self, contributions: &[Contribution]) -> Result<()> {
        if contributions.is_empty() {
            return Err(Error::invalid("a server iteration needs at least one contributor"));
        }
        let n = self.workers();
        let t = self.t + 1;
        for c in contributions {
            if c.worker >= n {
                return Err(Error::UnknownWorker { worker: c.worker, n });
            }
            if c.model_version >= t {
                return Err(Error::DelayInvariant {
                    worker: c.worker,
                    iteration: t,
                    tau: 0,
                    d: 0,
                });
            }
        }
        self.t = t;
        for c in contributions {
            self.model_version[c.worker] = Some(c.model_version);
            self.sample_epoch[c.worker] = Some(t);
        }
        self.check()?;
        if let Some(oldest) = self.oldest_version() {
            self.tau_max_observed = self.tau_max_observed.max(t - oldest);
        }
        Ok(())
    }

    /// Verify `1 ≤ τ_i ≤ t` and `τ_i ≥ d_i + 1` for every occupied slot.
    pub fn check(&self) -> Result<()> {
        match self.violations().into_iter().next() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    pub fn violations(&self) -> Vec<Error> {
        let mut out = Vec::new();
        for i in 0..self.workers() {
            let (Some(tau), Some(d)) = (self.tau(i), self.d(i)) else {
                continue;
            };
            if tau < d + 1 || tau < 1 || tau > self.t {
                out.push(Error::DelayInvariant {
                    worker: i,
                    iteration: self.t,
                    tau,
                    d,
                });
            }
        }
        out
    }
}

/// Worker-side memory.
#[derive(Debug, Clone)]
pub struct WorkerState {
    pub id: usize,
    /// Virtual time per gradient.
    pub speed: f64,
    /// Last gradient sent to the server (`G̃_i`), if any.
    pub g_tilde: Option<GradientRecord>,
    in_flight: VecDeque<ModelVector>,
    pub busy_until: f64,
}

impl WorkerState {
    pub fn new(id: usize, speed: f64) -> Result<Self> {
        if !(speed > 0.0 && speed.is_finite()) {
            return Err(Error::invalid(format!("worker {id} speed must be > 0, got {speed}")));
        }
        Ok(Self {
            id,
            speed,
            g_tilde: None,
            in_flight: VecDeque::new(),
            busy_until: 0.0,
        })
    }

    /// Queue a model for processing at virtual time `now`.
    pub fn assign(&mut self, model: ModelVector, now: f64) {
        if self.in_flight.is_empty() {
            self.busy_until = now + self.speed;
        } else {
            self.busy_until += self.speed;
        }
        self.in_flight.push_back(model);
    }

    /// Drop every queued model and start over on `model`.
    pub fn restart(&mut self, model: ModelVector, now: f64) {
        self.in_flight.clear();
        self.assign(model, now);
    }

    /// Pop the model at the head of the queue, which must carry `version`.
    pub fn take_model(&mut self, version: u64, iteration: u64) -> Result<ModelVector> {
        match self.in_flight.front() {
            Some(m) if m.version() == version => Ok(self.in_flight.pop_front().unwrap()),
            Some(m) => Err(Error::TraceMismatch {
                iteration,
                reason: format!(
                    "worker {} holds model v{} but trace says v{}",
                    self.id,
                    m.version(),
                    version
                ),
            }),
            None => Err(Error::TraceMismatch {
                iteration,
                reason: format!("worker {} has no model in flight", self.id),
            }),
        }
    }

    pub fn current_model(&self) -> Option<&ModelVector> {
        self.in_flight.front()
    }

    /// Models assigned and not yet completed, including the one in progress.
    pub fn queue_depth(&self) -> usize {
        self.in_flight.len()
    }
}

/// `δ = G_new − G̃_i`, then `G̃_i ← G_new`. A worker with an empty buffer
/// sends its full gradient.
pub fn buffer_delta(new_grad: GradientRecord, worker: &mut WorkerState) -> Result<Vec<f64>> {
    if new_grad.worker_id != worker.id {
        return Err(Error::invalid(format!(
            "gradient from worker {} offered to worker {}",
            new_grad.worker_id, worker.id
        )));
    }
    let delta = match &worker.g_tilde {
        Some(old) => {
            check_dim(old.values.len(), new_grad.values.len())?;
            new_grad.values.iter().zip(&old.values).map(|(a, b)| a - b).collect()
        }
        None => new_grad.values.clone(),
    };
    worker.g_tilde = Some(new_grad);
    Ok(delta)
}

/// Parameter-server memory.
#[derive(Debug, Clone)]
pub struct ServerState {
    pub w_tilde: ModelVector,
    pub g_tilde: Vec<f64>,
    pub ledger: DelayLedger,
    n: usize,
}

impl ServerState {
    pub fn new(w0: ModelVector, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("need at least one worker"));
        }
        let p = w0.dim();
        Ok(Self {
            w_tilde: w0,
            g_tilde: vec![0.0; p],
            ledger: DelayLedger::new(n),
            n,
        })
    }

    pub fn workers(&self) -> usize {
        self.n
    }

    pub fn tau_max_observed(&self) -> u64 {
        self.ledger.tau_max_observed()
    }

    /// `g̃ ← g̃ + δ/n`.
    pub fn absorb(&mut self, delta: &[f64]) -> Result<()> {
        check_dim(self.g_tilde.len(), delta.len())?;
        let n = self.n as f64;
        for (g, d) in self.g_tilde.iter_mut().zip(delta) {
            *g += d / n;
        }
        if self.g_tilde.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                iteration: self.w_tilde.version() + 1,
                what: "aggregated gradient".into(),
            });
        }
        Ok(())
    }

    /// `w̃ ← w̃ − η·g̃`.
    pub fn descend(&mut self, eta: f64) -> Result<()> {
        if !(eta > 0.0) {
            return Err(Error::invalid(format!("stepsize must be > 0, got {eta}")));
        }
        self.w_tilde.descend(eta, &self.g_tilde)
    }

    /// Brute-force re-aggregation in ascending worker id.
    pub fn reaggregate(workers: &[WorkerState], dim: usize) -> Vec<f64> {
        let mut sum = vec![0.0; dim];
        for w in workers {
            if let Some(g) = &w.g_tilde {
                for (s, v) in sum.iter_mut().zip(&g.values) {
                    *s += v;
                }
            }
        }
        let n = workers.len() as f64;
        sum.iter_mut().for_each(|s| *s /= n);
        sum
    }

    /// `‖g̃ − (1/n)Σ G̃_i‖ / (1 + ‖g̃‖)`.
    pub fn aggregation_residual(&self, workers: &[WorkerState]) -> f64 {
        let full = Self::reaggregate(workers, self.g_tilde.len());
        let diff = self
            .g_tilde
            .iter()
            .zip(&full)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        diff / (1.0 + norm(&self.g_tilde))
    }
}

/// Absorb one contributor's delta and take a server step.
pub fn server_apply(server: &mut ServerState, delta: &[f64], eta: f64) -> Result<()> {
    if !(eta > 0.0) {
        return Err(Error::invalid(format!("stepsize must be > 0, got {eta}")));
    }
    server.absorb(delta)?;
    server.descend(eta)
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}
