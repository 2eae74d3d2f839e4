use super::{check_round, dispatch, spawn_workers, Algorithm, AlgorithmKind, Env, Stamp, StepOutcome};
use crate::error::{Error, Result};
use crate::simclock::Round;
use crate::state::{norm, DelayLedger, ModelVector, WorkerState};

/// Buffered asynchronous aggregation of local-SGD updates.
///
/// Each contributor runs `K` local steps `w_{k+1} = w_k − η_ℓ ∇f_i(w_k; ξ)`
/// from the model it received, drawing all `K` samples from its
/// `(worker, t)` stream. The server applies
/// `w^t = w^{t−1} − (η_g/|C_t|) Σ_{i∈C_t} (w_i^0 − w_i^K)`.
#[derive(Debug, Clone)]
pub struct FedBuff {
    w: ModelVector,
    ledger: DelayLedger,
    workers: Vec<WorkerState>,
    eta_local: f64,
    eta_global: f64,
    local_steps: u32,
}

impl FedBuff {
    pub fn new(w0: ModelVector, speeds: &[f64], eta_local: f64, eta_global: f64, local_steps: u32) -> Result<Self> {
        super::check_eta(eta_local)?;
        super::check_eta(eta_global)?;
        if local_steps == 0 {
            return Err(Error::invalid("fedbuff local_steps must be >= 1"));
        }
        Ok(Self {
            workers: spawn_workers(&w0, speeds)?,
            ledger: DelayLedger::new(speeds.len()),
            w: w0,
            eta_local,
            eta_global,
            local_steps,
        })
    }
}

impl Algorithm for FedBuff {
    fn kind(&self) -> AlgorithmKind {
        AlgorithmKind::Fedbuff
    }

    fn model(&self) -> &ModelVector {
        &self.w
    }

    fn ledger(&self) -> &DelayLedger {
        &self.ledger
    }

    fn step(&mut self, round: &Round, env: &mut Env<'_>) -> Result<StepOutcome> {
        let t = self.ledger.iteration() + 1;
        check_round(round, t, self.workers.len())?;
        let p = self.w.dim();
        let mut sum = vec![0.0; p];
        let mut grad = vec![0.0; p];
        let mut consumed = Vec::with_capacity(round.contributions.len());
        for c in &round.contributions {
            let start = self.workers[c.worker].take_model(c.model_version, t)?;
            let mut rng = env.streams.open(c.worker, t)?;
            let mut local = start.values().to_vec();
            for _ in 0..self.local_steps {
                env.objective.sample_gradient(c.worker, &local, &mut rng, &mut grad);
                super::axpy(&mut local, -self.eta_local, &grad);
            }
            if local.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    iteration: t,
                    what: format!("local model of worker {}", c.worker),
                });
            }
            super::axpy(&mut sum, 1.0, start.values());
            super::axpy(&mut sum, -1.0, &local);
            consumed.push(Stamp {
                worker: c.worker,
                model_version: c.model_version,
                sample_epoch: t,
            });
        }
        let scale = self.eta_global / round.contributions.len() as f64;
        self.w.descend(scale, &sum)?;
        self.ledger.advance(&round.contributions)?;
        dispatch(&mut self.workers, round, &self.w)?;
        let moved = norm(&sum) * scale;
        Ok(StepOutcome {
            t,
            time: round.time,
            contributors: round.contributors().collect(),
            consumed,
            delta_norm: moved,
            g_norm: moved,
        })
    }

    fn queue_depths(&self) -> Vec<usize> {
        self.workers.iter().map(WorkerState::queue_depth).collect()
    }
}
