use super::{check_round, dispatch, require_all, spawn_workers, Algorithm, AlgorithmKind, Env, Stamp, StepOutcome};
use crate::error::{Error, Result};
use crate::objectives::stochastic_gradient;
use crate::simclock::Round;
use crate::state::{norm, DelayLedger, ModelVector, WorkerState};

/// Synchronous mini-batch SGD: `w^t = w^{t−1} − η (1/n) Σ_i ∇f_i(w^{t−1}; ξ_i^t)`.
#[derive(Debug, Clone)]
pub struct SyncSgd {
    w: ModelVector,
    ledger: DelayLedger,
    workers: Vec<WorkerState>,
    eta: f64,
}

impl SyncSgd {
    pub fn new(w0: ModelVector, speeds: &[f64], eta: f64) -> Result<Self> {
        super::check_eta(eta)?;
        Ok(Self {
            workers: spawn_workers(&w0, speeds)?,
            ledger: DelayLedger::new(speeds.len()),
            w: w0,
            eta,
        })
    }
}

impl Algorithm for SyncSgd {
    fn kind(&self) -> AlgorithmKind {
        AlgorithmKind::SyncSgd
    }

    fn model(&self) -> &ModelVector {
        &self.w
    }

    fn ledger(&self) -> &DelayLedger {
        &self.ledger
    }

    fn step(&mut self, round: &Round, env: &mut Env<'_>) -> Result<StepOutcome> {
        let n = self.workers.len();
        let t = self.ledger.iteration() + 1;
        check_round(round, t, n)?;
        require_all(round, n, "synchronous SGD")?;
        let mut sum = vec![0.0; self.w.dim()];
        let mut consumed = Vec::with_capacity(n);
        for c in &round.contributions {
            if c.model_version != t - 1 {
                return Err(Error::TraceMismatch {
                    iteration: t,
                    reason: format!("worker {} computed on stale model v{}", c.worker, c.model_version),
                });
            }
            let model = self.workers[c.worker].take_model(c.model_version, t)?;
            let g = stochastic_gradient(env.objective, c.worker, &model, t, env.streams)?;
            super::axpy(&mut sum, 1.0, &g.values);
            consumed.push(Stamp::from(&g));
        }
        let direction: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        self.w.descend(self.eta, &direction)?;
        self.ledger.advance(&round.contributions)?;
        dispatch(&mut self.workers, round, &self.w)?;
        let g_norm = norm(&direction);
        Ok(StepOutcome {
            t,
            time: round.time,
            contributors: round.contributors().collect(),
            consumed,
            delta_norm: g_norm,
            g_norm,
        })
    }

    fn queue_depths(&self) -> Vec<usize> {
        self.workers.iter().map(WorkerState::queue_depth).collect()
    }
}
