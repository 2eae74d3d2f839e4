use super::{check_round, dispatch, spawn_workers, Algorithm, AlgorithmKind, Env, Stamp, StepOutcome};
use crate::error::{Error, Result};
use crate::objectives::stochastic_gradient;
use crate::simclock::Round;
use crate::state::{norm, DelayLedger, ModelVector, WorkerState};

/// Wait-free ASGD: `w^t = w^{t−1} − η ∇f_j(w^{t−τ_j}; ξ_j^t)` with a single
/// contributor `j` per iteration and a freshly drawn sample.
///
/// Vanilla, uniform and shuffled ASGD share this update and differ only in
/// where the schedule sends the new model.
#[derive(Debug, Clone)]
pub struct PlainAsgd {
    kind: AlgorithmKind,
    w: ModelVector,
    ledger: DelayLedger,
    workers: Vec<WorkerState>,
    eta: f64,
}

impl PlainAsgd {
    pub fn new(kind: AlgorithmKind, w0: ModelVector, speeds: &[f64], eta: f64) -> Result<Self> {
        super::check_eta(eta)?;
        if !matches!(
            kind,
            AlgorithmKind::VanillaAsgd | AlgorithmKind::UniformAsgd | AlgorithmKind::ShuffledAsgd
        ) {
            return Err(Error::invalid(format!("{kind} is not a wait-free ASGD variant")));
        }
        Ok(Self {
            kind,
            workers: spawn_workers(&w0, speeds)?,
            ledger: DelayLedger::new(speeds.len()),
            w: w0,
            eta,
        })
    }
}

impl Algorithm for PlainAsgd {
    fn kind(&self) -> AlgorithmKind {
        self.kind
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
        let [c] = round.contributions[..] else {
            return Err(Error::TraceMismatch {
                iteration: t,
                reason: format!("{} takes one gradient per iteration", self.kind),
            });
        };
        let model = self.workers[c.worker].take_model(c.model_version, t)?;
        let g = stochastic_gradient(env.objective, c.worker, &model, t, env.streams)?;
        self.w.descend(self.eta, &g.values)?;
        self.ledger.advance(&round.contributions)?;
        dispatch(&mut self.workers, round, &self.w)?;
        let g_norm = norm(&g.values);
        Ok(StepOutcome {
            t,
            time: round.time,
            contributors: vec![c.worker],
            consumed: vec![Stamp::from(&g)],
            delta_norm: g_norm,
            g_norm,
        })
    }

    fn queue_depths(&self) -> Vec<usize> {
        self.workers.iter().map(WorkerState::queue_depth).collect()
    }
}
