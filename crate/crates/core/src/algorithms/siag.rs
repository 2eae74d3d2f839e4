use super::{check_round, dispatch, require_all, spawn_workers, Algorithm, AlgorithmKind, Env, Stamp, StepOutcome};
use crate::error::{Error, Result};
use crate::objectives::stochastic_gradient;
use crate::simclock::Round;
use crate::state::{norm, DelayLedger, GradientRecord, ModelVector, WorkerState};

/// Stochastic incremental aggregated gradient with partial participation.
///
/// Participants compute on the current model with a sample drawn this
/// iteration; absent workers keep their stored gradient. The direction is the
/// plain average of the gradient table, recomputed every step.
#[derive(Debug, Clone)]
pub struct SiagMifa {
    w: ModelVector,
    ledger: DelayLedger,
    workers: Vec<WorkerState>,
    table: Vec<Option<GradientRecord>>,
    eta: f64,
}

impl SiagMifa {
    pub fn new(w0: ModelVector, speeds: &[f64], eta: f64) -> Result<Self> {
        super::check_eta(eta)?;
        Ok(Self {
            workers: spawn_workers(&w0, speeds)?,
            ledger: DelayLedger::new(speeds.len()),
            table: vec![None; speeds.len()],
            w: w0,
            eta,
        })
    }
}

impl Algorithm for SiagMifa {
    fn kind(&self) -> AlgorithmKind {
        AlgorithmKind::SiagMifa
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
        if t == 1 {
            require_all(round, n, "the first aggregated round")?;
        }
        let p = self.w.dim();
        let mut change = vec![0.0; p];
        for c in &round.contributions {
            if c.model_version != t - 1 {
                return Err(Error::TraceMismatch {
                    iteration: t,
                    reason: format!("participant {} must compute on the current model", c.worker),
                });
            }
            let model = self.workers[c.worker].take_model(c.model_version, t)?;
            let g = stochastic_gradient(env.objective, c.worker, &model, t, env.streams)?;
            super::axpy(&mut change, 1.0, &g.values);
            if let Some(old) = &self.table[c.worker] {
                super::axpy(&mut change, -1.0, &old.values);
            }
            self.table[c.worker] = Some(g);
        }
        let mut direction = vec![0.0; p];
        for g in self.table.iter().flatten() {
            super::axpy(&mut direction, 1.0, &g.values);
        }
        direction.iter_mut().for_each(|v| *v /= n as f64);
        self.w.descend(self.eta, &direction)?;
        self.ledger.advance(&round.contributions)?;
        dispatch(&mut self.workers, round, &self.w)?;
        Ok(StepOutcome {
            t,
            time: round.time,
            contributors: round.contributors().collect(),
            consumed: self.table.iter().flatten().map(Stamp::from).collect(),
            delta_norm: norm(&change) / n as f64,
            g_norm: norm(&direction),
        })
    }

    fn queue_depths(&self) -> Vec<usize> {
        self.workers.iter().map(WorkerState::queue_depth).collect()
    }
}
