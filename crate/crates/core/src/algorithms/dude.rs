use super::{check_round, dispatch, require_all, spawn_workers, Algorithm, AlgorithmKind, Env, Stamp, StepOutcome};
use crate::error::Result;
use crate::objectives::stochastic_gradient;
use crate::simclock::Round;
use crate::state::{buffer_delta, norm, DelayLedger, ModelVector, ServerState, WorkerState};

/// Dual-delayed asynchronous SGD.
///
/// The server keeps `g̃ = (1/n) Σ_i G̃_i` where `G̃_i` is the last gradient
/// worker `i` sent, computed on a stale model with a sample drawn at the
/// iteration it arrived. Each contributor sends `δ = G_new − G̃_i`; the server
/// folds `δ/n` into `g̃` and steps once per iteration.
///
/// Round 1 must contain every worker: it fills all buffers at `w⁰` and
/// sets `g¹` to their plain average.
#[derive(Debug, Clone)]
pub struct DudeAsgd {
    server: ServerState,
    workers: Vec<WorkerState>,
    eta: f64,
}

impl DudeAsgd {
    pub fn new(w0: ModelVector, speeds: &[f64], eta: f64) -> Result<Self> {
        super::check_eta(eta)?;
        let workers = spawn_workers(&w0, speeds)?;
        Ok(Self {
            server: ServerState::new(w0, speeds.len())?,
            workers,
            eta,
        })
    }

    pub fn server(&self) -> &ServerState {
        &self.server
    }

    pub fn workers(&self) -> &[WorkerState] {
        &self.workers
    }

    fn init(&mut self, round: &Round, env: &mut Env<'_>) -> Result<(f64, Vec<usize>)> {
        let n = self.workers.len();
        require_all(round, n, "initialization")?;
        let p = self.server.w_tilde.dim();
        let mut sum = vec![0.0; p];
        for c in &round.contributions {
            let w = &mut self.workers[c.worker];
            let model = w.take_model(c.model_version, 1)?;
            let g = stochastic_gradient(env.objective, c.worker, &model, 1, env.streams)?;
            super::axpy(&mut sum, 1.0, &g.values);
            w.g_tilde = Some(g);
        }
        self.server.g_tilde = sum.iter().map(|s| s / n as f64).collect();
        Ok((norm(&self.server.g_tilde), round.contributors().collect()))
    }
}

impl Algorithm for DudeAsgd {
    fn kind(&self) -> AlgorithmKind {
        AlgorithmKind::DudeAsgd
    }

    fn model(&self) -> &ModelVector {
        &self.server.w_tilde
    }

    fn ledger(&self) -> &DelayLedger {
        &self.server.ledger
    }

    fn step(&mut self, round: &Round, env: &mut Env<'_>) -> Result<StepOutcome> {
        let n = self.workers.len();
        let t = self.server.ledger.iteration() + 1;
        check_round(round, t, n)?;
        let (delta_norm, contributors) = if t == 1 {
            self.init(round, env)?
        } else {
            let p = self.server.w_tilde.dim();
            let mut total = vec![0.0; p];
            for c in &round.contributions {
                let w = &mut self.workers[c.worker];
                let model = w.take_model(c.model_version, t)?;
                let g = stochastic_gradient(env.objective, c.worker, &model, t, env.streams)?;
                let delta = buffer_delta(g, w)?;
                super::axpy(&mut total, 1.0 / n as f64, &delta);
                self.server.absorb(&delta)?;
            }
            (norm(&total), round.contributors().collect())
        };
        self.server.descend(self.eta)?;
        self.server.ledger.advance(&round.contributions)?;
        dispatch(&mut self.workers, round, &self.server.w_tilde)?;
        Ok(StepOutcome {
            t,
            time: round.time,
            contributors,
            consumed: self
                .workers
                .iter()
                .filter_map(|w| w.g_tilde.as_ref().map(Stamp::from))
                .collect(),
            delta_norm,
            g_norm: norm(&self.server.g_tilde),
        })
    }

    fn queue_depths(&self) -> Vec<usize> {
        self.workers.iter().map(WorkerState::queue_depth).collect()
    }

    fn aggregation_residual(&self) -> Option<f64> {
        Some(self.server.aggregation_residual(&self.workers))
    }
}
