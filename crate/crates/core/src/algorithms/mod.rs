//! Training algorithms as state machines driven by a [`Trace`].
//!
//! Every algorithm consumes the same rounds and emits one [`StepOutcome`] per
//! server iteration, so runs on a shared trace and shared sample streams are
//! directly comparable.

mod dude;
mod fedbuff;
mod plain;
mod siag;
mod stepsize;
mod sync;

use serde::{Deserialize, Serialize};

pub use dude::DudeAsgd;
pub use fedbuff::FedBuff;
pub use plain::PlainAsgd;
pub use siag::SiagMifa;
pub use stepsize::{theory_min_iterations, theory_stepsize};
pub use sync::SyncSgd;

use crate::error::{Error, Result};
use crate::objectives::{Objective, SampleStreams};
use crate::simclock::{
    schedule_synchronized, schedule_with, AsyncMode, Dispatch, DispatchPolicy, Round, ScheduleSpec, SpeedModel, Trace,
};
use crate::state::{DelayLedger, GradientRecord, ModelVector, WorkerState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmKind {
    DudeAsgd,
    VanillaAsgd,
    UniformAsgd,
    ShuffledAsgd,
    SyncSgd,
    SiagMifa,
    Fedbuff,
}

impl AlgorithmKind {
    pub fn name(&self) -> &'static str {
        match self {
            AlgorithmKind::DudeAsgd => "dude_asgd",
            AlgorithmKind::VanillaAsgd => "vanilla_asgd",
            AlgorithmKind::UniformAsgd => "uniform_asgd",
            AlgorithmKind::ShuffledAsgd => "shuffled_asgd",
            AlgorithmKind::SyncSgd => "sync_sgd",
            AlgorithmKind::SiagMifa => "siag_mifa",
            AlgorithmKind::Fedbuff => "fedbuff",
        }
    }
}

impl std::fmt::Display for AlgorithmKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

fn default_participation() -> f64 {
    1.0
}

fn default_eta_global() -> f64 {
    1.0
}

/// An algorithm together with its scheduling parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AlgorithmSpec {
    DudeAsgd {
        mode: AsyncMode,
    },
    VanillaAsgd,
    UniformAsgd,
    ShuffledAsgd {
        /// Dispatches per shuffle; defaults to `n`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        epoch_len: Option<usize>,
    },
    SyncSgd,
    SiagMifa {
        /// Per-round probability that a worker participates.
        #[serde(default = "default_participation")]
        participation: f64,
    },
    Fedbuff {
        local_steps: u32,
        /// Buffer size `m`: local updates aggregated per server step.
        buffer: usize,
        #[serde(default = "default_eta_global")]
        eta_global: f64,
    },
}

impl AlgorithmSpec {
    pub fn kind(&self) -> AlgorithmKind {
        match self {
            AlgorithmSpec::DudeAsgd { .. } => AlgorithmKind::DudeAsgd,
            AlgorithmSpec::VanillaAsgd => AlgorithmKind::VanillaAsgd,
            AlgorithmSpec::UniformAsgd => AlgorithmKind::UniformAsgd,
            AlgorithmSpec::ShuffledAsgd { .. } => AlgorithmKind::ShuffledAsgd,
            AlgorithmSpec::SyncSgd => AlgorithmKind::SyncSgd,
            AlgorithmSpec::SiagMifa { .. } => AlgorithmKind::SiagMifa,
            AlgorithmSpec::Fedbuff { .. } => AlgorithmKind::Fedbuff,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        match *self {
            AlgorithmSpec::DudeAsgd { mode } => mode.batch(n).map(|_| ()),
            AlgorithmSpec::ShuffledAsgd { epoch_len: Some(0) } => Err(Error::invalid("shuffle epoch_len must be >= 1")),
            AlgorithmSpec::SiagMifa { participation } if !(participation > 0.0 && participation <= 1.0) => Err(
                Error::invalid(format!("participation must be in (0, 1], got {participation}")),
            ),
            AlgorithmSpec::Fedbuff {
                local_steps,
                buffer,
                eta_global,
            } => {
                if local_steps == 0 {
                    return Err(Error::invalid("fedbuff local_steps must be >= 1"));
                }
                if !(1..=n).contains(&buffer) {
                    return Err(Error::invalid(format!("fedbuff buffer {buffer} outside [1, {n}]")));
                }
                if !(eta_global > 0.0 && eta_global.is_finite()) {
                    return Err(Error::invalid(format!("eta_global must be > 0, got {eta_global}")));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// The schedule this algorithm runs on.
    pub fn schedule(&self, speeds: &SpeedModel, iterations: u64, seed: u64) -> Result<Trace> {
        self.validate(speeds.n())?;
        let n = speeds.n();
        let base = ScheduleSpec {
            seed,
            ..ScheduleSpec::new(AsyncMode::FullyAsync)
        };
        let spec = match *self {
            AlgorithmSpec::DudeAsgd { mode } => ScheduleSpec {
                mode,
                init_barrier: true,
                ..base
            },
            AlgorithmSpec::VanillaAsgd => base,
            AlgorithmSpec::UniformAsgd => ScheduleSpec {
                policy: DispatchPolicy::UniformRandom,
                ..base
            },
            AlgorithmSpec::ShuffledAsgd { epoch_len } => ScheduleSpec {
                policy: DispatchPolicy::Shuffled {
                    epoch_len: epoch_len.unwrap_or(n),
                },
                ..base
            },
            AlgorithmSpec::SyncSgd => ScheduleSpec {
                mode: AsyncMode::Lockstep,
                ..base
            },
            AlgorithmSpec::SiagMifa { participation } => {
                return schedule_synchronized(speeds, iterations, participation, seed);
            }
            AlgorithmSpec::Fedbuff {
                local_steps, buffer, ..
            } => ScheduleSpec {
                mode: AsyncMode::SemiAsync { c: buffer },
                work_units: local_steps,
                ..base
            },
        };
        schedule_with(speeds, &spec, iterations)
    }

    /// Instantiate with server stepsize `eta` (the local stepsize for FedBuff).
    pub fn build(&self, w0: ModelVector, speeds: &[f64], eta: f64) -> Result<Box<dyn Algorithm>> {
        self.validate(speeds.len())?;
        check_eta(eta)?;
        Ok(match *self {
            AlgorithmSpec::DudeAsgd { .. } => Box::new(DudeAsgd::new(w0, speeds, eta)?),
            AlgorithmSpec::VanillaAsgd | AlgorithmSpec::UniformAsgd | AlgorithmSpec::ShuffledAsgd { .. } => {
                Box::new(PlainAsgd::new(self.kind(), w0, speeds, eta)?)
            }
            AlgorithmSpec::SyncSgd => Box::new(SyncSgd::new(w0, speeds, eta)?),
            AlgorithmSpec::SiagMifa { .. } => Box::new(SiagMifa::new(w0, speeds, eta)?),
            AlgorithmSpec::Fedbuff {
                local_steps,
                eta_global,
                ..
            } => Box::new(FedBuff::new(w0, speeds, eta, eta_global, local_steps)?),
        })
    }
}

/// What an algorithm may touch during a step.
pub struct Env<'a> {
    pub objective: &'a dyn Objective,
    pub streams: &'a mut SampleStreams,
}

/// `(worker, model_version, sample_epoch)` of a gradient that entered the update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Stamp {
    pub worker: usize,
    pub model_version: u64,
    pub sample_epoch: u64,
}

impl From<&GradientRecord> for Stamp {
    fn from(g: &GradientRecord) -> Self {
        Stamp {
            worker: g.worker_id,
            model_version: g.model_version,
            sample_epoch: g.sample_epoch,
        }
    }
}

/// Result of exactly one server iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub t: u64,
    pub time: f64,
    pub contributors: Vec<usize>,
    /// Gradients that make up the applied direction.
    pub consumed: Vec<Stamp>,
    /// Norm of the change to the aggregate (the fresh gradient for buffer-free methods).
    pub delta_norm: f64,
    /// Norm of the applied direction.
    pub g_norm: f64,
}

pub trait Algorithm: Send {
    fn kind(&self) -> AlgorithmKind;

    /// Current server model `w^t`.
    fn model(&self) -> &ModelVector;

    /// Delays of the gradients held for the next aggregate.
    fn ledger(&self) -> &DelayLedger;

    fn step(&mut self, round: &Round, env: &mut Env<'_>) -> Result<StepOutcome>;

    /// Models held per worker, queued plus in progress.
    fn queue_depths(&self) -> Vec<usize>;

    /// `‖g̃ − (1/n)ΣG̃_i‖ / (1 + ‖g̃‖)` for methods that maintain an aggregate.
    fn aggregation_residual(&self) -> Option<f64> {
        None
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::invalid(format!("stepsize must be > 0, got {eta}")));
    }
    Ok(())
}

/// Fresh worker states all holding `w0`.
fn spawn_workers(w0: &ModelVector, speeds: &[f64]) -> Result<Vec<WorkerState>> {
    if speeds.is_empty() {
        return Err(Error::invalid("need at least one worker"));
    }
    speeds
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let mut w = WorkerState::new(i, s)?;
            w.assign(w0.clone(), 0.0);
            Ok(w)
        })
        .collect()
}

fn check_round(round: &Round, t: u64, n: usize) -> Result<()> {
    if round.t != t {
        return Err(Error::TraceMismatch {
            iteration: t,
            reason: format!("expected round {t}, got {}", round.t),
        });
    }
    if round.contributions.is_empty() {
        return Err(Error::TraceMismatch {
            iteration: t,
            reason: "round without contributors".into(),
        });
    }
    if let Some(c) = round.contributions.iter().find(|c| c.worker >= n) {
        return Err(Error::UnknownWorker { worker: c.worker, n });
    }
    if round.contributions.windows(2).any(|w| w[0].worker >= w[1].worker) {
        return Err(Error::TraceMismatch {
            iteration: t,
            reason: "contributors must be distinct and ascending".into(),
        });
    }
    Ok(())
}

fn require_all(round: &Round, n: usize, what: &str) -> Result<()> {
    if round.contributions.len() != n {
        return Err(Error::TraceMismatch {
            iteration: round.t,
            reason: format!("{what} needs all {n} workers, round has {}", round.contributions.len()),
        });
    }
    Ok(())
}

/// Hand `model` out according to the round's dispatch rule.
fn dispatch(workers: &mut [WorkerState], round: &Round, model: &ModelVector) -> Result<()> {
    match round.dispatch {
        Dispatch::ToContributors => {
            for c in &round.contributions {
                workers[c.worker].assign(model.clone(), round.time);
            }
        }
        Dispatch::To(j) => {
            let n = workers.len();
            workers
                .get_mut(j)
                .ok_or(Error::UnknownWorker { worker: j, n })?
                .assign(model.clone(), round.time);
        }
        Dispatch::Broadcast => {
            for w in workers.iter_mut() {
                w.restart(model.clone(), round.time);
            }
        }
    }
    Ok(())
}

fn axpy(acc: &mut [f64], a: f64, x: &[f64]) {
    acc.iter_mut().zip(x).for_each(|(y, v)| *y += a * v);
}
