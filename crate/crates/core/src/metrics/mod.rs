//! Trajectory recording and reducers.
//!
//! Every reported `‖∇F‖²` is computed from the exact full gradient; noise enters
//! only through the trajectory itself.

mod checks;
mod writers;

use serde::{Deserialize, Serialize};

pub use checks::{lemma_variance_check, unbiasedness_check, UnbiasednessCheck, VarianceCheck};
pub use writers::{config_hash, read_jsonl_records, write_csv, write_jsonl, OutputHeader, SCHEMA_VERSION};

use crate::algorithms::{Algorithm, Env};
use crate::error::{Error, Result};
use crate::objectives::{Objective, SampleStreams};
use crate::simclock::Trace;
use crate::state::{norm_sq, ModelVector};

/// One server iteration as seen from outside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub t: u64,
    pub virtual_time: f64,
    /// `F(w^t)`.
    pub loss: f64,
    /// `‖∇F(w^{t−1})‖²`.
    pub grad_norm_sq: f64,
    pub contributors: Vec<usize>,
    /// `τ_i(t)`; `None` until worker `i` first contributes. Empty when snapshots are off.
    pub tau: Vec<Option<u64>>,
    pub d: Vec<Option<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub queue_depths: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecordOptions {
    /// Store per-iteration `τ`/`d` vectors.
    pub snapshots: bool,
    /// Recompute the aggregate from scratch every iteration and track the residual.
    pub check_aggregate: bool,
}

impl Default for RecordOptions {
    fn default() -> Self {
        Self {
            snapshots: true,
            check_aggregate: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub records: Vec<RunRecord>,
    pub final_model: ModelVector,
    /// Largest `τ_i(t)` over the run.
    pub tau_max: u64,
    pub max_residual: Option<f64>,
    pub max_queue_depth: Vec<usize>,
}

impl RunSummary {
    pub fn avg_grad_norm_sq(&self) -> f64 {
        mean(self.records.iter().map(|r| r.grad_norm_sq))
    }

    pub fn final_loss(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.loss)
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (s, k) = it.fold((0.0, 0usize), |(s, k), x| (s + x, k + 1));
    if k == 0 {
        f64::NAN
    } else {
        s / k as f64
    }
}

/// Drive `alg` through every round of `trace` with sample streams seeded by `seed`.
pub fn simulate(
    obj: &dyn Objective,
    alg: &mut dyn Algorithm,
    trace: &Trace,
    seed: u64,
    opts: RecordOptions,
) -> Result<RunSummary> {
    let mut streams = SampleStreams::new(seed);
    let p = obj.dim();
    let mut grad = vec![0.0; p];
    let mut records = Vec::with_capacity(trace.rounds.len());
    let mut max_residual: Option<f64> = None;
    for round in &trace.rounds {
        obj.global_gradient(alg.model().values(), &mut grad);
        let grad_norm_sq = norm_sq(&grad);
        let mut env = Env {
            objective: obj,
            streams: &mut streams,
        };
        let out = alg.step(round, &mut env)?;
        let loss = obj.loss(alg.model().values());
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                iteration: out.t,
                what: "loss".into(),
            });
        }
        if opts.check_aggregate {
            if let Some(r) = alg.aggregation_residual() {
                max_residual = Some(max_residual.map_or(r, |m| m.max(r)));
            }
        }
        let ledger = alg.ledger();
        records.push(RunRecord {
            t: out.t,
            virtual_time: out.time,
            loss,
            grad_norm_sq,
            contributors: out.contributors,
            tau: if opts.snapshots { ledger.taus() } else { Vec::new() },
            d: if opts.snapshots { ledger.ds() } else { Vec::new() },
            queue_depths: round.queue_depths.clone(),
        });
    }
    Ok(RunSummary {
        records,
        final_model: alg.model().clone(),
        tau_max: alg.ledger().tau_max_observed(),
        max_residual,
        max_queue_depth: trace.max_queue_depth.clone(),
    })
}

/// Mean over runs of `(1/T) Σ_{t≤T} ‖∇F(w^{t−1})‖²`.
pub fn avg_grad_norm_sq(runs: &[&[RunRecord]], iterations: usize) -> Result<f64> {
    if runs.is_empty() {
        return Err(Error::invalid("need at least one run"));
    }
    if iterations == 0 {
        return Err(Error::invalid("need T >= 1"));
    }
    let mut total = 0.0;
    for r in runs {
        if r.len() < iterations {
            return Err(Error::invalid(format!(
                "run has {} records, need {iterations}",
                r.len()
            )));
        }
        total += mean(r[..iterations].iter().map(|x| x.grad_norm_sq));
    }
    Ok(total / runs.len() as f64)
}

/// Like [`avg_grad_norm_sq`] but averaging only over `t > burn_in·T`.
pub fn windowed_grad_norm_sq(records: &[RunRecord], burn_in: f64) -> f64 {
    let skip = ((records.len() as f64) * burn_in).floor() as usize;
    mean(records[skip.min(records.len())..].iter().map(|r| r.grad_norm_sq))
}

/// Fraction of iterations discarded before fitting rates.
pub const RATE_BURN_IN: f64 = 0.1;

/// Least-squares line through `(log T, log value)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub t_grid: Vec<u64>,
}

pub fn rate_fit(t_grid: &[u64], values: &[f64]) -> Result<RateFit> {
    if t_grid.len() != values.len() || t_grid.len() < 2 {
        return Err(Error::invalid("rate fit needs >= 2 matching (T, value) pairs"));
    }
    if t_grid.contains(&0) || values.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::invalid("rate fit needs positive T and positive finite values"));
    }
    let xs: Vec<f64> = t_grid.iter().map(|&t| (t as f64).ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("rate fit needs at least two distinct T"));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r_squared = if ss_tot == 0.0 {
        1.0
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    Ok(RateFit {
        slope,
        intercept,
        r_squared,
        t_grid: t_grid.to_vec(),
    })
}

/// For every `(n, value)` whose `4n` is also present, the ratio `value(n)/value(4n)`.
/// Linear speedup in `n` predicts 4.
pub fn speedup_check(by_n: &[(usize, f64)]) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for &(n, v) in by_n {
        if let Some(&(m, w)) = by_n.iter().find(|(m, _)| *m == 4 * n) {
            out.push((n, m, v / w));
        }
    }
    out
}

/// Sample each series on a common virtual-time grid: the value at grid point
/// `s` is the last record with `virtual_time ≤ s` (`None` before the first).
pub fn align_on_time_grid(series: &[&[RunRecord]], grid: &[f64]) -> Vec<Vec<Option<f64>>> {
    series
        .iter()
        .map(|recs| {
            let mut k = 0;
            grid.iter()
                .map(|&s| {
                    while k < recs.len() && recs[k].virtual_time <= s {
                        k += 1;
                    }
                    (k > 0).then(|| recs[k - 1].grad_norm_sq)
                })
                .collect()
        })
        .collect()
}
