//! Self-contained numerical experiments behind the `verify` suites.
//!
//! Each function builds its own objective, speeds and schedule from a seed and
//! returns raw measurements; pass/fail thresholds live with the caller.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::algorithms::{theory_stepsize, Algorithm, AlgorithmSpec, DudeAsgd, Env};
use crate::error::{Error, Result};
use crate::metrics::{
    lemma_variance_check, rate_fit, simulate, unbiasedness_check, windowed_grad_norm_sq, RateFit, RecordOptions,
    UnbiasednessCheck, VarianceCheck, RATE_BURN_IN,
};
use crate::objectives::streams::{aux, aux_stream};
use crate::objectives::{dirichlet_partition, make_quadratic, Objective, QuadraticObjective, SampleStreams};
use crate::simclock::{
    observed_delays, schedule_synchronized, schedule_with, AsyncMode, ScheduleSpec, SpeedModel, Trace,
};
use crate::state::{norm_sq, ModelVector};

/// Apply `f` to every item on up to `jobs` threads; results keep input order.
pub fn par_map<T: Sync, R: Send>(items: &[T], jobs: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let jobs = jobs.clamp(1, items.len().max(1));
    if jobs == 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                if k >= items.len() {
                    break;
                }
                let r = f(&items[k]);
                slots.lock().expect("worker thread panicked")[k] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("worker thread panicked")
        .into_iter()
        .map(|r| r.expect("every item processed"))
        .collect()
}

/// Threads available to the process.
pub fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn dude_schedule(speeds: &SpeedModel, mode: AsyncMode, iterations: u64, seed: u64) -> Result<Trace> {
    schedule_with(
        speeds,
        &ScheduleSpec {
            init_barrier: true,
            seed,
            ..ScheduleSpec::new(mode)
        },
        iterations,
    )
}

fn gradient_at(obj: &dyn Objective, w: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; obj.dim()];
    obj.global_gradient(w, &mut g);
    g
}

/// Largest `‖g̃ − (1/n)Σ G̃_i‖ / (1 + ‖g̃‖)` over a fully asynchronous DuDe run.
pub fn aggregation_identity(n: usize, p: usize, iterations: u64, seed: u64) -> Result<f64> {
    let obj = make_quadratic(n, p, 1.0, 0.5, seed)?;
    let speeds = SpeedModel::sample(n, 1.0, 1.0, seed)?;
    let trace = dude_schedule(&speeds, AsyncMode::FullyAsync, iterations, seed)?;
    let mut alg = DudeAsgd::new(ModelVector::zeros(p), speeds.speeds(), 0.1 / obj.smoothness())?;
    let opts = RecordOptions {
        snapshots: false,
        check_aggregate: true,
    };
    let run = simulate(&obj, &mut alg, &trace, seed, opts)?;
    Ok(run.max_residual.unwrap_or(0.0))
}

#[derive(Debug, Clone, Serialize)]
pub struct DelayCase {
    pub n: usize,
    pub std: f64,
    pub mode: AsyncMode,
    /// Slots breaking `τ ≥ d + 1`, `1 ≤ τ ≤ t` or the `d` recursion.
    pub violations: u64,
    pub tau_max: u64,
}

/// Replay DuDe schedules for every `(n, std, mode)` and count ledger violations.
/// Modes are fully asynchronous plus semi-asynchronous with `c ∈ {1, n/2, n}`.
pub fn delay_invariant_sweep(ns: &[usize], stds: &[f64], iterations: u64, seed: u64) -> Result<Vec<DelayCase>> {
    let mut cases = Vec::new();
    for &n in ns {
        let mut modes = vec![AsyncMode::FullyAsync];
        for c in [1, n / 2, n] {
            let m = AsyncMode::SemiAsync { c };
            if c >= 1 && !modes.contains(&m) {
                modes.push(m);
            }
        }
        for &std in stds {
            let speeds = SpeedModel::sample(n, 1.0, std, seed ^ n as u64)?;
            for &mode in &modes {
                let trace = dude_schedule(&speeds, mode, iterations, seed)?;
                cases.push(count_violations(&trace, n, std, mode));
            }
        }
    }
    Ok(cases)
}

fn count_violations(trace: &Trace, n: usize, std: f64, mode: AsyncMode) -> DelayCase {
    let mut violations = 0u64;
    let mut prev_d: Vec<Option<u64>> = vec![None; n];
    let outcome = trace.replay(|round, ledger| {
        violations += ledger.violations().len() as u64;
        let ds = ledger.ds();
        let mut contributed = vec![false; n];
        round.contributors().for_each(|i| contributed[i] = true);
        for i in 0..n {
            let ok = match (contributed[i], prev_d[i], ds[i]) {
                (true, _, d) => d == Some(0),
                (false, Some(a), Some(b)) => b == a + 1,
                (false, None, d) => d.is_none(),
                (false, Some(_), None) => false,
            };
            violations += u64::from(!ok);
        }
        prev_d = ds;
    });
    // A ledger that refuses to advance counts as a violation.
    violations += u64::from(outcome.is_err());
    let tau_max = observed_delays(trace).map_or(0, |d| d.tau_max);
    DelayCase {
        n,
        std,
        mode,
        violations,
        tau_max,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SemiAsyncDelays {
    pub n: usize,
    pub fully_async_tau_max: u64,
    /// `(c, τ_max^(c))`.
    pub semi_async: Vec<(usize, u64)>,
}

/// `τ_max` observed with equal speeds, fully asynchronous and batched by `c`.
pub fn semi_async_delays(n: usize, cs: &[usize], iterations: u64) -> Result<SemiAsyncDelays> {
    let speeds = SpeedModel::fixed(vec![1.0; n])?;
    let tau = |mode| -> Result<u64> { Ok(observed_delays(&dude_schedule(&speeds, mode, iterations, 0)?)?.tau_max) };
    let fully_async_tau_max = tau(AsyncMode::FullyAsync)?;
    let semi_async = cs
        .iter()
        .map(|&c| Ok((c, tau(AsyncMode::SemiAsync { c })?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SemiAsyncDelays {
        n,
        fully_async_tau_max,
        semi_async,
    })
}

/// Step two algorithms side by side on their own traces with identical sample
/// streams and return the largest coordinate gap between their iterates.
pub fn max_iterate_deviation(
    obj: &dyn Objective,
    a: &mut dyn Algorithm,
    trace_a: &Trace,
    b: &mut dyn Algorithm,
    trace_b: &Trace,
    seed: u64,
) -> Result<f64> {
    if trace_a.len() != trace_b.len() {
        return Err(Error::invalid("traces differ in length"));
    }
    let mut sa = SampleStreams::new(seed);
    let mut sb = SampleStreams::new(seed);
    let mut worst = 0.0f64;
    for (ra, rb) in trace_a.rounds.iter().zip(&trace_b.rounds) {
        a.step(
            ra,
            &mut Env {
                objective: obj,
                streams: &mut sa,
            },
        )?;
        b.step(
            rb,
            &mut Env {
                objective: obj,
                streams: &mut sb,
            },
        )?;
        for (x, y) in a.model().values().iter().zip(b.model().values()) {
            worst = worst.max((x - y).abs());
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, Serialize)]
pub struct Reductions {
    pub dude_lockstep_vs_sync: f64,
    pub dude_synchronized_vs_siag: f64,
    pub siag_full_vs_sync: f64,
    pub fedbuff_single_step_vs_sync: f64,
}

/// Iterate-wise deviations between algorithms that coincide on matching schedules.
pub fn reductions(n: usize, p: usize, iterations: u64, seed: u64) -> Result<Reductions> {
    let obj = make_quadratic(n, p, 1.0, 0.5, seed)?;
    let speeds = SpeedModel::sample(n, 1.0, 1.0, seed)?;
    let eta = 0.1 / obj.smoothness();
    let w0 = ModelVector::zeros(p);
    let build = |spec: AlgorithmSpec| spec.build(w0.clone(), speeds.speeds(), eta);
    let sync = AlgorithmSpec::SyncSgd;
    let sync_trace = sync.schedule(&speeds, iterations, seed)?;
    let compare = |a: AlgorithmSpec, ta: &Trace, b: AlgorithmSpec, tb: &Trace| -> Result<f64> {
        max_iterate_deviation(&obj, build(a)?.as_mut(), ta, build(b)?.as_mut(), tb, seed)
    };

    let lockstep = AlgorithmSpec::DudeAsgd {
        mode: AsyncMode::Lockstep,
    };
    let lockstep_trace = lockstep.schedule(&speeds, iterations, seed)?;
    let partial = schedule_synchronized(&speeds, iterations, 0.5, seed)?;
    let siag_full = AlgorithmSpec::SiagMifa { participation: 1.0 };
    let fedbuff = AlgorithmSpec::Fedbuff {
        local_steps: 1,
        buffer: n,
        eta_global: 1.0,
    };
    Ok(Reductions {
        dude_lockstep_vs_sync: compare(lockstep, &lockstep_trace, sync, &sync_trace)?,
        dude_synchronized_vs_siag: compare(
            lockstep,
            &partial,
            AlgorithmSpec::SiagMifa { participation: 0.5 },
            &partial,
        )?,
        siag_full_vs_sync: compare(
            siag_full,
            &siag_full.schedule(&speeds, iterations, seed)?,
            sync,
            &sync_trace,
        )?,
        fedbuff_single_step_vs_sync: compare(
            fedbuff,
            &fedbuff.schedule(&speeds, iterations, seed)?,
            sync,
            &sync_trace,
        )?,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BiasSeparation {
    /// Empirical contribution frequencies of vanilla ASGD.
    pub weights: Vec<f64>,
    /// `‖∇F‖²` at the solution of `Σ p_i ∇F_i(w) = 0`.
    pub oracle_gap: f64,
    pub vanilla_grad_norm_sq: f64,
    pub dude_grad_norm_sq: f64,
    pub zeta_sq_at_optimum: f64,
}

/// Minimizer of `Σ p_i F_i` for a quadratic.
pub fn weighted_fixed_point(obj: &QuadraticObjective, weights: &[f64]) -> Result<Vec<f64>> {
    let p = obj.dim();
    let mut a = DMatrix::zeros(p, p);
    let mut b = DVector::zeros(p);
    for (i, &w) in weights.iter().enumerate() {
        a += obj.a(i) * w;
        b += obj.b(i) * w;
    }
    let x = a.lu().solve(&b).ok_or(Error::Singular { attempts: 1 })?;
    Ok(x.iter().copied().collect())
}

/// Noiseless two-worker quadratic with speeds `speeds`: vanilla ASGD against
/// DuDe-ASGD, both with stepsize `eta_scale / L` from `w = 0`.
pub fn bias_separation(
    p: usize,
    speeds: [f64; 2],
    iterations: u64,
    eta_scale: f64,
    seed: u64,
) -> Result<BiasSeparation> {
    let obj = make_quadratic(2, p, 1.0, 0.0, seed)?;
    let speeds = SpeedModel::fixed(speeds.to_vec())?;
    let eta = eta_scale / obj.smoothness();
    let w0 = ModelVector::zeros(p);
    let opts = RecordOptions {
        snapshots: false,
        check_aggregate: false,
    };

    let vanilla = AlgorithmSpec::VanillaAsgd;
    let trace = vanilla.schedule(&speeds, iterations, seed)?;
    let mut alg = vanilla.build(w0.clone(), speeds.speeds(), eta)?;
    let run = simulate(&obj, alg.as_mut(), &trace, seed, opts)?;
    let vanilla_grad_norm_sq = norm_sq(&gradient_at(&obj, run.final_model.values()));

    let counts = trace.contribution_counts();
    let total: u64 = counts.iter().sum();
    let weights: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
    let fixed = weighted_fixed_point(&obj, &weights)?;
    let oracle_gap = norm_sq(&gradient_at(&obj, &fixed));

    let dude = AlgorithmSpec::DudeAsgd {
        mode: AsyncMode::FullyAsync,
    };
    let trace = dude.schedule(&speeds, iterations, seed)?;
    let mut alg = dude.build(w0, speeds.speeds(), eta)?;
    let run = simulate(&obj, alg.as_mut(), &trace, seed, opts)?;
    let dude_grad_norm_sq = norm_sq(&gradient_at(&obj, run.final_model.values()));

    let w_star = obj.w_star();
    let g = gradient_at(&obj, w_star);
    let zeta_sq_at_optimum = (0..2)
        .map(|i| {
            let mut gi = vec![0.0; p];
            obj.local_gradient(i, w_star, &mut gi);
            norm_sq(&gi.iter().zip(&g).map(|(a, b)| a - b).collect::<Vec<_>>())
        })
        .sum::<f64>()
        / 2.0;
    Ok(BiasSeparation {
        weights,
        oracle_gap,
        vanilla_grad_norm_sq,
        dude_grad_norm_sq,
        zeta_sq_at_optimum,
    })
}

/// Variance of the averaged noise at the stale per-worker models left by a
/// short fully asynchronous DuDe run.
pub fn lemma_variance(n: usize, p: usize, sigma: f64, samples: usize, seed: u64) -> Result<VarianceCheck> {
    let obj = make_quadratic(n, p, 1.0, sigma, seed)?;
    let speeds = SpeedModel::sample(n, 1.0, 5.0, seed)?;
    let trace = dude_schedule(&speeds, AsyncMode::FullyAsync, 20 * n as u64, seed)?;
    let mut alg = DudeAsgd::new(ModelVector::zeros(p), speeds.speeds(), 0.1 / obj.smoothness())?;
    simulate(&obj, &mut alg, &trace, seed, RecordOptions::default())?;
    let server_model = alg.server().w_tilde.clone();
    let models: Vec<ModelVector> = alg
        .workers()
        .iter()
        .map(|w| w.current_model().cloned().unwrap_or_else(|| server_model.clone()))
        .collect();
    lemma_variance_check(&obj, &models, samples, seed)
}

#[derive(Debug, Clone, Serialize)]
pub struct NoiseConstant {
    pub worker: usize,
    pub unbiased: UnbiasednessCheck,
    /// Empirical `E‖∇f_i − ∇F_i‖² / σ²`.
    pub variance_ratio: f64,
    /// Five Monte Carlo standard deviations of `variance_ratio`, `5√(2/(pM))`.
    pub variance_band: f64,
}

/// Unbiasedness and exact second moment of the quadratic noise at a random point.
pub fn noise_constants(n: usize, p: usize, sigma: f64, samples: usize, seed: u64) -> Result<Vec<NoiseConstant>> {
    if sigma <= 0.0 || samples == 0 {
        return Err(Error::invalid("noise constants need sigma > 0 and M >= 1"));
    }
    let obj = make_quadratic(n, p, 1.0, sigma, seed)?;
    let w = ModelVector::new((0..p).map(|k| ((k as f64) * 0.7).sin()).collect(), 0)?;
    (0..n)
        .map(|i| {
            let unbiased = unbiasedness_check(&obj, &w, i, samples, seed.wrapping_add(i as u64))?;
            let mut exact = vec![0.0; p];
            obj.local_gradient(i, w.values(), &mut exact);
            let mut rng = aux_stream(seed.wrapping_add(1000 + i as u64), aux::MONTE_CARLO);
            let mut g = vec![0.0; p];
            let mut total = 0.0;
            for _ in 0..samples {
                obj.sample_gradient(i, w.values(), &mut rng, &mut g);
                total += g.iter().zip(&exact).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            }
            Ok(NoiseConstant {
                worker: i,
                unbiased,
                variance_ratio: total / samples as f64 / (sigma * sigma),
                variance_band: 5.0 * (2.0 / (p as f64 * samples as f64)).sqrt(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct RatePoint {
    pub iterations: u64,
    pub eta: f64,
    pub tau_max: u64,
    /// Seed mean of the windowed average `‖∇F‖²`.
    pub value: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct RateSetup {
    pub n: usize,
    pub p: usize,
    pub sigma: f64,
    pub hetero: f64,
    pub speed_std: f64,
    pub seed: u64,
}

/// DuDe-ASGD from `w = 0` with the theory stepsize for each horizon, using the
/// `τ_max` observed on that horizon's schedules.
pub fn rate_experiment(
    setup: RateSetup,
    t_grid: &[u64],
    seeds: &[u64],
    jobs: usize,
) -> Result<(Vec<RatePoint>, RateFit)> {
    let RateSetup {
        n,
        p,
        sigma,
        hetero,
        speed_std,
        seed,
    } = setup;
    let obj = make_quadratic(n, p, hetero, sigma, seed)?;
    let speeds = SpeedModel::sample(n, 1.0, speed_std, seed)?;
    let w0 = ModelVector::zeros(p);
    let delta = obj.loss(w0.values()) - obj.loss(obj.w_star());
    let mut points = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let traces = par_map(seeds, jobs, |&s| dude_schedule(&speeds, AsyncMode::FullyAsync, t, s))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let tau_max = traces
            .iter()
            .map(|tr| observed_delays(tr).map(|d| d.tau_max))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .max()
            .unwrap_or(1);
        let eta = theory_stepsize(n, delta, obj.smoothness(), sigma, tau_max, t)?;
        let jobs_in: Vec<usize> = (0..seeds.len()).collect();
        let values = par_map(&jobs_in, jobs, |&k| -> Result<f64> {
            let mut alg = DudeAsgd::new(w0.clone(), speeds.speeds(), eta)?;
            let opts = RecordOptions {
                snapshots: false,
                check_aggregate: false,
            };
            let run = simulate(&obj, &mut alg, &traces[k], seeds[k], opts)?;
            Ok(windowed_grad_norm_sq(&run.records, RATE_BURN_IN))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        points.push(RatePoint {
            iterations: t,
            eta,
            tau_max,
            value: values.iter().sum::<f64>() / values.len() as f64,
        });
    }
    let fit = rate_fit(
        &points.iter().map(|p| p.iterations).collect::<Vec<_>>(),
        &points.iter().map(|p| p.value).collect::<Vec<_>>(),
    )?;
    Ok((points, fit))
}

#[derive(Debug, Clone, Serialize)]
pub struct SpeedupArm {
    pub n: usize,
    pub mode: AsyncMode,
    pub tau_max: u64,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Speedup {
    pub small: SpeedupArm,
    pub large: SpeedupArm,
    /// `small.value / large.value`; linear speedup predicts `factor`.
    pub ratio: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct SpeedupSetup {
    pub n: usize,
    pub factor: usize,
    pub p: usize,
    pub sigma: f64,
    pub eta: f64,
    pub iterations: u64,
    /// Objective seed.
    pub seed: u64,
}

/// `n` workers fully asynchronous against `factor·n` replicated workers batched
/// by `c = factor`, so both see the same `F`, `σ` and `τ_max` with equal
/// speeds. Both start at `w*` with the same stepsize.
pub fn speedup_experiment(setup: SpeedupSetup, seeds: &[u64]) -> Result<Speedup> {
    let SpeedupSetup {
        n,
        factor,
        p,
        sigma,
        eta,
        iterations,
        seed,
    } = setup;
    let small_obj = make_quadratic(n, p, 1.0, sigma, seed)?;
    let large_obj = small_obj.replicate(factor)?;
    let w0 = ModelVector::new(small_obj.w_star().to_vec(), 0)?;
    let arm = |obj: &QuadraticObjective, mode: AsyncMode| -> Result<SpeedupArm> {
        let m = obj.workers();
        let speeds = SpeedModel::fixed(vec![1.0; m])?;
        let mut tau_max = 0;
        let mut total = 0.0;
        for &s in seeds {
            let trace = dude_schedule(&speeds, mode, iterations, s)?;
            tau_max = tau_max.max(observed_delays(&trace)?.tau_max);
            let mut alg = DudeAsgd::new(w0.clone(), speeds.speeds(), eta)?;
            let opts = RecordOptions {
                snapshots: false,
                check_aggregate: false,
            };
            let run = simulate(obj, &mut alg, &trace, s, opts)?;
            total += windowed_grad_norm_sq(&run.records, RATE_BURN_IN);
        }
        Ok(SpeedupArm {
            n: m,
            mode,
            tau_max,
            value: total / seeds.len() as f64,
        })
    };
    let (small, large) = std::thread::scope(|s| {
        let a = s.spawn(|| arm(&small_obj, AsyncMode::FullyAsync));
        let b = arm(&large_obj, AsyncMode::SemiAsync { c: factor });
        (a.join().expect("speedup arm panicked"), b)
    });
    let (small, large) = (small?, large?);
    Ok(Speedup {
        ratio: small.value / large.value,
        small,
        large,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PartitionUniformity {
    /// Largest `|share − 1/n| / (1/n)` over (class, worker) cells.
    pub max_rel_dev: f64,
    /// Cells with relative deviation above `tolerance`.
    pub cells_outside: usize,
    pub cells: usize,
}

/// Balanced labels `j mod classes`, so every class has `m / classes` samples.
pub fn balanced_labels(m: usize, classes: usize) -> Vec<usize> {
    (0..m).map(|j| j % classes).collect()
}

/// Per-class share of every worker against `1/n`.
pub fn partition_uniformity(
    n: usize,
    classes: usize,
    m: usize,
    alpha: f64,
    tolerance: f64,
    seed: u64,
) -> Result<PartitionUniformity> {
    let part = dirichlet_partition(&balanced_labels(m, classes), n, alpha, seed)?;
    let target = 1.0 / n as f64;
    let mut max_rel_dev = 0.0f64;
    let mut cells_outside = 0;
    for row in &part.counts {
        let mk: usize = row.iter().sum();
        for &c in row {
            let dev = (c as f64 / mk as f64 - target).abs() / target;
            max_rel_dev = max_rel_dev.max(dev);
            cells_outside += usize::from(dev > tolerance);
        }
    }
    Ok(PartitionUniformity {
        max_rel_dev,
        cells_outside,
        cells: classes * n,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PartitionCalibration {
    /// Largest `|empirical − p_{k,i}| / √(p(1−p)/m_k)` over cells with `0 < p < 1`.
    pub max_z: f64,
    /// Cells outside the `z`-sigma band; a cell with `p ∈ {0, 1}` must match exactly.
    pub violations: usize,
    pub cells: usize,
}

/// Empirical class proportions against the recorded Dirichlet draws.
pub fn partition_calibration(
    n: usize,
    classes: usize,
    m: usize,
    alpha: f64,
    z: f64,
    seed: u64,
) -> Result<PartitionCalibration> {
    let part = dirichlet_partition(&balanced_labels(m, classes), n, alpha, seed)?;
    let mut max_z = 0.0f64;
    let mut violations = 0;
    for (row, probs) in part.counts.iter().zip(&part.proportions) {
        let mk: usize = row.iter().sum();
        for (&c, &p) in row.iter().zip(probs) {
            let emp = c as f64 / mk as f64;
            let sd = (p * (1.0 - p) / mk as f64).sqrt();
            if sd == 0.0 {
                violations += usize::from(emp != p);
                continue;
            }
            let score = (emp - p).abs() / sd;
            max_z = max_z.max(score);
            violations += usize::from(score > z);
        }
    }
    Ok(PartitionCalibration {
        max_z,
        violations,
        cells: classes * n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn par_map_keeps_order() {
        let items: Vec<u64> = (0..50).collect();
        assert_eq!(
            par_map(&items, 4, |x| x * x),
            items.iter().map(|x| x * x).collect::<Vec<_>>()
        );
        assert_eq!(par_map(&items, 1, |x| x + 1)[49], 50);
    }

    #[test]
    fn weighted_fixed_point_with_equal_weights_is_optimum() {
        let q = make_quadratic(2, 3, 1.0, 0.0, 4).unwrap();
        let w = weighted_fixed_point(&q, &[0.5, 0.5]).unwrap();
        for (a, b) in w.iter().zip(q.w_star()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn small_sweep_has_no_violations() {
        let cases = delay_invariant_sweep(&[2, 4], &[1.0], 500, 3).unwrap();
        // n=2: async, c in {1, 2}; n=4: async, c in {1, 2, 4}.
        assert_eq!(cases.len(), 3 + 4);
        assert!(cases.iter().all(|c| c.violations == 0));
    }

    #[test]
    fn calibration_reports_every_cell() {
        let c = partition_calibration(4, 3, 3000, 0.5, 4.0, 2).unwrap();
        assert_eq!(c.cells, 12);
        assert!(c.max_z.is_finite());
    }
}
