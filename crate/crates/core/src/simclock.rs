//! Fixed-speed discrete-event scheduler.
//!
//! Worker `i` needs exactly `s_i` units of virtual time per gradient;
//! communication and server work take no time. A worker starts computing as
//! soon as it holds a model and is idle. The output is a [`Trace`]: for every
//! server iteration, the set of contributors and the model version each one
//! computed on.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, VecDeque};
use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objectives::streams::{aux, aux_stream};
use crate::state::{Contribution, DelayLedger};

/// Per-worker computation times.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedModel {
    pub mu: f64,
    pub std: f64,
    pub seed: u64,
    speeds: Vec<f64>,
}

impl SpeedModel {
    /// `s_i ~ N(μ, std²)` truncated to `(0, ∞)` by rejection.
    pub fn sample(n: usize, mu: f64, std: f64, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("need at least one worker"));
        }
        if !(std > 0.0 && std.is_finite() && mu.is_finite()) {
            return Err(Error::invalid(format!(
                "speed model needs finite mu and std > 0, got mu={mu}, std={std}"
            )));
        }
        if mu + 8.0 * std <= 0.0 {
            return Err(Error::invalid(format!("N({mu}, {std}²) has no usable positive mass")));
        }
        let normal = Normal::new(mu, std).map_err(|e| Error::invalid(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let speeds = (0..n)
            .map(|_| loop {
                let s = normal.sample(&mut rng);
                if s > 0.0 {
                    break s;
                }
            })
            .collect();
        Ok(Self { mu, std, seed, speeds })
    }

    /// Deterministic speeds, e.g. for hand-checkable schedules.
    pub fn fixed(speeds: Vec<f64>) -> Result<Self> {
        if speeds.is_empty() {
            return Err(Error::invalid("need at least one worker"));
        }
        if let Some(s) = speeds.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(Error::invalid(format!("speeds must be positive and finite, got {s}")));
        }
        let n = speeds.len() as f64;
        let mu = speeds.iter().sum::<f64>() / n;
        let std = (speeds.iter().map(|s| (s - mu).powi(2)).sum::<f64>() / n).sqrt();
        Ok(Self {
            mu,
            std,
            seed: 0,
            speeds,
        })
    }

    pub fn n(&self) -> usize {
        self.speeds.len()
    }

    pub fn speeds(&self) -> &[f64] {
        &self.speeds
    }
}

/// How many completions the server waits for before each update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AsyncMode {
    FullyAsync,
    SemiAsync { c: usize },
    Lockstep,
}

impl AsyncMode {
    /// Contributors per server iteration for `n` workers.
    pub fn batch(&self, n: usize) -> Result<usize> {
        match *self {
            AsyncMode::FullyAsync => Ok(1),
            AsyncMode::Lockstep => Ok(n),
            AsyncMode::SemiAsync { c } if (1..=n).contains(&c) => Ok(c),
            AsyncMode::SemiAsync { c } => Err(Error::invalid(format!("semi-async c={c} outside [1, {n}]"))),
        }
    }
}

/// Where the model produced by an iteration is sent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DispatchPolicy {
    /// Back to every worker that just contributed.
    ReturnToSender,
    /// To one worker drawn uniformly at random; it queues if busy.
    UniformRandom,
    /// To workers in a shuffled order, reshuffled every `epoch_len` dispatches.
    Shuffled { epoch_len: usize },
}

/// A gradient completion. Heap order: time, then worker id, then sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: f64,
    pub worker: usize,
    pub seq: u64,
}

impl Eq for Event {}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.worker.cmp(&other.worker))
            .then(self.seq.cmp(&other.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Recipients of the model `w^t` after iteration `t`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dispatch {
    ToContributors,
    To(usize),
    /// Every worker drops what it holds and restarts on `w^t`.
    Broadcast,
}

/// One server iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct Round {
    pub t: u64,
    pub time: f64,
    /// Sorted by worker id.
    pub contributions: Vec<Contribution>,
    pub dispatch: Dispatch,
    /// Models held per worker (queued plus in progress) after dispatch;
    /// recorded only under queueing dispatch policies.
    pub queue_depths: Option<Vec<usize>>,
}

impl Round {
    pub fn contributors(&self) -> impl Iterator<Item = usize> + '_ {
        self.contributions.iter().map(|c| c.worker)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub n: usize,
    pub speeds: Vec<f64>,
    /// Local work units per dispatched model (FedBuff local steps).
    pub work_units: u32,
    pub rounds: Vec<Round>,
    pub max_queue_depth: Vec<usize>,
}

/// Full description of a schedule beyond the speeds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleSpec {
    pub mode: AsyncMode,
    pub policy: DispatchPolicy,
    /// Round 1 waits for every worker's gradient at `w⁰`.
    pub init_barrier: bool,
    /// A dispatched model costs `work_units · s_i` time.
    pub work_units: u32,
    pub seed: u64,
}

impl ScheduleSpec {
    pub fn new(mode: AsyncMode) -> Self {
        Self {
            mode,
            policy: DispatchPolicy::ReturnToSender,
            init_barrier: false,
            work_units: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Default)]
struct Slot {
    queue: VecDeque<u64>,
    current: Option<u64>,
    seq: u64,
}

struct Dispatcher {
    policy: DispatchPolicy,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    issued: usize,
}

impl Dispatcher {
    fn new(policy: DispatchPolicy, n: usize, seed: u64) -> Self {
        let rng = match policy {
            DispatchPolicy::Shuffled { .. } => aux_stream(seed, aux::SHUFFLED_DISPATCH),
            _ => aux_stream(seed, aux::UNIFORM_DISPATCH),
        };
        Self {
            policy,
            rng,
            order: (0..n).collect(),
            issued: 0,
        }
    }

    fn next(&mut self) -> usize {
        match self.policy {
            DispatchPolicy::UniformRandom => self.rng.random_range(0..self.order.len()),
            DispatchPolicy::Shuffled { epoch_len } => {
                let k = self.issued % epoch_len;
                if k == 0 {
                    self.order.shuffle(&mut self.rng);
                }
                self.issued += 1;
                self.order[k % self.order.len()]
            }
            DispatchPolicy::ReturnToSender => unreachable!("return-to-sender has no dispatch order"),
        }
    }
}

/// Run the event engine for `iterations` server iterations.
pub fn schedule_with(speeds: &SpeedModel, spec: &ScheduleSpec, iterations: u64) -> Result<Trace> {
    if iterations == 0 {
        return Err(Error::invalid("need T >= 1 iterations"));
    }
    if spec.work_units == 0 {
        return Err(Error::invalid("work units must be >= 1"));
    }
    let n = speeds.n();
    let c = spec.mode.batch(n)?;
    let queueing = !matches!(spec.policy, DispatchPolicy::ReturnToSender);
    if queueing && c != 1 {
        return Err(Error::invalid(
            "random and shuffled dispatch need fully asynchronous mode",
        ));
    }
    if let DispatchPolicy::Shuffled { epoch_len: 0 } = spec.policy {
        return Err(Error::invalid("shuffle epoch length must be >= 1"));
    }
    let cost: Vec<f64> = speeds.speeds().iter().map(|s| s * spec.work_units as f64).collect();
    let mut dispatcher = Dispatcher::new(spec.policy, n, spec.seed);
    let mut slots: Vec<Slot> = (0..n).map(|_| Slot::default()).collect();
    let mut heap = BinaryHeap::new();
    let start = |i: usize, now: f64, slot: &mut Slot, heap: &mut BinaryHeap<Reverse<Event>>| {
        if slot.current.is_none() {
            if let Some(v) = slot.queue.pop_front() {
                slot.current = Some(v);
                slot.seq += 1;
                heap.push(Reverse(Event {
                    time: now + cost[i],
                    worker: i,
                    seq: slot.seq,
                }));
            }
        }
    };
    for (i, slot) in slots.iter_mut().enumerate() {
        slot.queue.push_back(0);
        start(i, 0.0, slot, &mut heap);
    }
    let mut max_depth = vec![1usize; n];
    let mut rounds = Vec::with_capacity(iterations as usize);
    let mut pending: Vec<Contribution> = Vec::with_capacity(n);
    while (rounds.len() as u64) < iterations {
        let Reverse(ev) = heap.pop().expect("in-flight models never run out");
        let slot = &mut slots[ev.worker];
        let version = slot.current.take().expect("completion of an idle worker");
        start(ev.worker, ev.time, slot, &mut heap);
        pending.push(Contribution {
            worker: ev.worker,
            model_version: version,
        });
        let need = if spec.init_barrier && rounds.is_empty() { n } else { c };
        if pending.len() < need {
            continue;
        }
        let t = rounds.len() as u64 + 1;
        pending.sort_by_key(|c| c.worker);
        let contributions = std::mem::take(&mut pending);
        let dispatch = if queueing && !(spec.init_barrier && t == 1) {
            let j = dispatcher.next();
            slots[j].queue.push_back(t);
            start(j, ev.time, &mut slots[j], &mut heap);
            Dispatch::To(j)
        } else {
            for cb in &contributions {
                slots[cb.worker].queue.push_back(t);
                start(cb.worker, ev.time, &mut slots[cb.worker], &mut heap);
            }
            Dispatch::ToContributors
        };
        let queue_depths = queueing.then(|| {
            slots
                .iter()
                .map(|s| s.queue.len() + usize::from(s.current.is_some()))
                .collect::<Vec<_>>()
        });
        if let Some(d) = &queue_depths {
            max_depth.iter_mut().zip(d).for_each(|(m, &x)| *m = (*m).max(x));
        }
        rounds.push(Round {
            t,
            time: ev.time,
            contributions,
            dispatch,
            queue_depths,
        });
    }
    Ok(Trace {
        n,
        speeds: speeds.speeds().to_vec(),
        work_units: spec.work_units,
        rounds,
        max_queue_depth: max_depth,
    })
}

/// Return-to-sender schedule without an initialization barrier.
pub fn schedule_run(speeds: &SpeedModel, mode: AsyncMode, iterations: u64) -> Result<Trace> {
    schedule_with(speeds, &ScheduleSpec::new(mode), iterations)
}

/// Synchronized rounds: every participant computes on the current model and
/// the round lasts as long as its slowest participant. Round 1 includes every
/// worker; afterwards each worker joins independently with probability
/// `participation` (an empty draw is redrawn).
pub fn schedule_synchronized(speeds: &SpeedModel, iterations: u64, participation: f64, seed: u64) -> Result<Trace> {
    if iterations == 0 {
        return Err(Error::invalid("need T >= 1 iterations"));
    }
    if !(participation > 0.0 && participation <= 1.0) {
        return Err(Error::invalid(format!(
            "participation must be in (0, 1], got {participation}"
        )));
    }
    let n = speeds.n();
    let s = speeds.speeds();
    let mut rng = aux_stream(seed, aux::PARTICIPATION);
    let mut time = 0.0;
    let mut rounds = Vec::with_capacity(iterations as usize);
    for t in 1..=iterations {
        let members: Vec<usize> = if t == 1 || participation >= 1.0 {
            (0..n).collect()
        } else {
            loop {
                let m: Vec<usize> = (0..n).filter(|_| rng.random_bool(participation)).collect();
                if !m.is_empty() {
                    break m;
                }
            }
        };
        time += members.iter().map(|&i| s[i]).fold(0.0, f64::max);
        rounds.push(Round {
            t,
            time,
            contributions: members
                .iter()
                .map(|&worker| Contribution {
                    worker,
                    model_version: t - 1,
                })
                .collect(),
            dispatch: Dispatch::Broadcast,
            queue_depths: None,
        });
    }
    Ok(Trace {
        n,
        speeds: s.to_vec(),
        work_units: 1,
        rounds,
        max_queue_depth: vec![1; n],
    })
}

/// Delay statistics of a trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DelayStats {
    /// `max_{t,i} τ_i(t)` over occupied ledger slots.
    pub tau_max: u64,
    /// `(1/n(T−1)) Σ_{t<T} Σ_i τ_i(t)`, averaging over occupied slots only.
    pub tau_avg: f64,
    /// Largest `t − model_version` among contributors at their iteration `t`.
    pub contributor_tau_max: u64,
    pub d_max: u64,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    /// Replay the trace through a delay ledger, calling `visit` after every iteration.
    pub fn replay(&self, mut visit: impl FnMut(&Round, &DelayLedger)) -> Result<()> {
        let mut ledger = DelayLedger::new(self.n);
        for r in &self.rounds {
            ledger.advance(&r.contributions)?;
            visit(r, &ledger);
        }
        Ok(())
    }

    pub fn contribution_counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.n];
        for r in &self.rounds {
            r.contributors().for_each(|i| counts[i] += 1);
        }
        counts
    }

    /// JSONL, one record per iteration: `{t, time, contributors, tau, d}` with
    /// `null` for workers that have not contributed yet.
    pub fn write_jsonl(&self, mut out: impl Write) -> Result<()> {
        let mut err = None;
        self.replay(|r, ledger| {
            if err.is_some() {
                return;
            }
            let rec = serde_json::json!({
                "t": r.t,
                "time": r.time,
                "contributors": r.contributors().collect::<Vec<_>>(),
                "tau": ledger.taus(),
                "d": ledger.ds(),
            });
            if let Err(e) = writeln!(out, "{rec}") {
                err = Some(e);
            }
        })?;
        match err {
            Some(e) => Err(e.into()),
            None => Ok(()),
        }
    }
}

pub fn observed_delays(trace: &Trace) -> Result<DelayStats> {
    let last = trace.rounds.len() as u64;
    let mut stats = DelayStats {
        tau_max: 0,
        tau_avg: 0.0,
        contributor_tau_max: 0,
        d_max: 0,
    };
    let (mut sum, mut count) = (0u128, 0u64);
    trace.replay(|r, ledger| {
        for c in &r.contributions {
            stats.contributor_tau_max = stats.contributor_tau_max.max(r.t - c.model_version);
        }
        for (tau, d) in ledger.taus().into_iter().zip(ledger.ds()).filter_map(|(a, b)| a.zip(b)) {
            stats.tau_max = stats.tau_max.max(tau);
            stats.d_max = stats.d_max.max(d);
            if r.t < last || last == 1 {
                sum += tau as u128;
                count += 1;
            }
        }
    })?;
    stats.tau_avg = if count == 0 { 0.0 } else { sum as f64 / count as f64 };
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn workers(trace: &Trace) -> Vec<Vec<usize>> {
        trace.rounds.iter().map(|r| r.contributors().collect()).collect()
    }

    #[test]
    fn two_workers_hand_trace() {
        let s = SpeedModel::fixed(vec![1.0, 2.0]).unwrap();
        let tr = schedule_run(&s, AsyncMode::FullyAsync, 5).unwrap();
        assert_eq!(workers(&tr), vec![vec![0], vec![0], vec![1], vec![0], vec![0]]);
        let times: Vec<f64> = tr.rounds.iter().map(|r| r.time).collect();
        assert_eq!(times, vec![1.0, 2.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn lockstep_equal_speeds_is_synchronous() {
        let s = SpeedModel::fixed(vec![1.5; 4]).unwrap();
        let tr = schedule_run(&s, AsyncMode::Lockstep, 20).unwrap();
        assert!(workers(&tr).iter().all(|w| w == &vec![0, 1, 2, 3]));
        assert_eq!(tr.rounds[19].time, 30.0);
        let d = observed_delays(&tr).unwrap();
        assert_eq!((d.tau_max, d.tau_avg), (1, 1.0));
    }

    #[test]
    fn lockstep_time_is_slowest_worker() {
        let s = SpeedModel::fixed(vec![1.0, 4.0, 2.0]).unwrap();
        let tr = schedule_run(&s, AsyncMode::Lockstep, 3).unwrap();
        let times: Vec<f64> = tr.rounds.iter().map(|r| r.time).collect();
        assert_eq!(times, vec![4.0, 8.0, 12.0]);
    }

    #[test]
    fn single_worker_is_fresh() {
        let s = SpeedModel::fixed(vec![0.7]).unwrap();
        let d = observed_delays(&schedule_run(&s, AsyncMode::FullyAsync, 50).unwrap()).unwrap();
        assert_eq!((d.tau_max, d.contributor_tau_max, d.d_max), (1, 1, 0));
    }

    #[test]
    fn slow_worker_gap() {
        let s = SpeedModel::fixed(vec![1.0, 10.0]).unwrap();
        let tr = schedule_run(&s, AsyncMode::FullyAsync, 100).unwrap();
        // Oracle: worker 0 completes at 1, 2, 3, ...; worker 1 at 10, 20, ...;
        // ties go to worker 0, so worker 1 lands right after worker 0 at 10k.
        let mut oracle = Vec::new();
        let mut k = 1u64;
        while oracle.len() < 100 {
            oracle.push(vec![0]);
            if k.is_multiple_of(10) && oracle.len() < 100 {
                oracle.push(vec![1]);
            }
            k += 1;
        }
        assert_eq!(workers(&tr), oracle);
        assert_eq!(tr.contribution_counts(), vec![91, 9]);
        let d = observed_delays(&tr).unwrap();
        // Worker 1 contributes every 11 iterations: its gradient is 11
        // iterations old on arrival, the inter-contribution gap plus one.
        assert_eq!(d.contributor_tau_max, 11);
        // Just before its next arrival the stored gradient is 21 iterations old.
        assert_eq!(d.tau_max, 21);
    }

    #[test]
    fn completions_are_dispatch_plus_speed() {
        let s = SpeedModel::sample(5, 1.0, 0.5, 3).unwrap();
        let tr = schedule_run(&s, AsyncMode::SemiAsync { c: 2 }, 200).unwrap();
        let mut dispatched = vec![0.0f64; 5];
        for r in &tr.rounds {
            // The round closes on its last completion; earlier finishers wait idle.
            let done: Vec<f64> = r.contributors().map(|i| dispatched[i] + s.speeds()[i]).collect();
            assert!(done.iter().all(|&x| x <= r.time + 1e-9));
            assert!(done.iter().any(|&x| (x - r.time).abs() < 1e-9));
            for i in r.contributors() {
                dispatched[i] = r.time;
            }
        }
    }

    #[test]
    fn semi_async_equal_speed_delay_scaling() {
        let n = 8;
        let s = SpeedModel::fixed(vec![1.0; n]).unwrap();
        let full = observed_delays(&schedule_run(&s, AsyncMode::FullyAsync, 400).unwrap()).unwrap();
        for c in [2, 4, 8] {
            let semi = observed_delays(&schedule_run(&s, AsyncMode::SemiAsync { c }, 400).unwrap()).unwrap();
            let predicted = full.tau_max as f64 / c as f64;
            assert!((semi.tau_max as f64 - predicted).abs() <= 1.0, "c={c}");
        }
    }

    #[test]
    fn uniform_dispatch_builds_backlog() {
        let s = SpeedModel::fixed(vec![1.0, 10.0]).unwrap();
        let spec = ScheduleSpec {
            policy: DispatchPolicy::UniformRandom,
            seed: 5,
            ..ScheduleSpec::new(AsyncMode::FullyAsync)
        };
        let tr = schedule_with(&s, &spec, 1000).unwrap();
        assert!(tr.max_queue_depth[1] > 1);
        for r in &tr.rounds {
            assert_eq!(r.queue_depths.as_ref().unwrap().iter().sum::<usize>(), 2);
        }
    }

    #[test]
    fn shuffled_windows_are_permutations() {
        let s = SpeedModel::sample(5, 1.0, 1.0, 1).unwrap();
        let spec = ScheduleSpec {
            policy: DispatchPolicy::Shuffled { epoch_len: 5 },
            seed: 2,
            ..ScheduleSpec::new(AsyncMode::FullyAsync)
        };
        let tr = schedule_with(&s, &spec, 500).unwrap();
        let targets: Vec<usize> = tr
            .rounds
            .iter()
            .map(|r| match r.dispatch {
                Dispatch::To(j) => j,
                _ => unreachable!(),
            })
            .collect();
        for w in targets.chunks(5) {
            let mut sorted = w.to_vec();
            sorted.sort();
            assert_eq!(sorted, vec![0, 1, 2, 3, 4]);
        }
        assert_eq!(tr, schedule_with(&s, &spec, 500).unwrap());
    }

    #[test]
    fn init_barrier_collects_everyone() {
        let s = SpeedModel::fixed(vec![1.0, 3.0, 2.0]).unwrap();
        let spec = ScheduleSpec {
            init_barrier: true,
            ..ScheduleSpec::new(AsyncMode::FullyAsync)
        };
        let tr = schedule_with(&s, &spec, 4).unwrap();
        assert_eq!(workers(&tr)[0], vec![0, 1, 2]);
        assert_eq!(tr.rounds[0].time, 3.0);
        assert_eq!(workers(&tr)[1..], [vec![0], vec![0], vec![2]]);
        assert_eq!(tr.rounds[3].time, 5.0);
    }

    #[test]
    fn synchronized_rounds() {
        let s = SpeedModel::fixed(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let tr = schedule_synchronized(&s, 200, 0.5, 9).unwrap();
        assert_eq!(workers(&tr)[0], vec![0, 1, 2, 3]);
        for r in &tr.rounds {
            assert!(r.contributions.iter().all(|c| c.model_version == r.t - 1));
        }
        tr.replay(|_, l| {
            for i in 0..4 {
                assert_eq!(l.tau(i).unwrap(), l.d(i).unwrap() + 1);
            }
        })
        .unwrap();
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(SpeedModel::fixed(vec![1.0, 0.0]).is_err());
        assert!(SpeedModel::sample(3, 1.0, 0.0, 1).is_err());
        let s = SpeedModel::fixed(vec![1.0, 1.0]).unwrap();
        assert!(schedule_run(&s, AsyncMode::FullyAsync, 0).is_err());
        assert!(schedule_run(&s, AsyncMode::SemiAsync { c: 3 }, 5).is_err());
    }

    #[test]
    fn truncated_speeds_positive_and_deterministic() {
        let a = SpeedModel::sample(1000, 1.0, 5.0, 17).unwrap();
        assert!(a.speeds().iter().all(|&s| s > 0.0));
        assert_eq!(a, SpeedModel::sample(1000, 1.0, 5.0, 17).unwrap());
    }

    #[test]
    fn jsonl_export_marks_empty_slots() {
        let s = SpeedModel::fixed(vec![1.0, 2.0]).unwrap();
        let tr = schedule_run(&s, AsyncMode::FullyAsync, 3).unwrap();
        let mut buf = Vec::new();
        tr.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(first["tau"], serde_json::json!([1, null]));
        assert_eq!(text.lines().count(), 3);
    }
}
