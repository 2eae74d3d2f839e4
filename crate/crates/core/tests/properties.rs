use proptest::prelude::*;

use asgd_sim::algorithms::{AlgorithmSpec, DudeAsgd};
use asgd_sim::cli::config::{ObjectiveSpec, OutputSpec, RunConfig, SpeedSpec, StepsizeSpec};
use asgd_sim::metrics::{simulate, RecordOptions};
use asgd_sim::objectives::{dirichlet_partition, make_quadratic, Objective};
use asgd_sim::simclock::{schedule_with, AsyncMode, DispatchPolicy, ScheduleSpec, SpeedModel};
use asgd_sim::state::{
    buffer_delta, server_apply, Contribution, DelayLedger, GradientRecord, ModelVector, ServerState, WorkerState,
};

fn mode_strategy(n: usize) -> impl Strategy<Value = AsyncMode> {
    prop_oneof![
        Just(AsyncMode::FullyAsync),
        (1..=n).prop_map(|c| AsyncMode::SemiAsync { c }),
        Just(AsyncMode::Lockstep),
    ]
}

fn schedule_case() -> impl Strategy<Value = (Vec<f64>, AsyncMode, DispatchPolicy, u64)> {
    (1usize..10).prop_flat_map(|n| {
        (
            prop::collection::vec(0.1f64..5.0, n),
            mode_strategy(n),
            prop_oneof![
                Just(DispatchPolicy::ReturnToSender),
                Just(DispatchPolicy::UniformRandom),
                (1usize..12).prop_map(|epoch_len| DispatchPolicy::Shuffled { epoch_len }),
            ],
            any::<u64>(),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Return-to-sender contributions from arbitrary non-empty subsets keep
    /// `τ ≥ d + 1`, reset `d` for contributors and age everyone else by one.
    #[test]
    fn ledger_recursion_holds(n in 1usize..8, picks in prop::collection::vec(any::<u16>(), 1..200)) {
        let mut ledger = DelayLedger::new(n);
        let all: Vec<Contribution> = (0..n).map(|worker| Contribution { worker, model_version: 0 }).collect();
        ledger.advance(&all).unwrap();
        let mut held = vec![1u64; n];
        for (k, mask) in picks.iter().enumerate() {
            let t = k as u64 + 2;
            let mut set: Vec<usize> = (0..n).filter(|i| mask & (1 << (i % 16)) != 0).collect();
            if set.is_empty() {
                set.push(*mask as usize % n);
            }
            let before = ledger.ds();
            let cs: Vec<Contribution> = set.iter().map(|&w| Contribution { worker: w, model_version: held[w] }).collect();
            ledger.advance(&cs).unwrap();
            prop_assert!(ledger.violations().is_empty());
            for i in 0..n {
                let (tau, d) = (ledger.tau(i).unwrap(), ledger.d(i).unwrap());
                prop_assert!(tau > d && tau <= t);
                if set.contains(&i) {
                    prop_assert_eq!(d, 0);
                } else {
                    prop_assert_eq!(d, before[i].unwrap() + 1);
                }
            }
            for &w in &set {
                held[w] = t;
            }
        }
    }

    #[test]
    fn schedules_are_deterministic_and_well_formed((speeds, mode, policy, seed) in schedule_case(), barrier in any::<bool>()) {
        let n = speeds.len();
        // Queued dispatch is only defined without batching.
        let mode = if policy == DispatchPolicy::ReturnToSender { mode } else { AsyncMode::FullyAsync };
        let model = SpeedModel::fixed(speeds).unwrap();
        let spec = ScheduleSpec { mode, policy, init_barrier: barrier, work_units: 1, seed };
        let a = schedule_with(&model, &spec, 300).unwrap();
        let b = schedule_with(&model, &spec, 300).unwrap();
        prop_assert_eq!(&a.rounds, &b.rounds);
        prop_assert_eq!(a.len(), 300);
        let batch = mode.batch(n).unwrap();
        for (k, r) in a.rounds.iter().enumerate() {
            prop_assert_eq!(r.t, k as u64 + 1);
            if k > 0 {
                prop_assert!(r.time >= a.rounds[k - 1].time);
            }
            let expected = if barrier && k == 0 { n } else { batch };
            prop_assert_eq!(r.contributions.len(), expected);
            let mut ids: Vec<usize> = r.contributors().collect();
            ids.sort_unstable();
            ids.dedup();
            prop_assert_eq!(ids.len(), r.contributions.len());
        }
        let mut violations = 0;
        a.replay(|_, l| violations += l.violations().len()).unwrap();
        prop_assert_eq!(violations, 0);
    }

    /// Incremental aggregation matches the brute-force average after any
    /// sequence of deltas.
    #[test]
    fn incremental_aggregate_matches_full(
        n in 1usize..9,
        updates in prop::collection::vec((any::<u16>(), prop::collection::vec(-100.0f64..100.0, 4)), 1..300),
    ) {
        let mut server = ServerState::new(ModelVector::zeros(4), n).unwrap();
        let mut workers: Vec<WorkerState> = (0..n).map(|i| WorkerState::new(i, 1.0).unwrap()).collect();
        for (k, (who, g)) in updates.into_iter().enumerate() {
            let i = who as usize % n;
            let rec = GradientRecord::new(g.clone(), 0, k as u64 + 1, i).unwrap();
            let delta = buffer_delta(rec, &mut workers[i]).unwrap();
            server_apply(&mut server, &delta, 1e-6).unwrap();
            prop_assert_eq!(&workers[i].g_tilde.as_ref().unwrap().values, &g);
            prop_assert!(server.aggregation_residual(&workers) <= 1e-9);
        }
    }

    #[test]
    fn dude_runs_keep_the_aggregate_exact(n in 1usize..7, std in 0.1f64..5.0, seed in any::<u64>()) {
        let obj = make_quadratic(n, 3, 1.0, 0.5, seed).unwrap();
        let speeds = SpeedModel::sample(n, 1.0, std, seed).unwrap();
        let spec = ScheduleSpec { init_barrier: true, seed, ..ScheduleSpec::new(AsyncMode::FullyAsync) };
        let trace = schedule_with(&speeds, &spec, 400).unwrap();
        let mut alg = DudeAsgd::new(ModelVector::zeros(3), speeds.speeds(), 0.1 / obj.smoothness()).unwrap();
        let opts = RecordOptions { snapshots: true, check_aggregate: true };
        let run = simulate(&obj, &mut alg, &trace, seed, opts).unwrap();
        prop_assert!(run.max_residual.unwrap() <= 1e-9);
        prop_assert!(run.records.iter().all(|r| r.grad_norm_sq >= 0.0));
        for r in &run.records {
            for (tau, d) in r.tau.iter().zip(&r.d) {
                if let (Some(tau), Some(d)) = (tau, d) {
                    prop_assert!(*tau > *d);
                }
            }
        }
    }

    #[test]
    fn partition_counts_are_consistent(n in 1usize..12, k in 1usize..6, m in 1usize..600, alpha in 0.05f64..50.0, seed in any::<u64>()) {
        let labels: Vec<usize> = (0..m).map(|j| (j * 7 + 3) % k).collect();
        let p = dirichlet_partition(&labels, n, alpha, seed).unwrap();
        prop_assert_eq!(p.assignment.len(), m);
        prop_assert_eq!(p.worker_sizes().iter().sum::<usize>(), m);
        for (class, row) in p.counts.iter().enumerate() {
            prop_assert_eq!(row.iter().sum::<usize>(), labels.iter().filter(|&&l| l == class).count());
        }
        for probs in &p.proportions {
            prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        for (j, &w) in p.assignment.iter().enumerate() {
            prop_assert!(w < n);
            prop_assert!(p.indices_of(w).contains(&j));
        }
        let sizes = p.worker_sizes();
        for &e in &p.empty_workers {
            prop_assert_eq!(sizes[e], 0);
        }
    }

    #[test]
    fn config_round_trips(
        workers in 1usize..20,
        iterations in 1u64..100_000,
        seeds in prop::collection::vec(any::<u32>(), 1..4),
        etas in prop::collection::vec(1e-5f64..1.0, 1..4),
        sigma in 0.0f64..3.0,
    ) {
        let cfg = RunConfig {
            schema_version: 1,
            workers,
            iterations,
            seeds: seeds.into_iter().map(u64::from).collect(),
            w0: None,
            objective: ObjectiveSpec::Quadratic { dim: 3, hetero: 0.5, sigma, seed: 1 },
            speeds: SpeedSpec::Sampled { mu: 1.0, std: 2.0, seed: 3 },
            stepsize: StepsizeSpec::Grid { values: etas },
            algorithms: vec![
                AlgorithmSpec::DudeAsgd { mode: AsyncMode::SemiAsync { c: workers } },
                AlgorithmSpec::Fedbuff { local_steps: 2, buffer: 1, eta_global: 1.0 },
                AlgorithmSpec::ShuffledAsgd { epoch_len: None },
            ],
            output: OutputSpec::default(),
        };
        let text = cfg.emit().unwrap();
        prop_assert_eq!(RunConfig::parse(&text).unwrap(), cfg);
    }
}

#[test]
fn noiseless_gradient_matches_full_gradient_at_optimum() {
    let q = make_quadratic(3, 4, 1.0, 0.0, 5).unwrap();
    let mut g = vec![0.0; 4];
    q.global_gradient(q.w_star(), &mut g);
    assert!(g.iter().all(|v| v.abs() < 1e-10));
}
