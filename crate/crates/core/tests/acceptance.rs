//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails.

use std::fs;
use std::path::Path;
use std::time::Instant;

use asgd_sim::cli::config::RunConfig;
use asgd_sim::cli::run::{execute, write_outputs};
use asgd_sim::cli::verify::{rate_setup, speedup_setup};
use asgd_sim::experiments::{
    aggregation_identity, bias_separation, delay_invariant_sweep, lemma_variance, noise_constants,
    partition_calibration, partition_uniformity, rate_experiment, reductions, semi_async_delays, speedup_experiment,
};
use asgd_sim::objectives::{make_quadratic, Objective};
use asgd_sim::state::norm_sq;

const SEED: u64 = 20240611;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn aggregation() -> Outcome {
    let start = Instant::now();
    let residual = aggregation_identity(8, 32, 10_000, SEED).expect("run");
    let secs = start.elapsed().as_secs_f64();
    outcome(
        residual <= 1e-9 && secs < 5.0,
        format!("max relative residual {residual:.3e} (<= 1e-9), {secs:.2}s (< 5s)"),
    )
}

fn dual_delay() -> Outcome {
    let cases = delay_invariant_sweep(&[2, 8, 32], &[1.0, 5.0], 50_000, SEED).expect("sweep");
    let violations: u64 = cases.iter().map(|c| c.violations).sum();
    let worst_tau = cases.iter().map(|c| c.tau_max).max().unwrap_or(0);
    outcome(
        violations == 0 && cases.len() == 2 * (3 + 4 + 4),
        format!(
            "{} schedules, {violations} violations, largest tau {worst_tau}",
            cases.len()
        ),
    )
}

fn reduction() -> Outcome {
    let r = reductions(8, 16, 1_000, SEED).expect("reductions");
    outcome(
        r.dude_lockstep_vs_sync <= 1e-12 && r.dude_synchronized_vs_siag <= 1e-12,
        format!(
            "lockstep vs sync {:.2e}, synchronized vs sIAG {:.2e} (<= 1e-12)",
            r.dude_lockstep_vs_sync, r.dude_synchronized_vs_siag
        ),
    )
}

/// Independent fixed-point oracle: plain gradient descent on `Σ p_i F_i`.
fn weighted_gap_by_descent(obj: &dyn Objective, weights: &[f64]) -> f64 {
    let p = obj.dim();
    let step = 0.5 / obj.smoothness();
    let mut w = vec![0.0; p];
    let (mut g, mut gi) = (vec![0.0; p], vec![0.0; p]);
    for _ in 0..200_000 {
        g.iter_mut().for_each(|v| *v = 0.0);
        for (i, &pi) in weights.iter().enumerate() {
            obj.local_gradient(i, &w, &mut gi);
            g.iter_mut().zip(&gi).for_each(|(a, b)| *a += pi * b);
        }
        if norm_sq(&g) < 1e-28 {
            break;
        }
        w.iter_mut().zip(&g).for_each(|(x, d)| *x -= step * d);
    }
    obj.global_gradient(&w, &mut g);
    norm_sq(&g)
}

fn bias() -> Outcome {
    let start = Instant::now();
    let b = bias_separation(4, [1.0, 10.0], 20_000, 0.1, SEED).expect("bias run");
    let secs = start.elapsed().as_secs_f64();
    let obj = make_quadratic(2, 4, 1.0, 0.0, SEED).expect("objective");
    let oracle = weighted_gap_by_descent(&obj, &b.weights);
    let agrees = (oracle / b.oracle_gap - 1.0).abs() < 1e-6;
    outcome(
        b.zeta_sq_at_optimum > 0.0
            && agrees
            && b.vanilla_grad_norm_sq >= 0.5 * oracle
            && b.dude_grad_norm_sq <= 1e-10
            && secs < 10.0,
        format!(
            "weights {:.3?}, zeta^2 {:.3e}, oracle gap {oracle:.4e}, vanilla {:.4e} (>= 0.5x), dude {:.3e} (<= 1e-10), {secs:.2}s",
            b.weights, b.zeta_sq_at_optimum, b.vanilla_grad_norm_sq, b.dude_grad_norm_sq
        ),
    )
}

fn lemma() -> Outcome {
    let v = lemma_variance(8, 16, 0.5, 100_000, SEED).expect("lemma");
    let ratio = v.estimate / v.bound;
    outcome(
        (0.97..=1.03).contains(&ratio),
        format!("estimate / (sigma^2/8) = {ratio:.4} (in [0.97, 1.03])"),
    )
}

fn rate() -> Outcome {
    let start = Instant::now();
    let grid = [1 << 10, 1 << 12, 1 << 14, 1 << 16];
    let (points, fit) = rate_experiment(rate_setup(SEED), &grid, &[SEED, SEED + 1, SEED + 2], 4).expect("rate");
    let secs = start.elapsed().as_secs_f64();
    let values: Vec<String> = points
        .iter()
        .map(|p| format!("{}:{:.3e}", p.iterations, p.value))
        .collect();
    outcome(
        (-0.65..=-0.35).contains(&fit.slope) && secs < 180.0,
        format!(
            "slope {:.4} (in [-0.65, -0.35]), r^2 {:.4}, [{}], {secs:.1}s",
            fit.slope,
            fit.r_squared,
            values.join(", ")
        ),
    )
}

fn speedup() -> Outcome {
    let s = speedup_experiment(speedup_setup(1 << 15, SEED), &[SEED, SEED + 1, SEED + 2]).expect("speedup");
    outcome(
        (3.0..=5.0).contains(&s.ratio) && s.small.tau_max.abs_diff(s.large.tau_max) <= 1,
        format!(
            "ratio {:.3} (in [3, 5]), tau_max n=4: {}, n=16 c=4: {}",
            s.ratio, s.small.tau_max, s.large.tau_max
        ),
    )
}

fn semi_async() -> Outcome {
    let n = 8;
    let d = semi_async_delays(n, &[2, 4, n], 4_000).expect("delays");
    let ok = d
        .semi_async
        .iter()
        .all(|&(c, t)| (t as f64 - d.fully_async_tau_max as f64 / c as f64).abs() <= 1.0);
    outcome(
        ok,
        format!(
            "fully async tau_max {}, (c, tau_max^(c)) {:?}",
            d.fully_async_tau_max, d.semi_async
        ),
    )
}

fn noise() -> Outcome {
    let checks = noise_constants(2, 8, 0.5, 100_000, SEED).expect("noise");
    let ok = checks
        .iter()
        .all(|c| c.unbiased.pass && (c.variance_ratio - 1.0).abs() <= c.variance_band);
    let parts: Vec<String> = checks
        .iter()
        .map(|c| {
            format!(
                "worker {}: bias {:.2e} (<= {:.2e}), var ratio {:.4} (+-{:.4})",
                c.worker, c.unbiased.deviation, c.unbiased.band, c.variance_ratio, c.variance_band
            )
        })
        .collect();
    outcome(ok, parts.join("; "))
}

const DETERMINISM_CONFIG: &str = r#"
schema_version = 1
workers = 10
iterations = 300
seeds = [1, 2]

[objective]
kind = "quadratic"
dim = 6
hetero = 1.0
sigma = 0.5
seed = 4

[speeds]
kind = "sampled"
mu = 1.0
std = 5.0
seed = 9

[stepsize]
kind = "grid"
values = [0.001, 0.005, 0.01]

[[algorithms]]
kind = "dude_asgd"
mode = { kind = "fully_async" }

[[algorithms]]
kind = "fedbuff"
local_steps = 2
buffer = 3

[[algorithms]]
kind = "uniform_asgd"

[output]
trace = true
"#;

fn run_into(dir: &Path, jobs: usize) -> Vec<(String, Vec<u8>)> {
    let mut cfg = RunConfig::parse(DETERMINISM_CONFIG).expect("config");
    cfg.output.dir = dir.display().to_string();
    let results = execute(&cfg, jobs).expect("run");
    let mut files: Vec<(String, Vec<u8>)> = write_outputs(&cfg, &results)
        .expect("write")
        .into_iter()
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn determinism() -> Outcome {
    // Same config, output directory included, run twice into the same place.
    let dir = tempfile::tempdir().unwrap();
    let first = run_into(dir.path(), 1);
    let second = run_into(dir.path(), 4);
    let identical = first == second;
    outcome(
        identical && !first.is_empty(),
        format!(
            "{} files, byte-identical across two executions (jobs 1 vs 4): {identical}",
            first.len()
        ),
    )
}

fn dirichlet() -> Outcome {
    let u = partition_uniformity(10, 10, 10_000, 1000.0, 0.10, SEED).expect("partition");
    let c = partition_calibration(10, 10, 10_000, 0.1, 4.0, SEED).expect("partition");
    outcome(
        u.cells_outside == 0 && c.violations == 0,
        format!(
            "alpha=1000: {}/{} cells outside 10% (max rel dev {:.3}); alpha=0.1: {}/{} cells outside 4 sigma (max z {:.2})",
            u.cells_outside, u.cells, u.max_rel_dev, c.violations, c.cells, c.max_z
        ),
    )
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("aggregation identity", aggregation),
        ("dual-delay invariant", dual_delay),
        ("reduction equivalences", reduction),
        ("heterogeneity bias separation", bias),
        ("averaged noise variance sigma^2/n", lemma),
        ("rate exponent", rate),
        ("linear speedup structure", speedup),
        ("semi-async delay relation", semi_async),
        ("unbiasedness and variance constants", noise),
        ("determinism", determinism),
        ("dirichlet partitioner", dirichlet),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        failed += usize::from(!o.pass);
        println!(
            "criterion {:>2} {}: {} | {}",
            k + 1,
            if o.pass { "PASS" } else { "FAIL" },
            name,
            o.detail
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
