use clap::ValueEnum;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::Result;
use crate::experiments::{
    aggregation_identity, bias_separation, delay_invariant_sweep, lemma_variance, noise_constants, rate_experiment,
    reductions, semi_async_delays, speedup_experiment, RateSetup, SpeedupSetup,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Invariants,
    Reductions,
    Bias,
    Rate,
    Lemma,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub pass: bool,
    pub detail: Value,
}

impl Check {
    fn new(name: &str, value: f64, lower: Option<f64>, upper: Option<f64>, detail: Value) -> Self {
        let pass = value.is_finite() && lower.is_none_or(|l| value >= l) && upper.is_none_or(|u| value <= u);
        Self {
            name: name.into(),
            value,
            lower,
            upper,
            pass,
            detail,
        }
    }

    fn at_most(name: &str, value: f64, upper: f64, detail: Value) -> Self {
        Self::new(name, value, None, Some(upper), detail)
    }

    fn within(name: &str, value: f64, lower: f64, upper: f64, detail: Value) -> Self {
        Self::new(name, value, Some(lower), Some(upper), detail)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub suite: Suite,
    pub seed: u64,
    pub quick: bool,
    pub pass: bool,
    pub checks: Vec<Check>,
}

/// Run one suite. `quick` shrinks horizons and sample counts for smoke tests;
/// thresholds stay the same.
pub fn run_suite(suite: Suite, seed: u64, quick: bool, jobs: usize) -> Result<Report> {
    let pick = |full: u64, small: u64| if quick { small } else { full };
    let mut checks = Vec::new();
    match suite {
        Suite::Invariants => {
            let residual = aggregation_identity(8, 32, pick(10_000, 1_000), seed)?;
            checks.push(Check::at_most(
                "aggregation_identity",
                residual,
                1e-9,
                json!({"n": 8, "p": 32}),
            ));
            let ns: &[usize] = if quick { &[2, 8] } else { &[2, 8, 32] };
            let cases = delay_invariant_sweep(ns, &[1.0, 5.0], pick(50_000, 2_000), seed)?;
            let total: u64 = cases.iter().map(|c| c.violations).sum();
            checks.push(Check::at_most(
                "dual_delay_invariant",
                total as f64,
                0.0,
                serde_json::to_value(&cases)?,
            ));
            let n = 8;
            let d = semi_async_delays(n, &[2, 4, n], pick(4_000, 400))?;
            for &(c, tau) in &d.semi_async {
                let predicted = d.fully_async_tau_max as f64 / c as f64;
                checks.push(Check::within(
                    &format!("semi_async_tau_max_c{c}"),
                    tau as f64,
                    predicted - 1.0,
                    predicted + 1.0,
                    json!({"fully_async_tau_max": d.fully_async_tau_max, "c": c}),
                ));
            }
        }
        Suite::Reductions => {
            let r = reductions(8, 16, pick(1_000, 200), seed)?;
            let detail = json!({"n": 8, "p": 16});
            checks.push(Check::at_most(
                "dude_lockstep_vs_sync",
                r.dude_lockstep_vs_sync,
                1e-12,
                detail.clone(),
            ));
            checks.push(Check::at_most(
                "dude_synchronized_vs_siag",
                r.dude_synchronized_vs_siag,
                1e-12,
                detail.clone(),
            ));
            checks.push(Check::at_most(
                "siag_full_vs_sync",
                r.siag_full_vs_sync,
                1e-12,
                detail.clone(),
            ));
            checks.push(Check::at_most(
                "fedbuff_single_step_vs_sync",
                r.fedbuff_single_step_vs_sync,
                1e-12,
                detail,
            ));
        }
        Suite::Bias => {
            let b = bias_separation(4, [1.0, 10.0], pick(20_000, 5_000), 0.1, seed)?;
            let detail = serde_json::to_value(&b)?;
            checks.push(Check::new(
                "vanilla_plateau_over_oracle_gap",
                b.vanilla_grad_norm_sq / b.oracle_gap,
                Some(0.5),
                None,
                detail.clone(),
            ));
            checks.push(Check::at_most("dude_grad_norm_sq", b.dude_grad_norm_sq, 1e-10, detail));
            let m = pick(100_000, 10_000) as usize;
            for c in noise_constants(2, 8, 0.5, m, seed)? {
                let detail = serde_json::to_value(&c)?;
                checks.push(Check::at_most(
                    &format!("unbiased_worker{}", c.worker),
                    c.unbiased.deviation,
                    c.unbiased.band,
                    detail.clone(),
                ));
                checks.push(Check::within(
                    &format!("variance_worker{}", c.worker),
                    c.variance_ratio,
                    1.0 - c.variance_band,
                    1.0 + c.variance_band,
                    detail,
                ));
            }
        }
        Suite::Lemma => {
            let v = lemma_variance(8, 16, 0.5, pick(100_000, 10_000) as usize, seed)?;
            checks.push(Check::within(
                "variance_over_sigma_sq_by_n",
                v.estimate / v.bound,
                0.97,
                1.03,
                serde_json::to_value(v)?,
            ));
        }
        Suite::Rate => {
            let grid: Vec<u64> = if quick {
                vec![1 << 8, 1 << 10, 1 << 12]
            } else {
                vec![1 << 10, 1 << 12, 1 << 14, 1 << 16]
            };
            let (points, fit) = rate_experiment(rate_setup(seed), &grid, &[seed, seed + 1, seed + 2], jobs)?;
            checks.push(Check::within(
                "rate_slope",
                fit.slope,
                -0.65,
                -0.35,
                json!({"fit": fit, "points": points}),
            ));
            let s = speedup_experiment(speedup_setup(pick(1 << 15, 1 << 12), seed), &[seed, seed + 1, seed + 2])?;
            checks.push(Check::within(
                "speedup_ratio_n4_n16",
                s.ratio,
                3.0,
                5.0,
                serde_json::to_value(&s)?,
            ));
        }
    }
    let pass = checks.iter().all(|c| c.pass);
    Ok(Report {
        suite,
        seed,
        quick,
        pass,
        checks,
    })
}

/// `n = 4` against `n = 16` at a fixed stepsize.
pub fn speedup_setup(iterations: u64, seed: u64) -> SpeedupSetup {
    SpeedupSetup {
        n: 4,
        factor: 4,
        p: 8,
        sigma: 0.5,
        eta: 0.02,
        iterations,
        seed,
    }
}

/// Objective and speeds of the rate suite.
pub fn rate_setup(seed: u64) -> RateSetup {
    RateSetup {
        n: 8,
        p: 16,
        sigma: 0.5,
        hetero: 1.0,
        speed_std: 1.0,
        seed,
    }
}
