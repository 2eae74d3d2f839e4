use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use super::config::{Format, RunConfig, StepsizeSpec};
use crate::algorithms::{theory_stepsize, AlgorithmSpec};
use crate::error::{Error, Result};
use crate::experiments::par_map;
use crate::metrics::{
    align_on_time_grid, config_hash, simulate, write_csv, write_jsonl, OutputHeader, RecordOptions, RunSummary,
    SCHEMA_VERSION,
};
use crate::objectives::Objective;
use crate::simclock::{observed_delays, SpeedModel, Trace};

pub struct SeedRun {
    pub seed: u64,
    pub summary: RunSummary,
    pub trace: Trace,
}

pub struct AlgorithmResult {
    pub spec: AlgorithmSpec,
    pub label: String,
    pub eta: f64,
    pub runs: Vec<SeedRun>,
    /// `(eta, mean avg ‖∇F‖²)` for every candidate; `None` if it blew up.
    pub candidates: Vec<(f64, Option<f64>)>,
    /// Wall-clock seconds for every candidate and seed; never written to metric files.
    pub wall_secs: f64,
}

impl AlgorithmResult {
    pub fn mean_avg_grad_norm_sq(&self) -> f64 {
        self.runs.iter().map(|r| r.summary.avg_grad_norm_sq()).sum::<f64>() / self.runs.len() as f64
    }

    pub fn mean_final_loss(&self) -> f64 {
        self.runs.iter().map(|r| r.summary.final_loss()).sum::<f64>() / self.runs.len() as f64
    }

    pub fn tau_max(&self) -> u64 {
        self.runs.iter().map(|r| r.summary.tau_max).max().unwrap_or(0)
    }
}

fn resolve_etas(cfg: &RunConfig, obj: &dyn Objective, traces: &[Trace]) -> Result<Vec<f64>> {
    Ok(match &cfg.stepsize {
        StepsizeSpec::Explicit { value } => vec![*value],
        StepsizeSpec::Grid { values } => values.clone(),
        StepsizeSpec::Theory { delta, tau_max } => {
            let sigma = obj
                .noise_level()
                .ok_or_else(|| Error::Config("theory stepsize needs an objective with known sigma".into()))?;
            let delta = match delta {
                Some(d) => *d,
                None => {
                    let (_, f_star) = obj
                        .optimum()
                        .ok_or_else(|| Error::Config("theory stepsize needs delta for this objective".into()))?;
                    obj.loss(cfg.initial_model()?.values()) - f_star
                }
            };
            let tau = match tau_max {
                Some(t) => *t,
                None => traces
                    .iter()
                    .map(|t| observed_delays(t).map(|d| d.tau_max))
                    .collect::<Result<Vec<_>>>()?
                    .into_iter()
                    .max()
                    .unwrap_or(1)
                    .max(1),
            };
            vec![theory_stepsize(
                cfg.workers,
                delta,
                obj.smoothness(),
                sigma,
                tau,
                cfg.iterations,
            )?]
        }
    })
}

struct Selected {
    eta: f64,
    runs: Vec<SeedRun>,
    candidates: Vec<(f64, Option<f64>)>,
}

fn run_algorithm(
    cfg: &RunConfig,
    obj: &dyn Objective,
    speeds: &SpeedModel,
    spec: &AlgorithmSpec,
    jobs: usize,
) -> Result<Selected> {
    let traces = par_map(&cfg.seeds, jobs, |&seed| spec.schedule(speeds, cfg.iterations, seed))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let etas = resolve_etas(cfg, obj, &traces)?;
    let w0 = cfg.initial_model()?;
    let work: Vec<(usize, usize)> = (0..etas.len())
        .flat_map(|e| (0..cfg.seeds.len()).map(move |s| (e, s)))
        .collect();
    let outcomes = par_map(&work, jobs, |&(e, s)| -> Result<RunSummary> {
        let mut alg = spec.build(w0.clone(), speeds.speeds(), etas[e])?;
        simulate(obj, alg.as_mut(), &traces[s], cfg.seeds[s], RecordOptions::default())
    });
    let mut per_eta: Vec<Vec<Result<RunSummary>>> = (0..etas.len()).map(|_| Vec::new()).collect();
    for ((e, _), r) in work.iter().zip(outcomes) {
        per_eta[*e].push(r);
    }
    let mut candidates = Vec::with_capacity(etas.len());
    let mut best: Option<(usize, f64)> = None;
    let mut first_err = None;
    for (e, runs) in per_eta.iter().enumerate() {
        let score = runs
            .iter()
            .map(|r| r.as_ref().map(RunSummary::avg_grad_norm_sq))
            .collect::<std::result::Result<Vec<_>, _>>();
        match score {
            Ok(v) => {
                let m = v.iter().sum::<f64>() / v.len() as f64;
                candidates.push((etas[e], Some(m)));
                if best.is_none_or(|(_, b)| m < b) {
                    best = Some((e, m));
                }
            }
            Err(err) => {
                log::warn!("{} with eta={} failed: {err}", spec.kind(), etas[e]);
                candidates.push((etas[e], None));
                first_err.get_or_insert_with(|| err.clone());
            }
        }
    }
    let Some((e, _)) = best else {
        return Err(first_err.expect("no candidate succeeded without an error"));
    };
    let runs = std::mem::take(&mut per_eta[e])
        .into_iter()
        .zip(cfg.seeds.iter().zip(traces))
        .map(|(r, (&seed, trace))| {
            Ok(SeedRun {
                seed,
                summary: r?,
                trace,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Selected {
        eta: etas[e],
        runs,
        candidates,
    })
}

/// Run every algorithm of the config on every seed.
pub fn execute(cfg: &RunConfig, jobs: usize) -> Result<Vec<AlgorithmResult>> {
    cfg.validate()?;
    let obj = cfg.objective.build(cfg.workers)?;
    let speeds = cfg.speeds.build(cfg.workers)?;
    let mut out = Vec::with_capacity(cfg.algorithms.len());
    for (k, spec) in cfg.algorithms.iter().enumerate() {
        let start = Instant::now();
        let Selected { eta, runs, candidates } = run_algorithm(cfg, obj.as_ref(), &speeds, spec, jobs)?;
        out.push(AlgorithmResult {
            spec: *spec,
            label: format!("{k}-{}", spec.kind()),
            eta,
            runs,
            candidates,
            wall_secs: start.elapsed().as_secs_f64(),
        });
    }
    Ok(out)
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(
        fs::File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?,
    ))
}

/// Write one metric file per (algorithm, seed, format). Returns the paths written.
pub fn write_outputs(cfg: &RunConfig, results: &[AlgorithmResult]) -> Result<Vec<PathBuf>> {
    let dir = PathBuf::from(&cfg.output.dir);
    fs::create_dir_all(&dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let text = cfg.emit()?;
    let hash = config_hash(&text);
    let mut written = Vec::new();
    for res in results {
        for run in &res.runs {
            let header = OutputHeader {
                schema_version: SCHEMA_VERSION,
                config_hash: hash.clone(),
                seed: run.seed,
                algorithm: res.spec.kind().to_string(),
                eta: res.eta,
                config: text.clone(),
            };
            let stem = format!("{}-seed{}", res.label, run.seed);
            for f in &cfg.output.formats {
                let path = match f {
                    Format::Jsonl => dir.join(format!("{stem}.jsonl")),
                    Format::Csv => dir.join(format!("{stem}.csv")),
                };
                let w = create(&path)?;
                match f {
                    Format::Jsonl => write_jsonl(w, &header, &run.summary.records)?,
                    Format::Csv => write_csv(w, &header, &run.summary.records)?,
                }
                written.push(path);
            }
            if cfg.output.trace {
                let path = dir.join(format!("{stem}.trace.jsonl"));
                run.trace.write_jsonl(create(&path)?)?;
                written.push(path);
            }
        }
    }
    Ok(written)
}

/// Seed-averaged `‖∇F‖²` of every algorithm on a shared virtual-time grid
/// spanning the shortest run.
pub fn write_comparison(cfg: &RunConfig, results: &[AlgorithmResult], points: usize) -> Result<PathBuf> {
    let horizon = results
        .iter()
        .flat_map(|r| r.runs.iter())
        .filter_map(|r| r.summary.records.last().map(|x| x.virtual_time))
        .fold(f64::INFINITY, f64::min);
    let points = points.max(2);
    let grid: Vec<f64> = (0..points).map(|k| horizon * k as f64 / (points - 1) as f64).collect();
    let mut columns = Vec::with_capacity(results.len());
    for res in results {
        let series: Vec<&[_]> = res.runs.iter().map(|r| &r.summary.records[..]).collect();
        let aligned = align_on_time_grid(&series, &grid);
        let col: Vec<Option<f64>> = (0..grid.len())
            .map(|k| {
                let vals: Vec<f64> = aligned.iter().filter_map(|s| s[k]).collect();
                (vals.len() == aligned.len()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
            })
            .collect();
        columns.push(col);
    }
    let dir = PathBuf::from(&cfg.output.dir);
    fs::create_dir_all(&dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let path = dir.join("compare.csv");
    let mut w = create(&path)?;
    use std::io::Write;
    writeln!(w, "# schema_version={SCHEMA_VERSION}")?;
    writeln!(w, "# config_hash={}", config_hash(&cfg.emit()?))?;
    writeln!(
        w,
        "# value: seed-averaged grad_norm_sq of the latest iterate at each virtual time"
    )?;
    let names: Vec<&str> = results.iter().map(|r| r.label.as_str()).collect();
    writeln!(w, "virtual_time,{}", names.join(","))?;
    for (k, s) in grid.iter().enumerate() {
        let cells: Vec<String> = columns
            .iter()
            .map(|c| c[k].map(|v| format!("{v:e}")).unwrap_or_default())
            .collect();
        writeln!(w, "{s},{}", cells.join(","))?;
    }
    w.flush()?;
    Ok(path)
}
