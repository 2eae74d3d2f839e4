use serde::{Deserialize, Serialize};

use crate::algorithms::AlgorithmSpec;
use crate::error::{Error, Result};
use crate::objectives::{make_logistic, make_quadratic, LogisticSpec, Objective};
use crate::simclock::SpeedModel;
use crate::state::ModelVector;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// One experiment: an objective, a speed model, algorithms, stepsize policy,
/// horizon, seeds and output location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Number of workers `n`.
    pub workers: usize,
    /// Server iterations `T`.
    pub iterations: u64,
    pub seeds: Vec<u64>,
    /// Initial model; zeros when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w0: Option<Vec<f64>>,
    pub objective: ObjectiveSpec,
    pub speeds: SpeedSpec,
    pub stepsize: StepsizeSpec,
    pub algorithms: Vec<AlgorithmSpec>,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObjectiveSpec {
    Quadratic {
        dim: usize,
        hetero: f64,
        sigma: f64,
        seed: u64,
    },
    Logistic {
        dim: usize,
        samples: usize,
        classes: usize,
        alpha: f64,
        #[serde(default = "default_batch")]
        batch_size: usize,
        #[serde(default = "default_reg")]
        reg: f64,
        seed: u64,
    },
}

fn default_batch() -> usize {
    64
}

fn default_reg() -> f64 {
    1e-3
}

impl ObjectiveSpec {
    pub fn dim(&self) -> usize {
        match self {
            ObjectiveSpec::Quadratic { dim, .. } | ObjectiveSpec::Logistic { dim, .. } => *dim,
        }
    }

    pub fn build(&self, n: usize) -> Result<Box<dyn Objective>> {
        Ok(match *self {
            ObjectiveSpec::Quadratic {
                dim,
                hetero,
                sigma,
                seed,
            } => Box::new(make_quadratic(n, dim, hetero, sigma, seed)?),
            ObjectiveSpec::Logistic {
                dim,
                samples,
                classes,
                alpha,
                batch_size,
                reg,
                seed,
            } => {
                let (obj, _) = make_logistic(&LogisticSpec {
                    workers: n,
                    dim,
                    samples,
                    classes,
                    alpha,
                    batch_size,
                    reg,
                    seed,
                })?;
                Box::new(obj)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpeedSpec {
    /// Truncated normal `TN(mu, std)`.
    Sampled {
        mu: f64,
        std: f64,
        seed: u64,
    },
    Fixed {
        values: Vec<f64>,
    },
}

impl SpeedSpec {
    pub fn build(&self, n: usize) -> Result<SpeedModel> {
        match self {
            SpeedSpec::Sampled { mu, std, seed } => SpeedModel::sample(n, *mu, *std, *seed),
            SpeedSpec::Fixed { values } => {
                if values.len() != n {
                    return Err(Error::Config(format!("{} fixed speeds for {n} workers", values.len())));
                }
                SpeedModel::fixed(values.clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepsizeSpec {
    Explicit {
        value: f64,
    },
    /// `½√(nΔ/(Lσ²τ_max T))`. `delta` defaults to `F(w⁰) − F*`, `tau_max` to
    /// the value observed on the schedule.
    Theory {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        delta: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tau_max: Option<u64>,
    },
    /// Run every value and keep the one with the lowest average `‖∇F‖²`.
    Grid {
        values: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Jsonl,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_dir")]
    pub dir: String,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
    /// Also write the delay trace of each run.
    #[serde(default)]
    pub trace: bool,
}

fn default_dir() -> String {
    "out".into()
}

fn default_formats() -> Vec<Format> {
    vec![Format::Jsonl, Format::Csv]
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            formats: default_formats(),
            trace: false,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn emit(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return bad(format!(
                "schema_version {} unsupported (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.workers == 0 {
            return bad("workers must be >= 1".into());
        }
        if self.iterations == 0 {
            return bad("iterations must be >= 1".into());
        }
        if self.seeds.is_empty() {
            return bad("need at least one seed".into());
        }
        if self.algorithms.is_empty() {
            return bad("need at least one algorithm".into());
        }
        if self.objective.dim() == 0 {
            return bad("objective dim must be >= 1".into());
        }
        if let Some(w0) = &self.w0 {
            if w0.len() != self.objective.dim() {
                return bad(format!(
                    "w0 has {} entries, objective dim is {}",
                    w0.len(),
                    self.objective.dim()
                ));
            }
        }
        match &self.stepsize {
            StepsizeSpec::Explicit { value } if !(*value > 0.0 && value.is_finite()) => {
                return bad(format!("stepsize must be > 0, got {value}"));
            }
            StepsizeSpec::Grid { values }
                if values.is_empty() || values.iter().any(|v| !(*v > 0.0 && v.is_finite())) =>
            {
                return bad("stepsize grid needs positive values".into());
            }
            _ => {}
        }
        if self.output.formats.is_empty() {
            return bad("need at least one output format".into());
        }
        for a in &self.algorithms {
            a.validate(self.workers).map_err(|e| Error::Config(e.to_string()))?;
        }
        self.speeds
            .build(self.workers)
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn initial_model(&self) -> Result<ModelVector> {
        match &self.w0 {
            Some(v) => ModelVector::new(v.clone(), 0),
            None => Ok(ModelVector::zeros(self.objective.dim())),
        }
    }
}
