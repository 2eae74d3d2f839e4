use rand::Rng;

use super::streams::{aux, aux_stream};
use super::Objective;
use crate::error::{Error, Result};
use crate::state::{norm_sq, ModelVector};

/// Heterogeneity constants estimated on a probe set.
///
/// The bounded-heterogeneity constant is a supremum over all `w`; these values
/// are maxima over finitely many probes and therefore lower estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct HeterogeneityReport {
    /// `ζ² = (1/n) Σ ζ_i²`.
    pub zeta_sq: f64,
    /// `ζ_max = max_i ζ_i`.
    pub zeta_max: f64,
    /// `ζ_i² = max_probe ‖∇F_i(w) − ∇F(w)‖²`.
    pub per_worker: Vec<f64>,
}

pub fn heterogeneity_report(obj: &dyn Objective, probes: &[ModelVector]) -> Result<HeterogeneityReport> {
    if probes.is_empty() {
        return Err(Error::invalid("need at least one probe point"));
    }
    let n = obj.workers();
    let p = obj.dim();
    let mut per_worker = vec![0.0f64; n];
    let mut global = vec![0.0; p];
    let mut local = vec![0.0; p];
    for w in probes {
        if w.dim() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: w.dim(),
            });
        }
        obj.global_gradient(w.values(), &mut global);
        for (i, best) in per_worker.iter_mut().enumerate() {
            obj.local_gradient(i, w.values(), &mut local);
            local.iter_mut().zip(&global).for_each(|(l, g)| *l -= g);
            *best = best.max(norm_sq(&local));
        }
    }
    let zeta_sq = per_worker.iter().sum::<f64>() / n as f64;
    let zeta_max = per_worker.iter().fold(0.0f64, |a, &b| a.max(b)).sqrt();
    Ok(HeterogeneityReport {
        zeta_sq,
        zeta_max,
        per_worker,
    })
}

/// `{w⁰, w*, 8 seeded random points}`; random coordinates are uniform in a
/// box that contains both anchors with unit margin.
pub fn default_probes(obj: &dyn Objective, w0: &ModelVector, seed: u64) -> Vec<ModelVector> {
    let mut probes = vec![w0.clone()];
    let mut radius = w0.values().iter().fold(0.0f64, |a, b| a.max(b.abs()));
    if let Some((w_star, _)) = obj.optimum() {
        radius = w_star.iter().fold(radius, |a, b| a.max(b.abs()));
        probes.push(ModelVector::new(w_star, 0).expect("finite minimizer"));
    }
    radius += 1.0;
    let mut rng = aux_stream(seed, aux::PROBES);
    for _ in 0..8 {
        let v = (0..obj.dim()).map(|_| rng.random_range(-radius..radius)).collect();
        probes.push(ModelVector::new(v, 0).expect("finite probe"));
    }
    probes
}
