use serde::Serialize;

use crate::error::{Error, Result};
use crate::objectives::streams::{aux, aux_stream};
use crate::objectives::Objective;
use crate::state::{check_dim, norm, norm_sq, ModelVector};

/// Monte Carlo estimate of `E‖(1/n) Σ_i (∇f_i(w_i; ξ_i) − ∇F_i(w_i))‖²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarianceCheck {
    pub estimate: f64,
    /// `σ²/n`.
    pub bound: f64,
    pub samples: usize,
    /// `estimate ≤ bound·(1 + 5/√M)`.
    pub pass: bool,
}

/// `models[i]` is the (possibly stale) model worker `i` computes on.
pub fn lemma_variance_check(
    obj: &dyn Objective,
    models: &[ModelVector],
    samples: usize,
    seed: u64,
) -> Result<VarianceCheck> {
    let n = obj.workers();
    if models.len() != n {
        return Err(Error::invalid(format!(
            "need one model per worker ({n}), got {}",
            models.len()
        )));
    }
    if samples < 10_000 {
        return Err(Error::invalid(format!("need M >= 10000 resamples, got {samples}")));
    }
    let sigma = obj
        .noise_level()
        .ok_or_else(|| Error::invalid("variance check needs an objective with known sigma"))?;
    let p = obj.dim();
    let mut exact = Vec::with_capacity(n);
    for (i, w) in models.iter().enumerate() {
        check_dim(p, w.dim())?;
        let mut g = vec![0.0; p];
        obj.local_gradient(i, w.values(), &mut g);
        exact.push(g);
    }
    let mut rng = aux_stream(seed, aux::MONTE_CARLO);
    let mut g = vec![0.0; p];
    let mut avg = vec![0.0; p];
    let mut total = 0.0;
    for _ in 0..samples {
        avg.iter_mut().for_each(|v| *v = 0.0);
        for (i, w) in models.iter().enumerate() {
            obj.sample_gradient(i, w.values(), &mut rng, &mut g);
            for k in 0..p {
                avg[k] += (g[k] - exact[i][k]) / n as f64;
            }
        }
        total += norm_sq(&avg);
    }
    let estimate = total / samples as f64;
    let bound = sigma * sigma / n as f64;
    Ok(VarianceCheck {
        estimate,
        bound,
        samples,
        pass: estimate <= bound * (1.0 + 5.0 / (samples as f64).sqrt()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UnbiasednessCheck {
    /// `‖mean of M draws − ∇F_i(w)‖`.
    pub deviation: f64,
    /// `5σ/√M`.
    pub band: f64,
    pub pass: bool,
}

pub fn unbiasedness_check(
    obj: &dyn Objective,
    w: &ModelVector,
    worker: usize,
    samples: usize,
    seed: u64,
) -> Result<UnbiasednessCheck> {
    if samples == 0 {
        return Err(Error::invalid("need M >= 1"));
    }
    if worker >= obj.workers() {
        return Err(Error::UnknownWorker {
            worker,
            n: obj.workers(),
        });
    }
    check_dim(obj.dim(), w.dim())?;
    let sigma = obj
        .noise_level()
        .ok_or_else(|| Error::invalid("unbiasedness check needs an objective with known sigma"))?;
    let p = obj.dim();
    let mut exact = vec![0.0; p];
    obj.local_gradient(worker, w.values(), &mut exact);
    let mut rng = aux_stream(seed, aux::MONTE_CARLO);
    let mut g = vec![0.0; p];
    let mut sum = vec![0.0; p];
    for _ in 0..samples {
        obj.sample_gradient(worker, w.values(), &mut rng, &mut g);
        for k in 0..p {
            sum[k] += g[k] - exact[k];
        }
    }
    let deviation = norm(&sum) / samples as f64;
    let band = 5.0 * sigma / (samples as f64).sqrt();
    Ok(UnbiasednessCheck {
        deviation,
        band,
        pass: deviation <= band,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::make_quadratic;

    fn models(n: usize, p: usize) -> Vec<ModelVector> {
        (0..n)
            .map(|i| ModelVector::new((0..p).map(|k| (i + k) as f64 * 0.1).collect(), 0).unwrap())
            .collect()
    }

    #[test]
    fn noiseless_variance_is_zero() {
        let q = make_quadratic(3, 4, 1.0, 0.0, 1).unwrap();
        let c = lemma_variance_check(&q, &models(3, 4), 10_000, 2).unwrap();
        assert_eq!(c.estimate, 0.0);
        assert!(c.pass);
        let u = unbiasedness_check(&q, &models(1, 4)[0], 0, 100, 3).unwrap();
        assert_eq!(u.deviation, 0.0);
    }

    #[test]
    fn single_worker_variance_is_sigma_sq() {
        let q = make_quadratic(1, 5, 0.0, 0.8, 4).unwrap();
        let c = lemma_variance_check(&q, &models(1, 5), 40_000, 5).unwrap();
        assert!((c.estimate / 0.64 - 1.0).abs() < 0.03, "{}", c.estimate);
    }

    #[test]
    fn band_halves_with_four_times_samples() {
        let q = make_quadratic(2, 3, 1.0, 1.0, 6).unwrap();
        let w = ModelVector::zeros(3);
        let a = unbiasedness_check(&q, &w, 1, 1000, 7).unwrap();
        let b = unbiasedness_check(&q, &w, 1, 4000, 7).unwrap();
        assert!((a.band / b.band - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_small_m() {
        let q = make_quadratic(2, 3, 1.0, 1.0, 6).unwrap();
        assert!(lemma_variance_check(&q, &models(2, 3), 100, 0).is_err());
        assert!(lemma_variance_check(&q, &models(3, 3), 10_000, 0).is_err());
    }
}
