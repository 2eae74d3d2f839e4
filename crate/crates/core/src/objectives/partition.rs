use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};

/// Result of a Dirichlet label-skew split.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    /// Worker index for every sample.
    pub assignment: Vec<usize>,
    /// `proportions[k][i]`: drawn share of class `k` given to worker `i`.
    pub proportions: Vec<Vec<f64>>,
    /// `counts[k][i]`: realized number of class-`k` samples on worker `i`.
    pub counts: Vec<Vec<usize>>,
    /// Workers that received no samples at all.
    pub empty_workers: Vec<usize>,
}

impl Partition {
    pub fn classes(&self) -> usize {
        self.proportions.len()
    }

    pub fn worker_sizes(&self) -> Vec<usize> {
        let n = self.proportions.first().map_or(0, Vec::len);
        (0..n).map(|i| self.counts.iter().map(|row| row[i]).sum()).collect()
    }

    /// Indices of the samples assigned to `worker`, in original order.
    pub fn indices_of(&self, worker: usize) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter_map(|(k, &w)| (w == worker).then_some(k))
            .collect()
    }
}

fn draw_dirichlet(n: usize, alpha: f64, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let gamma = Gamma::new(alpha, 1.0).map_err(|e| Error::invalid(format!("gamma({alpha}): {e}")))?;
    // Tiny alphas can underflow every component; redraw in that case.
    for _ in 0..1000 {
        let g: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
        let s: f64 = g.iter().sum();
        if s > 0.0 && s.is_finite() {
            return Ok(g.into_iter().map(|x| x / s).collect());
        }
    }
    Err(Error::invalid(format!(
        "Dirichlet draw with alpha={alpha} kept underflowing"
    )))
}

/// For each class `k` draw `p_k ~ Dir_n(α)` (normalized Gamma draws), then send
/// each class-`k` sample to worker `i` independently with probability `p_{k,i}`.
///
/// Classes are `0..=max(labels)`. Workers left without samples are reported,
/// not rejected.
pub fn dirichlet_partition(labels: &[usize], n: usize, alpha: f64, seed: u64) -> Result<Partition> {
    if n == 0 {
        return Err(Error::invalid("need at least one worker"));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::invalid(format!("alpha must be > 0, got {alpha}")));
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let proportions = (0..classes)
        .map(|_| draw_dirichlet(n, alpha, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let pickers = proportions
        .iter()
        .map(|p| WeightedIndex::new(p).map_err(|e| Error::invalid(format!("class weights: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    let mut counts = vec![vec![0usize; n]; classes];
    let assignment: Vec<usize> = labels
        .iter()
        .map(|&k| {
            let i = if n == 1 { 0 } else { rng.sample(&pickers[k]) };
            counts[k][i] += 1;
            i
        })
        .collect();
    let mut sizes = vec![0usize; n];
    for &i in &assignment {
        sizes[i] += 1;
    }
    let empty_workers: Vec<usize> = (0..n).filter(|&i| sizes[i] == 0).collect();
    if !empty_workers.is_empty() {
        log::warn!("dirichlet partition left workers {empty_workers:?} without samples");
    }
    Ok(Partition {
        assignment,
        proportions,
        counts,
        empty_workers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_worker_gets_everything() {
        let labels: Vec<usize> = (0..100).map(|k| k % 7).collect();
        let p = dirichlet_partition(&labels, 1, 0.3, 1).unwrap();
        assert!(p.assignment.iter().all(|&w| w == 0));
        assert!(p.empty_workers.is_empty());
    }

    #[test]
    fn proportions_are_distributions() {
        let labels: Vec<usize> = (0..500).map(|k| k % 5).collect();
        let p = dirichlet_partition(&labels, 6, 0.05, 2).unwrap();
        for row in &p.proportions {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&x| (0.0..=1.0).contains(&x)));
        }
        assert_eq!(p.worker_sizes().iter().sum::<usize>(), 500);
        assert_eq!(p.indices_of(0).len(), p.worker_sizes()[0]);
    }

    #[test]
    fn deterministic_given_seed() {
        let labels: Vec<usize> = (0..300).map(|k| k % 3).collect();
        assert_eq!(
            dirichlet_partition(&labels, 4, 0.5, 9).unwrap(),
            dirichlet_partition(&labels, 4, 0.5, 9).unwrap()
        );
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(dirichlet_partition(&[0, 1], 0, 1.0, 0).is_err());
        assert!(dirichlet_partition(&[0, 1], 2, 0.0, 0).is_err());
        assert!(dirichlet_partition(&[0, 1], 2, f64::NAN, 0).is_err());
    }
}
