use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::Objective;
use crate::error::{Error, Result};

const MAX_ATTEMPTS: usize = 5;

/// `F_i(w) = ½ wᵀA_i w − b_iᵀw` with isotropic Gaussian gradient noise of
/// total variance `σ²` (per coordinate `σ²/p`).
#[derive(Debug, Clone)]
pub struct QuadraticObjective {
    p: usize,
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    a_bar: Vec<f64>,
    b_bar: Vec<f64>,
    sigma: f64,
    seed: u64,
    l_global: f64,
    l_local_max: f64,
    w_star: Vec<f64>,
    f_star: f64,
}

impl QuadraticObjective {
    /// Build from explicit per-worker matrices. Each `A_i` must be symmetric
    /// PSD and their average invertible.
    pub fn new(a: Vec<DMatrix<f64>>, b: Vec<DVector<f64>>, sigma: f64) -> Result<Self> {
        Self::with_seed(a, b, sigma, 0)
    }

    fn with_seed(a: Vec<DMatrix<f64>>, b: Vec<DVector<f64>>, sigma: f64, seed: u64) -> Result<Self> {
        let n = a.len();
        if n == 0 || b.len() != n {
            return Err(Error::invalid("need one (A_i, b_i) pair per worker"));
        }
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::invalid(format!("sigma must be >= 0, got {sigma}")));
        }
        let p = a[0].nrows();
        if p == 0 {
            return Err(Error::invalid("dimension must be >= 1"));
        }
        let mut l_local_max: f64 = 0.0;
        for (i, (ai, bi)) in a.iter().zip(&b).enumerate() {
            if ai.nrows() != p || ai.ncols() != p || bi.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    got: ai.ncols().max(bi.len()),
                });
            }
            let scale = 1.0 + ai.amax();
            if (ai - ai.transpose()).amax() > 1e-12 * scale {
                return Err(Error::invalid(format!("A_{i} is not symmetric")));
            }
            let eig = ai.clone().symmetric_eigen();
            if eig.eigenvalues.min() < -1e-10 * scale {
                return Err(Error::invalid(format!("A_{i} is not positive semidefinite")));
            }
            l_local_max = l_local_max.max(eig.eigenvalues.max());
        }
        let a_bar = a.iter().fold(DMatrix::zeros(p, p), |acc, m| acc + m) / n as f64;
        let b_bar = b.iter().fold(DVector::zeros(p), |acc, v| acc + v) / n as f64;
        let eig = a_bar.clone().symmetric_eigen();
        let (lo, hi) = (eig.eigenvalues.min(), eig.eigenvalues.max());
        if !(lo > 1e-12 * (1.0 + hi)) {
            return Err(Error::Singular { attempts: 1 });
        }
        let w_star = a_bar
            .clone()
            .cholesky()
            .ok_or(Error::Singular { attempts: 1 })?
            .solve(&b_bar);
        let f_star = -0.5 * b_bar.dot(&w_star);
        let flat = |m: &DMatrix<f64>| -> Vec<f64> {
            let mut v = Vec::with_capacity(p * p);
            for r in 0..p {
                for c in 0..p {
                    v.push(m[(r, c)]);
                }
            }
            v
        };
        Ok(Self {
            p,
            a: a.iter().map(flat).collect(),
            b: b.iter().map(|v| v.iter().copied().collect()).collect(),
            a_bar: flat(&a_bar),
            b_bar: b_bar.iter().copied().collect(),
            sigma,
            seed,
            l_global: hi,
            l_local_max,
            w_star: w_star.iter().copied().collect(),
            f_star,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `max_i λ_max(A_i)`, an upper bound on every local smoothness constant.
    pub fn local_smoothness_max(&self) -> f64 {
        self.l_local_max
    }

    pub fn w_star(&self) -> &[f64] {
        &self.w_star
    }

    pub fn a(&self, worker: usize) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.p, self.p, &self.a[worker])
    }

    pub fn b(&self, worker: usize) -> DVector<f64> {
        DVector::from_column_slice(&self.b[worker])
    }

    /// Same objective with `k` identical copies of every worker, so `F` is
    /// unchanged while `n` grows by a factor `k`.
    pub fn replicate(&self, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("replication factor must be >= 1"));
        }
        let mut out = self.clone();
        out.a = self.a.iter().flat_map(|m| std::iter::repeat_n(m.clone(), k)).collect();
        out.b = self.b.iter().flat_map(|v| std::iter::repeat_n(v.clone(), k)).collect();
        Ok(out)
    }

    pub fn with_sigma(&self, sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::invalid(format!("sigma must be >= 0, got {sigma}")));
        }
        let mut out = self.clone();
        out.sigma = sigma;
        Ok(out)
    }
}

fn matvec(m: &[f64], x: &[f64], out: &mut [f64]) {
    let p = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        let row = &m[r * p..(r + 1) * p];
        *o = row.iter().zip(x).map(|(a, b)| a * b).sum();
    }
}

fn quad_value(m: &[f64], b: &[f64], w: &[f64]) -> f64 {
    let mut aw = vec![0.0; w.len()];
    matvec(m, w, &mut aw);
    let quad: f64 = aw.iter().zip(w).map(|(a, b)| a * b).sum();
    let lin: f64 = b.iter().zip(w).map(|(a, b)| a * b).sum();
    0.5 * quad - lin
}

impl Objective for QuadraticObjective {
    fn workers(&self) -> usize {
        self.a.len()
    }

    fn dim(&self) -> usize {
        self.p
    }

    fn local_loss(&self, worker: usize, w: &[f64]) -> f64 {
        quad_value(&self.a[worker], &self.b[worker], w)
    }

    fn local_gradient(&self, worker: usize, w: &[f64], out: &mut [f64]) {
        matvec(&self.a[worker], w, out);
        for (o, b) in out.iter_mut().zip(&self.b[worker]) {
            *o -= b;
        }
    }

    fn sample_gradient(&self, worker: usize, w: &[f64], rng: &mut dyn RngCore, out: &mut [f64]) {
        self.local_gradient(worker, w, out);
        if self.sigma > 0.0 {
            let scale = self.sigma / (self.p as f64).sqrt();
            for o in out.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *o += scale * z;
            }
        }
    }

    fn smoothness(&self) -> f64 {
        self.l_global
    }

    fn noise_level(&self) -> Option<f64> {
        Some(self.sigma)
    }

    fn optimum(&self) -> Option<(Vec<f64>, f64)> {
        Some((self.w_star.clone(), self.f_star))
    }

    fn loss(&self, w: &[f64]) -> f64 {
        quad_value(&self.a_bar, &self.b_bar, w)
    }

    fn global_gradient(&self, w: &[f64], out: &mut [f64]) {
        matvec(&self.a_bar, w, out);
        for (o, b) in out.iter_mut().zip(&self.b_bar) {
            *o -= b;
        }
    }
}

fn random_orthogonal(p: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(p, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    g.qr().q()
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Seeded random test bed: `A_i = A₀ + h·S_i`, `b_i = b₀ + h·u_i`.
///
/// `A₀` has eigenvalues evenly spread over `[0.5, 1.5]`; each `S_i` is a
/// random PSD matrix with eigenvalues in `[0, 1]` and `u_i ~ N(0, I)`.
/// `hetero = 0` gives identical workers.
pub fn make_quadratic(n: usize, p: usize, hetero: f64, sigma: f64, seed: u64) -> Result<QuadraticObjective> {
    if n == 0 || p == 0 {
        return Err(Error::invalid("n and p must be >= 1"));
    }
    if !(hetero >= 0.0 && hetero.is_finite()) {
        return Err(Error::invalid(format!("hetero must be >= 0, got {hetero}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut jitter = 0.0;
    for attempt in 1..=MAX_ATTEMPTS {
        let q = random_orthogonal(p, &mut rng);
        let spectrum = DVector::from_fn(p, |k, _| if p == 1 { 1.0 } else { 0.5 + k as f64 / (p - 1) as f64 });
        let a0 = symmetrize(&q * DMatrix::from_diagonal(&spectrum) * q.transpose()) + DMatrix::identity(p, p) * jitter;
        let b0 = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut a = Vec::with_capacity(n);
        let mut b = Vec::with_capacity(n);
        for _ in 0..n {
            let r = random_orthogonal(p, &mut rng);
            let d = DVector::from_fn(p, |_, _| rng.random::<f64>());
            let s = symmetrize(&r * DMatrix::from_diagonal(&d) * r.transpose());
            let u = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
            a.push(&a0 + s * hetero);
            b.push(&b0 + u * hetero);
        }
        match QuadraticObjective::with_seed(a, b, sigma, seed) {
            Err(Error::Singular { .. }) => {
                log::warn!("singular average curvature on attempt {attempt}; adding jitter");
                jitter = if jitter == 0.0 { 1e-6 } else { jitter * 10.0 };
            }
            other => return other,
        }
    }
    Err(Error::Singular { attempts: MAX_ATTEMPTS })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{full_gradient, Target};
    use crate::state::ModelVector;

    #[test]
    fn homogeneous_workers_identical() {
        let q = make_quadratic(4, 3, 0.0, 1.0, 2).unwrap();
        for i in 1..4 {
            assert_eq!(q.a[i], q.a[0]);
            assert_eq!(q.b[i], q.b[0]);
        }
    }

    #[test]
    fn single_worker_minimizer() {
        let q = make_quadratic(1, 4, 2.0, 0.0, 3).unwrap();
        let direct = q.a(0).lu().solve(&q.b(0)).unwrap();
        for (a, b) in q.w_star().iter().zip(direct.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn gradient_vanishes_at_minimizer() {
        let q = make_quadratic(5, 6, 1.5, 0.3, 4).unwrap();
        let w = ModelVector::new(q.w_star().to_vec(), 0).unwrap();
        let g = full_gradient(&q, Target::All, &w).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-10));
        // global gradient equals the average of local ones
        let mut avg = [0.0; 6];
        for i in 0..5 {
            let gi = full_gradient(&q, Target::Worker(i), &w).unwrap();
            avg.iter_mut().zip(gi).for_each(|(a, b)| *a += b / 5.0);
        }
        assert!(avg.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn identity_gradient() {
        let q = QuadraticObjective::new(vec![DMatrix::identity(2, 2)], vec![DVector::zeros(2)], 0.0).unwrap();
        let w = ModelVector::new(vec![3.0, 4.0], 0).unwrap();
        assert_eq!(full_gradient(&q, Target::Worker(0), &w).unwrap(), vec![3.0, 4.0]);
        assert_eq!(q.loss(&[3.0, 4.0]), 12.5);
    }

    #[test]
    fn rejects_bad_matrices() {
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(QuadraticObjective::new(vec![asym], vec![DVector::zeros(2)], 0.0).is_err());
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(QuadraticObjective::new(vec![indefinite], vec![DVector::zeros(2)], 0.0).is_err());
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(
            QuadraticObjective::new(vec![singular], vec![DVector::zeros(2)], 0.0).unwrap_err(),
            Error::Singular { attempts: 1 }
        );
        assert!(make_quadratic(0, 2, 0.0, 0.0, 1).is_err());
        assert!(make_quadratic(2, 2, -1.0, 0.0, 1).is_err());
    }

    #[test]
    fn smoothness_bounds_gradient_differences() {
        let q = make_quadratic(3, 5, 1.0, 0.0, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let l = q.smoothness();
        assert!(l <= q.local_smoothness_max() + 1e-12);
        for _ in 0..200 {
            let x: Vec<f64> = (0..5).map(|_| rng.random_range(-5.0..5.0)).collect();
            let y: Vec<f64> = (0..5).map(|_| rng.random_range(-5.0..5.0)).collect();
            let (mut gx, mut gy) = (vec![0.0; 5], vec![0.0; 5]);
            q.global_gradient(&x, &mut gx);
            q.global_gradient(&y, &mut gy);
            let dg: f64 = gx.iter().zip(&gy).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let dw: f64 = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            assert!(dg <= l * dw * (1.0 + 1e-12));
        }
    }

    #[test]
    fn replicate_keeps_global_objective() {
        let q = make_quadratic(2, 3, 1.0, 0.2, 5).unwrap();
        let r = q.replicate(3).unwrap();
        assert_eq!(r.workers(), 6);
        let w = [0.3, -0.2, 1.0];
        assert!((q.loss(&w) - r.loss(&w)).abs() < 1e-12);
        let avg: f64 = (0..6).map(|i| r.local_loss(i, &w)).sum::<f64>() / 6.0;
        assert!((avg - q.loss(&w)).abs() < 1e-12);
    }

    #[test]
    fn noiseless_sample_equals_exact() {
        let q = make_quadratic(2, 4, 1.0, 0.0, 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let w = [1.0, 2.0, 3.0, 4.0];
        let (mut s, mut e) = (vec![0.0; 4], vec![0.0; 4]);
        q.sample_gradient(1, &w, &mut rng, &mut s);
        q.local_gradient(1, &w, &mut e);
        assert_eq!(s, e);
    }

    #[test]
    fn monte_carlo_noise_is_unbiased_with_exact_variance() {
        let sigma = 0.7;
        let q = make_quadratic(3, 4, 1.0, sigma, 8).unwrap();
        let w = [0.5, -1.0, 0.25, 2.0];
        let mut rng = crate::objectives::streams::aux_stream(8, crate::objectives::streams::aux::MONTE_CARLO);
        let m = 100_000;
        let mut exact = vec![0.0; 4];
        q.local_gradient(2, &w, &mut exact);
        let mut mean = vec![0.0; 4];
        let mut var = 0.0;
        let mut g = vec![0.0; 4];
        for _ in 0..m {
            q.sample_gradient(2, &w, &mut rng, &mut g);
            let mut sq = 0.0;
            for k in 0..4 {
                mean[k] += g[k] / m as f64;
                sq += (g[k] - exact[k]).powi(2);
            }
            var += sq / m as f64;
        }
        let bias: f64 = mean
            .iter()
            .zip(&exact)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(bias <= 4.0 * sigma / (m as f64).sqrt(), "bias {bias}");
        let ratio = var / (sigma * sigma);
        assert!((0.97..=1.03).contains(&ratio), "variance ratio {ratio}");
    }
}
