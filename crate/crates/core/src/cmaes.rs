//! (μ/μ_w, λ)-CMA-ES with the standard default strategy parameters.
//!
//! Rank-one plus rank-μ covariance update, cumulative step-size adaptation,
//! and a full eigendecomposition of `C` every generation (the problems here
//! have at most a few dozen dimensions). Non-finite objective values rank as
//! `+∞`. Runs are deterministic for a given seed.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CmaesConfig {
    /// Offspring per generation; `None` → `4 + ⌊3 ln dim⌋`.
    pub population: Option<usize>,
    pub sigma0: f64,
    /// Generation budget.
    pub max_iters: usize,
    /// Stop once the best value falls below this.
    pub target: Option<f64>,
    /// Stop once `σ·sqrt(max eig C)` falls below this.
    pub tol_x: f64,
    pub seed: u64,
}

impl Default for CmaesConfig {
    fn default() -> Self {
        CmaesConfig { population: None, sigma0: 0.5, max_iters: 1000, target: None, tol_x: 1e-14, seed: 0 }
    }
}

pub fn default_population(dim: usize) -> usize {
    4 + (3.0 * (dim as f64).ln()).floor() as usize
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    /// Best value of this generation.
    pub cost: f64,
    /// Best value seen so far.
    pub best_cost: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CmaesResult {
    pub best_x: Vec<f64>,
    pub best_f: f64,
    pub evaluations: usize,
    pub iterations: usize,
    pub trace: Vec<TraceRow>,
}

/// Minimises `objective` starting from `x0`.
pub fn minimize<F>(mut objective: F, x0: &[f64], cfg: &CmaesConfig) -> Result<CmaesResult>
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    if n == 0 {
        return Err(Error::invalid("CMA-ES needs dim >= 1"));
    }
    if !(cfg.sigma0 > 0.0) {
        return Err(Error::invalid("sigma0 must be positive"));
    }
    let nf = n as f64;
    let lambda = cfg.population.unwrap_or_else(|| default_population(n)).max(2);
    let mu = lambda / 2;
    let raw: Vec<f64> = (0..mu).map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - ((i + 1) as f64).ln()).collect();
    let wsum: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|w| w / wsum).collect();
    let mueff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();

    let cc = (4.0 + mueff / nf) / (nf + 4.0 + 2.0 * mueff / nf);
    let cs = (mueff + 2.0) / (nf + mueff + 5.0);
    let c1 = 2.0 / ((nf + 1.3).powi(2) + mueff);
    let cmu = (1.0 - c1).min(2.0 * (mueff - 2.0 + 1.0 / mueff) / ((nf + 2.0).powi(2) + mueff));
    let damps = 1.0 + 2.0 * (0.0_f64).max(((mueff - 1.0) / (nf + 1.0)).sqrt() - 1.0) + cs;
    let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));

    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut mean = DVector::from_column_slice(x0);
    let mut sigma = cfg.sigma0;
    let mut c = DMatrix::<f64>::identity(n, n);
    let mut b = DMatrix::<f64>::identity(n, n);
    let mut d = DVector::<f64>::from_element(n, 1.0);
    let mut pc = DVector::<f64>::zeros(n);
    let mut ps = DVector::<f64>::zeros(n);

    let eval = |f: &mut F, x: &[f64]| {
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let mut best_f = eval(&mut objective, x0);
    let mut best_x = x0.to_vec();
    let mut evaluations = 1;
    let mut trace = Vec::with_capacity(cfg.max_iters);
    let mut iterations = 0;

    for iter in 0..cfg.max_iters {
        iterations = iter + 1;
        let mut pop: Vec<(f64, DVector<f64>, DVector<f64>)> = Vec::with_capacity(lambda);
        for _ in 0..lambda {
            let z = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
            let y = &b * d.component_mul(&z);
            let x = &mean + sigma * &y;
            let fx = eval(&mut objective, x.as_slice());
            evaluations += 1;
            pop.push((fx, x, y));
        }
        pop.sort_by(|a, b| a.0.total_cmp(&b.0));
        if pop[0].0 < best_f {
            best_f = pop[0].0;
            best_x = pop[0].1.as_slice().to_vec();
        }
        trace.push(TraceRow { iter: iter + 1, cost: pop[0].0, best_cost: best_f });

        let old_mean = mean.clone();
        let mut y_w = DVector::<f64>::zeros(n);
        for (w, (_, _, y)) in weights.iter().zip(&pop) {
            y_w += *w * y;
        }
        mean = &old_mean + sigma * &y_w;

        // C^{-1/2} y_w = B D^{-1} B^T y_w
        let inv_sqrt_y = &b * (b.transpose() * &y_w).component_div(&d);
        ps = (1.0 - cs) * &ps + (cs * (2.0 - cs) * mueff).sqrt() * inv_sqrt_y;
        let ps_norm = ps.norm();
        let gen = (iter + 1) as f64;
        let hsig = ps_norm / (1.0 - (1.0 - cs).powf(2.0 * gen)).sqrt() / chi_n < 1.4 + 2.0 / (nf + 1.0);
        let hs = if hsig { 1.0 } else { 0.0 };
        pc = (1.0 - cc) * &pc + hs * (cc * (2.0 - cc) * mueff).sqrt() * &y_w;

        let mut rank_mu = DMatrix::<f64>::zeros(n, n);
        for (w, (_, _, y)) in weights.iter().zip(&pop) {
            rank_mu += *w * y * y.transpose();
        }
        let delta_h = (1.0 - hs) * cc * (2.0 - cc);
        c = (1.0 - c1 - cmu) * &c + c1 * (&pc * pc.transpose() + delta_h * &c) + cmu * rank_mu;
        sigma *= ((cs / damps) * (ps_norm / chi_n - 1.0)).exp();

        // keep C symmetric and decompose
        c = 0.5 * (&c + c.transpose());
        let eig = SymmetricEigen::new(c.clone());
        b = eig.eigenvectors;
        d = eig.eigenvalues.map(|e| e.max(1e-300).sqrt());

        if let Some(t) = cfg.target {
            if best_f <= t {
                break;
            }
        }
        if sigma * d.max() < cfg.tol_x || !sigma.is_finite() {
            break;
        }
    }
    Ok(CmaesResult { best_x, best_f, evaluations, iterations, trace })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn population_formula() {
        assert_eq!(default_population(1), 4);
        assert_eq!(default_population(14), 4 + (3.0 * 14f64.ln()).floor() as usize);
        assert_eq!(default_population(14), 11);
    }

    #[test]
    fn sphere_in_14_dimensions() {
        let cfg = CmaesConfig { max_iters: 2000 / default_population(14), sigma0: 1.0, seed: 3, ..CmaesConfig::default() };
        let r = minimize(|x| x.iter().map(|v| v * v).sum(), &[1.0; 14], &cfg).unwrap();
        assert!(r.evaluations <= 2001);
        assert!(r.best_f < 1e-8, "best {}", r.best_f);
    }

    #[test]
    fn one_dimensional_quadratic() {
        let cfg = CmaesConfig { max_iters: 300, seed: 1, ..CmaesConfig::default() };
        let r = minimize(|x| (x[0] - 0.3).powi(2), &[2.0], &cfg).unwrap();
        assert!((r.best_x[0] - 0.3).abs() < 1e-6);
    }

    #[test]
    fn deterministic_and_monotone_trace() {
        let cfg = CmaesConfig { max_iters: 50, seed: 9, ..CmaesConfig::default() };
        let f = |x: &[f64]| x.iter().enumerate().map(|(i, v)| (i + 1) as f64 * v * v).sum::<f64>();
        let a = minimize(f, &[0.5; 5], &cfg).unwrap();
        let b = minimize(f, &[0.5; 5], &cfg).unwrap();
        assert_eq!(a, b);
        for w in a.trace.windows(2) {
            assert!(w[1].best_cost <= w[0].best_cost);
        }
    }

    #[test]
    fn non_finite_values_rank_last() {
        let cfg = CmaesConfig { max_iters: 100, seed: 2, ..CmaesConfig::default() };
        let r = minimize(|x| if x[0] < 0.0 { f64::NAN } else { (x[0] - 1.0).powi(2) + x[1] * x[1] }, &[0.5, 0.5], &cfg).unwrap();
        assert!(r.best_f.is_finite() && r.best_f < 1e-6);
    }
}
