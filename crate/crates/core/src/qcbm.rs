//! Quantum circuit Born machine: layered Rx/Rz + all-to-all XX ansatz,
//! clipped negative log-likelihood, CMA-ES training, and the shot-count
//! efficiency experiment against rejection sampling.
//!
//! Basis index `x = (i << n) | j` — the time register occupies the high qubits
//! and the price register the low ones, matching the flattened
//! [`DiscreteDistribution`](crate::discretize::DiscreteDistribution).

use std::fmt::Write as _;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::cmaes::{self, CmaesConfig, TraceRow};
use crate::simulator::{run_zero, Circuit, Gate};
use crate::{Error, Result};

/// Default clipping floor for the log-likelihood.
pub const EPS_CLIP: f64 = 1e-8;

/// Odd layers (1st, 3rd, …) are `Rx, Rz` on every qubit; even layers are
/// `XX` on every pair `(a, b)`, `a < b`, in lexicographic order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QcbmAnsatz {
    pub n_qubits: usize,
    pub n_layers: usize,
}

impl QcbmAnsatz {
    pub fn new(n_qubits: usize, n_layers: usize) -> Result<Self> {
        if n_qubits == 0 || n_qubits > crate::simulator::MAX_QUBITS {
            return Err(Error::invalid(format!("QCBM needs 1..=24 qubits, got {n_qubits}")));
        }
        if n_layers == 0 {
            return Err(Error::invalid("QCBM needs at least one layer"));
        }
        Ok(QcbmAnsatz { n_qubits, n_layers })
    }

    fn layer_params(&self, layer: usize) -> usize {
        let n = self.n_qubits;
        if layer.is_multiple_of(2) {
            2 * n
        } else {
            n * (n - 1) / 2
        }
    }

    /// One parameter per gate.
    pub fn n_params(&self) -> usize {
        (0..self.n_layers).map(|l| self.layer_params(l)).sum()
    }

    /// The native circuit (XX gates kept as single gates).
    pub fn circuit(&self, theta: &[f64]) -> Result<Circuit> {
        if theta.len() != self.n_params() {
            return Err(Error::Dimension { expected: self.n_params(), got: theta.len() });
        }
        let n = self.n_qubits;
        let mut c = Circuit::new(n);
        let mut k = 0;
        for layer in 0..self.n_layers {
            if layer % 2 == 0 {
                for q in 0..n {
                    c.push(Gate::Rx(q, theta[k]));
                    c.push(Gate::Rz(q, theta[k + 1]));
                    k += 2;
                }
            } else {
                for a in 0..n {
                    for b in a + 1..n {
                        c.push(Gate::Xx(a, b, theta[k]));
                        k += 1;
                    }
                }
            }
        }
        Ok(c)
    }

    /// `(CNOTs, single-qubit gates)` after rewriting each XX as
    /// `H⊗H · CNOT · Rz · CNOT · H⊗H`.
    pub fn gate_counts(&self) -> (usize, usize) {
        let c = self.circuit(&vec![0.0; self.n_params()]).expect("parameter count matches").with_xx_decomposed();
        (c.cnot_count(), c.single_qubit_count())
    }
}

/// `p_θ(x) = |⟨x|ψ(θ)⟩|²`.
pub fn born_distribution(ansatz: &QcbmAnsatz, theta: &[f64]) -> Result<Vec<f64>> {
    Ok(run_zero(&ansatz.circuit(theta)?)?.probabilities())
}

/// `−Σ_x p_tg(x) log max(p_θ(x), ε)`.
pub fn clipped_nll(p_theta: &[f64], p_tg: &[f64], eps_clip: f64) -> Result<f64> {
    if p_theta.len() != p_tg.len() {
        return Err(Error::Dimension { expected: p_tg.len(), got: p_theta.len() });
    }
    if !(eps_clip > 0.0) {
        return Err(Error::invalid("eps_clip must be positive"));
    }
    Ok(-p_tg.iter().zip(p_theta).filter(|(t, _)| **t > 0.0).map(|(t, p)| t * p.max(eps_clip).ln()).sum::<f64>())
}

/// Shannon entropy `−Σ p log p`.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|v| **v > 0.0).map(|v| v * v.ln()).sum::<f64>()
}

/// Clipped NLL minus the target's entropy, so that a perfect fit scores 0.
pub fn rescaled_nll(p_theta: &[f64], p_tg: &[f64], eps_clip: f64) -> Result<f64> {
    Ok(clipped_nll(p_theta, p_tg, eps_clip)? - entropy(p_tg))
}

/// `KL(p‖q) = Σ p log(p/q)`; `q` is floored at `1e-300` so that the value
/// stays finite (and huge) when `q` misses support of `p`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Dimension { expected: p.len(), got: q.len() });
    }
    Ok(p.iter().zip(q).filter(|(a, _)| **a > 0.0).map(|(a, b)| a * (a / b.max(1e-300)).ln()).sum::<f64>().max(0.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QcbmTrainConfig {
    /// CMA-ES generations.
    pub iterations: usize,
    pub sigma0: f64,
    pub population: Option<usize>,
    /// `None` → exact Born probabilities; `Some(k)` → `k` measured shots per evaluation.
    pub shots: Option<u64>,
    pub eps_clip: f64,
    pub seed: u64,
    /// Starting point; `None` → uniform in `[-π, π)` drawn from `seed`.
    pub init: Option<Vec<f64>>,
}

impl Default for QcbmTrainConfig {
    fn default() -> Self {
        QcbmTrainConfig { iterations: 1500, sigma0: 0.5, population: None, shots: None, eps_clip: EPS_CLIP, seed: 0, init: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainResult {
    pub ansatz: QcbmAnsatz,
    pub params: Vec<f64>,
    /// Rescaled cost per generation.
    pub trace: Vec<TraceRow>,
    /// `KL(p_θ‖p_tg)` of the exact Born distribution at `params`.
    pub kl: f64,
    pub n_iters: usize,
    pub evaluations: usize,
}

/// Empirical distribution of `shots` draws from `p`.
pub fn measure<R: Rng>(p: &[f64], shots: u64, rng: &mut R) -> Vec<f64> {
    let mut cdf = Vec::with_capacity(p.len());
    let mut acc = 0.0;
    for v in p {
        acc += v;
        cdf.push(acc);
    }
    let mut counts = vec![0u64; p.len()];
    for _ in 0..shots {
        let u = rng.random::<f64>() * acc;
        counts[cdf.partition_point(|&c| c <= u).min(p.len() - 1)] += 1;
    }
    counts.iter().map(|&c| c as f64 / shots as f64).collect()
}

pub fn train_qcbm(ansatz: &QcbmAnsatz, target: &[f64], cfg: &QcbmTrainConfig) -> Result<TrainResult> {
    let dim = 1usize << ansatz.n_qubits;
    if target.len() != dim {
        return Err(Error::Dimension { expected: dim, got: target.len() });
    }
    if cfg.shots == Some(0) {
        return Err(Error::invalid("shot budget must be positive (or use exact mode)"));
    }
    let np = ansatz.n_params();
    let x0 = match &cfg.init {
        Some(v) if v.len() == np => v.clone(),
        Some(v) => return Err(Error::Dimension { expected: np, got: v.len() }),
        None => {
            let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed ^ 0x5eed_0c6b);
            (0..np).map(|_| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)).collect()
        }
    };
    let h = entropy(target);
    let mut shot_rng = ChaCha20Rng::seed_from_u64(cfg.seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let objective = |th: &[f64]| -> f64 {
        let Ok(p) = born_distribution(ansatz, th) else { return f64::INFINITY };
        let p = match cfg.shots {
            Some(k) => measure(&p, k, &mut shot_rng),
            None => p,
        };
        clipped_nll(&p, target, cfg.eps_clip).map(|c| c - h).unwrap_or(f64::INFINITY)
    };
    let ccfg = CmaesConfig { population: cfg.population, sigma0: cfg.sigma0, max_iters: cfg.iterations, target: None, tol_x: 1e-13, seed: cfg.seed };
    let r = cmaes::minimize(objective, &x0, &ccfg)?;
    let p = born_distribution(ansatz, &r.best_x)?;
    Ok(TrainResult {
        ansatz: *ansatz,
        kl: kl_divergence(&p, target)?,
        params: r.best_x,
        trace: r.trace,
        n_iters: r.iterations,
        evaluations: r.evaluations,
    })
}

/// Writes the `iter,cost,best_cost` trace.
pub fn write_trace<W: Write>(w: W, trace: &[TraceRow]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for row in trace {
        wr.serialize(row)?;
    }
    wr.flush().map_err(|e| Error::Io { path: "<trace>".into(), source: e })?;
    Ok(())
}

/// Text model file: `qcbm <n_qubits> <n_layers>` then one angle per line.
pub fn model_to_text(ansatz: &QcbmAnsatz, theta: &[f64]) -> String {
    let mut s = format!("qcbm {} {}\n", ansatz.n_qubits, ansatz.n_layers);
    for t in theta {
        let _ = writeln!(s, "{t:e}");
    }
    s
}

pub fn model_from_text(text: &str) -> Result<(QcbmAnsatz, Vec<f64>)> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (ln, header) = lines.next().ok_or(Error::Parse { line: 1, msg: "empty model file".into() })?;
    let f: Vec<&str> = header.split_whitespace().collect();
    if f.len() != 3 || f[0] != "qcbm" {
        return Err(Error::Parse { line: ln + 1, msg: "expected `qcbm <n_qubits> <n_layers>`".into() });
    }
    let num = |s: &str| s.parse::<usize>().map_err(|e| Error::Parse { line: ln + 1, msg: e.to_string() });
    let ansatz = QcbmAnsatz::new(num(f[1])?, num(f[2])?)?;
    let theta = lines
        .map(|(i, l)| l.trim().parse::<f64>().map_err(|e| Error::Parse { line: i + 1, msg: e.to_string() }))
        .collect::<Result<Vec<_>>>()?;
    if theta.len() != ansatz.n_params() {
        return Err(Error::Dimension { expected: ansatz.n_params(), got: theta.len() });
    }
    Ok((ansatz, theta))
}

/// Single discretised log-normal peak on `2^n` points spanning mean ± 3 sd.
pub fn lognormal_peak(n_qubits: usize, sigma: f64) -> Vec<f64> {
    let mean = (sigma * sigma / 2.0).exp();
    let sd = mean * ((sigma * sigma).exp() - 1.0).sqrt();
    let (lo, hi) = ((mean - 3.0 * sd).max(1e-9), mean + 3.0 * sd);
    let k = 1usize << n_qubits;
    let pdf = |s: f64| (-(s.ln()).powi(2) / (2.0 * sigma * sigma)).exp() / s;
    let w: Vec<f64> = (0..k).map(|j| pdf(lo + (hi - lo) * j as f64 / (k - 1).max(1) as f64)).collect();
    let z: f64 = w.iter().sum();
    w.iter().map(|v| v / z).collect()
}

/// Mean and variance of the outcome index under `p`.
pub fn index_moments(p: &[f64]) -> (f64, f64) {
    let mu: f64 = p.iter().enumerate().map(|(x, v)| x as f64 * v).sum();
    let var = p.iter().enumerate().map(|(x, v)| (x as f64 - mu).powi(2) * v).sum();
    (mu, var)
}

/// `count` accepted draws by rejection sampling from a uniform proposal.
pub fn rejection_sample<R: Rng>(p: &[f64], count: usize, rng: &mut R) -> Vec<usize> {
    let pmax = p.iter().cloned().fold(0.0, f64::max);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let x = rng.random_range(0..p.len());
        if rng.random::<f64>() * pmax < p[x] {
            out.push(x);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyRow {
    /// Shots per cost evaluation (QCBM) = accepted samples (rejection sampling).
    pub shots: u64,
    pub qcbm_eps_mu: f64,
    pub qcbm_eps_var: f64,
    pub mc_eps_mu: f64,
    pub mc_eps_var: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub n_qubits: usize,
    pub n_layers: usize,
    pub rows: Vec<EfficiencyRow>,
    /// QCBM median `ε_μ` is below the rejection-sampling median at the largest shot count.
    pub advantage: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyConfig {
    pub repeats: usize,
    /// CMA-ES generations per training run (0 → untrained random circuit).
    pub iterations: usize,
    pub lognormal_sigma: f64,
    pub seed: u64,
}

impl Default for EfficiencyConfig {
    fn default() -> Self {
        EfficiencyConfig { repeats: 10, iterations: 200, lognormal_sigma: 0.3, seed: 0 }
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// For each shot count `M`: the QCBM is trained from `M` measured shots per
/// cost evaluation and its exact Born moments are compared with the target's;
/// rejection sampling draws `M` samples. Medians over `repeats` runs.
pub fn efficiency_experiment(n_qubits: usize, n_layers: usize, shot_counts: &[u64], cfg: &EfficiencyConfig) -> Result<EfficiencyReport> {
    let ansatz = QcbmAnsatz::new(n_qubits, n_layers)?;
    let target = lognormal_peak(n_qubits, cfg.lognormal_sigma);
    let (mu_t, var_t) = index_moments(&target);
    let mut rows = Vec::with_capacity(shot_counts.len());
    for (si, &m) in shot_counts.iter().enumerate() {
        if m == 0 {
            return Err(Error::invalid("shot counts must be positive"));
        }
        let (mut qm, mut qv, mut cm, mut cv) = (vec![], vec![], vec![], vec![]);
        for r in 0..cfg.repeats {
            let seed = cfg.seed.wrapping_mul(1_000_003).wrapping_add((si * 1000 + r) as u64);
            let params = if cfg.iterations == 0 {
                let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed ^ (r as u64) << 8);
                (0..ansatz.n_params()).map(|_| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)).collect()
            } else {
                let tc = QcbmTrainConfig { iterations: cfg.iterations, shots: Some(m), seed, ..QcbmTrainConfig::default() };
                train_qcbm(&ansatz, &target, &tc)?.params
            };
            let (mu, var) = index_moments(&born_distribution(&ansatz, &params)?);
            qm.push((mu - mu_t).abs());
            qv.push((var - var_t).abs());

            let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0xabcdef);
            let xs = rejection_sample(&target, m as usize, &mut rng);
            let n = xs.len() as f64;
            let mu_s = xs.iter().map(|&x| x as f64).sum::<f64>() / n;
            let var_s = xs.iter().map(|&x| (x as f64 - mu_s).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            cm.push((mu_s - mu_t).abs());
            cv.push((var_s - var_t).abs());
        }
        rows.push(EfficiencyRow { shots: m, qcbm_eps_mu: median(qm), qcbm_eps_var: median(qv), mc_eps_mu: median(cm), mc_eps_var: median(cv) });
    }
    let advantage = rows.last().is_some_and(|r| r.qcbm_eps_mu < r.mc_eps_mu);
    Ok(EfficiencyReport { n_qubits, n_layers, rows, advantage })
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::StateVector;

    #[test]
    fn parameter_count_and_gate_counts() {
        let a = QcbmAnsatz::new(4, 2).unwrap();
        assert_eq!(a.n_params(), 14);
        let c = a.circuit(&[0.1; 14]).unwrap();
        assert_eq!(c.gates.len(), 14);
        assert_eq!(a.gate_counts(), (12, 38));
        assert_eq!(QcbmAnsatz::new(4, 4).unwrap().n_params(), 28);
        assert_eq!(QcbmAnsatz::new(3, 3).unwrap().n_params(), 6 + 3 + 6);
    }

    #[test]
    fn born_distribution_examples() {
        let a = QcbmAnsatz::new(3, 2).unwrap();
        let p = born_distribution(&a, &vec![0.0; a.n_params()]).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-15);

        let a1 = QcbmAnsatz::new(2, 1).unwrap();
        let p = born_distribution(&a1, &[std::f64::consts::FRAC_PI_2, 0.0, 0.0, 0.0]).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-12 && (p[1] - 0.5).abs() < 1e-12);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn born_distribution_matches_statevector_oracle() {
        let a = QcbmAnsatz::new(3, 3).unwrap();
        let th: Vec<f64> = (0..a.n_params()).map(|k| 0.37 * k as f64 - 1.1).collect();
        let p = born_distribution(&a, &th).unwrap();
        let mut psi = StateVector::zero(3);
        for g in a.circuit(&th).unwrap().with_xx_decomposed().gates {
            psi.apply_gate(&g);
        }
        for (x, y) in p.iter().zip(psi.probabilities()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn nll_examples() {
        let t = [0.1, 0.2, 0.3, 0.4];
        assert!(rescaled_nll(&t, &t, EPS_CLIP).unwrap().abs() < 1e-15);
        let p = [0.0, 0.5, 0.25, 0.25];
        let c = clipped_nll(&p, &t, 1e-8).unwrap();
        let hand = -(0.1 * (1e-8f64).ln() + 0.2 * 0.5f64.ln() + 0.3 * 0.25f64.ln() + 0.4 * 0.25f64.ln());
        assert!((c - hand).abs() < 1e-12);
        assert!(clipped_nll(&p, &t, 0.0).is_err());
    }

    #[test]
    fn kl_properties() {
        let p = [0.25, 0.25, 0.5];
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
        assert!(kl_divergence(&p, &[0.5, 0.25, 0.25]).unwrap() > 0.0);
    }

    #[test]
    fn point_mass_target_trains() {
        let a = QcbmAnsatz::new(2, 1).unwrap();
        let mut t = vec![0.0; 4];
        t[3] = 1.0;
        let cfg = QcbmTrainConfig { iterations: 300, seed: 1, ..QcbmTrainConfig::default() };
        let r = train_qcbm(&a, &t, &cfg).unwrap();
        assert!(r.kl < 1e-6, "kl {}", r.kl);
        for w in r.trace.windows(2) {
            assert!(w[1].best_cost <= w[0].best_cost);
        }
    }

    #[test]
    fn zero_shots_rejected() {
        let a = QcbmAnsatz::new(2, 1).unwrap();
        let cfg = QcbmTrainConfig { shots: Some(0), ..QcbmTrainConfig::default() };
        assert!(train_qcbm(&a, &[0.25; 4], &cfg).is_err());
    }

    #[test]
    fn model_text_round_trip() {
        let a = QcbmAnsatz::new(4, 2).unwrap();
        let th: Vec<f64> = (0..14).map(|k| (k as f64).sin() * 1e-3 + 0.1).collect();
        let (b, t2) = model_from_text(&model_to_text(&a, &th)).unwrap();
        assert_eq!(a, b);
        assert_eq!(th, t2);
    }

    #[test]
    fn rejection_sampling_follows_clt() {
        let p = lognormal_peak(4, 0.3);
        let cfg = EfficiencyConfig { repeats: 400, iterations: 0, ..EfficiencyConfig::default() };
        let rep = efficiency_experiment(4, 1, &[100, 1000, 10000], &cfg).unwrap();
        // CLT: median |sample mean − μ| = 0.6745·σ/√M; require agreement within a factor 1.5
        let sd = index_moments(&p).1.sqrt();
        for r in &rep.rows {
            let clt = 0.6745 * sd / (r.shots as f64).sqrt();
            let ratio = r.mc_eps_mu / clt;
            assert!((1.0 / 1.5..1.5).contains(&ratio), "M={} ratio {ratio}", r.shots);
        }
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // untrained: large and flat
        let q: Vec<f64> = rep.rows.iter().map(|r| r.qcbm_eps_mu).collect();
        assert!(q.iter().all(|v| (v - q[0]).abs() < 1e-12));
        assert!(q[0] > rep.rows[2].mc_eps_mu);
    }
}
