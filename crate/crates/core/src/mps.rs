//! Matrix-product-state generative model: NLL training with two-site sweeps
//! and compilation of a trained model into CNOT + single-qubit gates.
//!
//! Site ℓ (0-based, left to right) carries bit `x_ℓ` of the bitstring read
//! most-significant first, i.e. site ℓ ↔ qubit `n−1−ℓ` of the simulator. With
//! the time register in the high bits this puts the time sites first.
//!
//! Tensors are real: the model is a Born machine over non-negative data, and
//! real amplitudes suffice.
//!
//! Compilation: the model is brought to left-canonical form and generated
//! from the right. With `D = 2^d`, each site ℓ ≥ d+1 becomes an isometry from
//! the `d`-qubit bond register to (bond ⊗ physical) on a `(d+1)`-qubit window;
//! sites `0..=d` merge into one final `(d+1)`-qubit unitary. That is `n−d`
//! unitaries, each synthesised exactly (KAK for two qubits, quantum Shannon
//! decomposition beyond).

use std::collections::HashMap;
use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{self, CMat};
use crate::simulator::{run_zero, state_fidelity, Circuit, StateVector};
use crate::{Error, Result};

/// One site tensor `A[l, x, r]`, stored at `(l·2 + x)·dr + r`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiteTensor {
    pub dl: usize,
    pub dr: usize,
    pub data: Vec<f64>,
}

impl SiteTensor {
    pub fn zeros(dl: usize, dr: usize) -> Self {
        SiteTensor { dl, dr, data: vec![0.0; dl * 2 * dr] }
    }

    #[inline]
    pub fn get(&self, l: usize, x: usize, r: usize) -> f64 {
        self.data[(l * 2 + x) * self.dr + r]
    }

    #[inline]
    pub fn set(&mut self, l: usize, x: usize, r: usize, v: f64) {
        self.data[(l * 2 + x) * self.dr + r] = v;
    }

    /// `(dl·2) × dr` matrix, rows `(l, x)`.
    fn left_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dl * 2, self.dr, &self.data)
    }

    fn from_left_matrix(m: &DMatrix<f64>, dl: usize) -> Self {
        let dr = m.ncols();
        let mut t = SiteTensor::zeros(dl, dr);
        for row in 0..dl * 2 {
            for r in 0..dr {
                t.data[row * dr + r] = m[(row, r)];
            }
        }
        t
    }

    /// `dl × (2·dr)` matrix, columns `(x, r)`.
    fn right_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dl, 2 * self.dr, |l, c| self.get(l, c / self.dr, c % self.dr))
    }

    fn from_right_matrix(m: &DMatrix<f64>, dr: usize) -> Self {
        let dl = m.nrows();
        let mut t = SiteTensor::zeros(dl, dr);
        for l in 0..dl {
            for c in 0..2 * dr {
                t.set(l, c / dr, c % dr, m[(l, c)]);
            }
        }
        t
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MpsModel {
    pub tensors: Vec<SiteTensor>,
    /// Bond-dimension cap `D`.
    pub max_bond: usize,
}

impl MpsModel {
    pub fn new(tensors: Vec<SiteTensor>, max_bond: usize) -> Result<Self> {
        let m = MpsModel { tensors, max_bond };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.tensors.len();
        if n == 0 {
            return Err(Error::invalid("MPS needs at least one site"));
        }
        if self.tensors[0].dl != 1 {
            return Err(Error::Dimension { expected: 1, got: self.tensors[0].dl });
        }
        if self.tensors[n - 1].dr != 1 {
            return Err(Error::Dimension { expected: 1, got: self.tensors[n - 1].dr });
        }
        for w in self.tensors.windows(2) {
            if w[0].dr != w[1].dl {
                return Err(Error::Dimension { expected: w[0].dr, got: w[1].dl });
            }
        }
        for t in &self.tensors {
            if t.data.len() != t.dl * 2 * t.dr {
                return Err(Error::Dimension { expected: t.dl * 2 * t.dr, got: t.data.len() });
            }
        }
        Ok(())
    }

    pub fn n_sites(&self) -> usize {
        self.tensors.len()
    }

    /// `[1, d_1, …, d_{n−1}, 1]`.
    pub fn bond_dims(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.tensors.iter().map(|t| t.dl).collect();
        v.push(1);
        v
    }

    /// Random model with Gaussian entries and bonds `min(D, 2^ℓ, 2^{n−ℓ})`.
    pub fn random(n_sites: usize, max_bond: usize, seed: u64) -> Result<Self> {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        Self::with_bonds(n_sites, max_bond, |_| StandardNormal.sample(&mut rng))
    }

    /// Random model with entries uniform in `(0, 1)`: every amplitude is
    /// positive, so every bitstring has non-zero probability.
    pub fn random_positive(n_sites: usize, max_bond: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        Self::with_bonds(n_sites, max_bond, |_| rng.random::<f64>())
    }

    fn with_bonds(n_sites: usize, max_bond: usize, mut f: impl FnMut(usize) -> f64) -> Result<Self> {
        if n_sites == 0 || max_bond == 0 {
            return Err(Error::invalid("MPS needs n_sites >= 1 and D >= 1"));
        }
        let bond = |b: usize| -> usize {
            // bond b sits between sites b−1 and b
            if b == 0 || b == n_sites {
                1
            } else {
                let cap = |k: usize| if k >= 20 { usize::MAX } else { 1usize << k };
                max_bond.min(cap(b)).min(cap(n_sites - b))
            }
        };
        let tensors = (0..n_sites)
            .map(|s| {
                let (dl, dr) = (bond(s), bond(s + 1));
                let data = (0..dl * 2 * dr).map(&mut f).collect();
                SiteTensor { dl, dr, data }
            })
            .collect();
        let mut m = MpsModel::new(tensors, max_bond)?;
        m.normalize();
        Ok(m)
    }

    /// `Ψ(x) = A^(0)_{x_0} ⋯ A^(n−1)_{x_{n−1}}`.
    pub fn evaluate(&self, bits: &[u8]) -> Result<f64> {
        if bits.len() != self.n_sites() {
            return Err(Error::Dimension { expected: self.n_sites(), got: bits.len() });
        }
        let mut v = vec![1.0];
        for (t, &b) in self.tensors.iter().zip(bits) {
            if b > 1 {
                return Err(Error::invalid("bitstring entries must be 0 or 1"));
            }
            v = row_times(&v, t, b as usize);
        }
        Ok(v[0])
    }

    /// Amplitude of a basis index (site ℓ ↔ bit `n−1−ℓ`).
    pub fn evaluate_index(&self, index: usize) -> f64 {
        let n = self.n_sites();
        let mut v = vec![1.0];
        for (s, t) in self.tensors.iter().enumerate() {
            v = row_times(&v, t, index >> (n - 1 - s) & 1);
        }
        v[0]
    }

    /// `Σ_x Ψ(x)²` through transfer matrices.
    pub fn norm_sq(&self) -> f64 {
        let mut e = DMatrix::<f64>::from_element(1, 1, 1.0);
        for t in &self.tensors {
            let mut ne = DMatrix::<f64>::zeros(t.dr, t.dr);
            for x in 0..2 {
                let a = DMatrix::from_fn(t.dl, t.dr, |l, r| t.get(l, x, r));
                ne += a.transpose() * &e * &a;
            }
            e = ne;
        }
        e[(0, 0)]
    }

    pub fn normalize(&mut self) {
        let n = self.norm_sq().sqrt();
        if n > 0.0 {
            let k = (1.0 / n).powf(1.0 / self.n_sites() as f64);
            for t in &mut self.tensors {
                t.data.iter_mut().for_each(|v| *v *= k);
            }
        }
    }

    /// Dense amplitudes over `2^n` basis indices.
    pub fn dense_amplitudes(&self) -> Result<Vec<f64>> {
        let n = self.n_sites();
        if n > crate::simulator::MAX_QUBITS {
            return Err(Error::invalid(format!("{n} sites is too many for a dense state")));
        }
        // contract left to right keeping (prefix index, bond) tables
        let mut cur: Vec<Vec<f64>> = vec![vec![1.0]];
        for t in &self.tensors {
            let mut next = Vec::with_capacity(cur.len() * 2);
            for v in &cur {
                for x in 0..2 {
                    next.push(row_times(v, t, x));
                }
            }
            cur = next;
        }
        Ok(cur.into_iter().map(|v| v[0]).collect())
    }

    /// Normalised Born probabilities over all `2^n` indices.
    pub fn probabilities(&self) -> Result<Vec<f64>> {
        let a = self.dense_amplitudes()?;
        let z: f64 = a.iter().map(|v| v * v).sum();
        Ok(a.iter().map(|v| v * v / z).collect())
    }

    /// QR sweep from the left: every site but the last becomes a left isometry.
    pub fn left_canonicalize(&mut self) {
        let n = self.n_sites();
        for s in 0..n.saturating_sub(1) {
            let t = &self.tensors[s];
            let qr = t.left_matrix().qr();
            let (q, r) = (qr.q(), qr.r());
            let dl = t.dl;
            self.tensors[s] = SiteTensor::from_left_matrix(&q, dl);
            let nx = &self.tensors[s + 1];
            let m = &r * nx.right_matrix();
            let dr = nx.dr;
            self.tensors[s + 1] = SiteTensor::from_right_matrix(&m, dr);
        }
    }

    /// LQ sweep from the right: every site but the first becomes a right isometry.
    pub fn right_canonicalize(&mut self) {
        let n = self.n_sites();
        for s in (1..n).rev() {
            let t = &self.tensors[s];
            // LQ of M = (QR of Mᵀ)ᵀ
            let qr = t.right_matrix().transpose().qr();
            let (q, r) = (qr.q().transpose(), qr.r().transpose());
            let dr = t.dr;
            self.tensors[s] = SiteTensor::from_right_matrix(&q, dr);
            let pv = &self.tensors[s - 1];
            let m = pv.left_matrix() * &r;
            let dl = pv.dl;
            self.tensors[s - 1] = SiteTensor::from_left_matrix(&m, dl);
        }
    }

    /// Max deviation of `Σ_x A_xᵀ A_x` from the identity at `site`.
    pub fn left_isometry_error(&self, site: usize) -> f64 {
        let m = self.tensors[site].left_matrix();
        let p = m.transpose() * &m;
        (&p - DMatrix::identity(p.nrows(), p.ncols())).abs().max()
    }

    /// TT-SVD of a dense amplitude vector, truncated to `max_bond`.
    pub fn from_amplitudes(amps: &[f64], max_bond: usize) -> Result<Self> {
        let dim = amps.len();
        if dim < 2 || !dim.is_power_of_two() {
            return Err(Error::invalid("amplitude vector length must be a power of two >= 2"));
        }
        let n = dim.trailing_zeros() as usize;
        let mut tensors = Vec::with_capacity(n);
        let mut rest = DMatrix::from_row_slice(1, dim, amps);
        let mut dl = 1;
        for _ in 0..n - 1 {
            let cols = rest.len() / (dl * 2);
            let m = DMatrix::from_row_slice(dl * 2, cols, rest.transpose().as_slice());
            let (u, s, vt) = svd_sorted(&m);
            let keep = s.iter().filter(|v| **v > 1e-14 * s[0].max(1e-300)).count().clamp(1, max_bond);
            let u = u.columns(0, keep).into_owned();
            tensors.push(SiteTensor::from_left_matrix(&u, dl));
            let sv = DMatrix::from_fn(keep, vt.ncols(), |i, j| s[i] * vt[(i, j)]);
            rest = sv;
            dl = keep;
        }
        let last = DMatrix::from_row_slice(dl * 2, 1, rest.transpose().as_slice());
        tensors.push(SiteTensor::from_left_matrix(&last, dl));
        let mut m = MpsModel::new(tensors, max_bond)?;
        m.normalize();
        Ok(m)
    }
}

#[inline]
fn row_times(v: &[f64], t: &SiteTensor, x: usize) -> Vec<f64> {
    let mut out = vec![0.0; t.dr];
    for (l, vl) in v.iter().enumerate() {
        if *vl == 0.0 {
            continue;
        }
        let base = (l * 2 + x) * t.dr;
        for (r, o) in out.iter_mut().enumerate() {
            *o += vl * t.data[base + r];
        }
    }
    out
}

#[inline]
fn times_col(t: &SiteTensor, x: usize, v: &[f64]) -> Vec<f64> {
    (0..t.dl).map(|l| (0..t.dr).map(|r| t.get(l, x, r) * v[r]).sum()).collect()
}

/// SVD with singular values sorted in descending order.
fn svd_sorted(m: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let svd = m.clone().svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|a, b| svd.singular_values[*b].total_cmp(&svd.singular_values[*a]));
    let us = DMatrix::from_fn(u.nrows(), idx.len(), |r, c| u[(r, idx[c])]);
    let vs = DMatrix::from_fn(idx.len(), vt.ncols(), |r, c| vt[(idx[r], c)]);
    (us, idx.iter().map(|&i| svd.singular_values[i]).collect(), vs)
}

/// A weighted training set of distinct basis indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub n_sites: usize,
    pub indices: Vec<usize>,
    /// Normalised to sum 1.
    pub weights: Vec<f64>,
}

impl Dataset {
    /// Empirical distribution of a sample list.
    pub fn from_samples(n_sites: usize, samples: &[usize]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("training set is empty"));
        }
        let mut counts: HashMap<usize, u64> = HashMap::new();
        for &s in samples {
            if s >> n_sites != 0 {
                return Err(Error::invalid(format!("sample {s} out of range for {n_sites} sites")));
            }
            *counts.entry(s).or_default() += 1;
        }
        let mut pairs: Vec<(usize, u64)> = counts.into_iter().collect();
        pairs.sort_unstable();
        let total = samples.len() as f64;
        Ok(Dataset { n_sites, indices: pairs.iter().map(|p| p.0).collect(), weights: pairs.iter().map(|p| p.1 as f64 / total).collect() })
    }

    /// Exact weights from a dense distribution (zero entries dropped).
    pub fn from_distribution(p: &[f64]) -> Result<Self> {
        if p.len() < 2 || !p.len().is_power_of_two() {
            return Err(Error::invalid("distribution length must be a power of two >= 2"));
        }
        let z: f64 = p.iter().sum();
        if !(z > 0.0) {
            return Err(Error::invalid("distribution has no mass"));
        }
        let (indices, weights) = p.iter().enumerate().filter(|(_, v)| **v > 0.0).map(|(i, v)| (i, v / z)).unzip();
        Ok(Dataset { n_sites: p.len().trailing_zeros() as usize, indices, weights })
    }

    pub fn entropy(&self) -> f64 {
        -self.weights.iter().map(|w| w * w.ln()).sum::<f64>()
    }

    fn bit(&self, s: usize, site: usize) -> usize {
        self.indices[s] >> (self.n_sites - 1 - site) & 1
    }
}

/// `−Σ_s w_s ln p_A(x_s)`.
pub fn nll(model: &MpsModel, data: &Dataset) -> f64 {
    let z = model.norm_sq();
    -data.indices.iter().zip(&data.weights).map(|(&i, w)| w * (model.evaluate_index(i).powi(2) / z).max(1e-300).ln()).sum::<f64>()
}

/// `KL(data ‖ model)` = NLL − entropy(data).
pub fn kl_data_model(model: &MpsModel, data: &Dataset) -> f64 {
    (nll(model, data) - data.entropy()).max(0.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MpsTrainConfig {
    pub max_bond: usize,
    /// Stop once KL(data‖model) is at or below this.
    pub kl_threshold: f64,
    /// Stop once the NLL changes by less than this between sweeps.
    pub delta_threshold: f64,
    /// Maximum number of sweeps (one sweep = left→right + right→left).
    pub max_sweeps: usize,
    pub learning_rate: f64,
    /// Gradient steps per bond visit.
    pub steps_per_bond: usize,
    /// Relative singular-value cutoff.
    pub cutoff: f64,
    pub seed: u64,
}

impl Default for MpsTrainConfig {
    fn default() -> Self {
        MpsTrainConfig {
            max_bond: 2,
            kl_threshold: 3e-5,
            delta_threshold: 1e-8,
            max_sweeps: 50,
            learning_rate: 0.05,
            steps_per_bond: 50,
            cutoff: 1e-10,
            seed: 0,
        }
    }
}

impl MpsTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.kl_threshold > 0.0 && self.delta_threshold > 0.0 && self.learning_rate > 0.0 && self.cutoff > 0.0) {
            return Err(Error::invalid("MPS training thresholds and learning rate must be positive"));
        }
        if self.max_bond == 0 || self.max_sweeps == 0 || self.steps_per_bond == 0 {
            return Err(Error::invalid("max_bond, max_sweeps and steps_per_bond must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    KlThreshold,
    ObjectiveDelta,
    MaxIterations,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MpsTrainResult {
    pub model: MpsModel,
    /// NLL after each sweep.
    pub nll_trace: Vec<f64>,
    /// `KL(data‖model)` at the end.
    pub kl: f64,
    pub n_iters: usize,
    pub stop: StopReason,
    pub seconds: f64,
}

struct Envs {
    /// `left[k][s]`: row vector `A^(0)_{x_0}⋯A^(k−1)_{x_{k−1}}`.
    left: Vec<Vec<Vec<f64>>>,
    /// `right[k][s]`: column vector `A^(k)_{x_k}⋯A^(n−1)_{x_{n−1}}`.
    right: Vec<Vec<Vec<f64>>>,
}

/// Merged two-site tensor `B[l, a, b, r]` at `(((l·2+a)·2+b)·dr + r)`.
fn merge(a: &SiteTensor, b: &SiteTensor) -> Vec<f64> {
    let (dl, dm, dr) = (a.dl, a.dr, b.dr);
    let mut out = vec![0.0; dl * 4 * dr];
    for l in 0..dl {
        for xa in 0..2 {
            for m in 0..dm {
                let av = a.get(l, xa, m);
                if av == 0.0 {
                    continue;
                }
                for xb in 0..2 {
                    for r in 0..dr {
                        out[((l * 2 + xa) * 2 + xb) * dr + r] += av * b.get(m, xb, r);
                    }
                }
            }
        }
    }
    out
}

/// Local NLL of the merged tensor and, optionally, its gradient.
fn local_objective(bt: &[f64], dl: usize, dr: usize, data: &Dataset, k: usize, envs: &Envs, grad: Option<&mut Vec<f64>>) -> f64 {
    let z: f64 = bt.iter().map(|v| v * v).sum();
    let mut val = z.ln();
    let mut g = grad;
    if let Some(g) = g.as_deref_mut() {
        g.iter_mut().zip(bt).for_each(|(gi, b)| *gi = 2.0 * b / z);
    }
    for s in 0..data.indices.len() {
        let (xa, xb) = (data.bit(s, k), data.bit(s, k + 1));
        let (lv, rv) = (&envs.left[k][s], &envs.right[k + 2][s]);
        let mut psi = 0.0;
        for l in 0..dl {
            if lv[l] == 0.0 {
                continue;
            }
            let base = ((l * 2 + xa) * 2 + xb) * dr;
            let mut acc = 0.0;
            for r in 0..dr {
                acc += bt[base + r] * rv[r];
            }
            psi += lv[l] * acc;
        }
        let w = data.weights[s];
        let p2 = (psi * psi).max(1e-300);
        val -= w * p2.ln();
        if let Some(g) = g.as_deref_mut() {
            let c = 2.0 * w / if psi.abs() < 1e-150 { 1e-150f64.copysign(psi) } else { psi };
            for l in 0..dl {
                if lv[l] == 0.0 {
                    continue;
                }
                let base = ((l * 2 + xa) * 2 + xb) * dr;
                for r in 0..dr {
                    g[base + r] -= c * lv[l] * rv[r];
                }
            }
        }
    }
    val
}

/// Trains an MPS on `data` by two-site gradient sweeps.
pub fn train_mps(data: &Dataset, cfg: &MpsTrainConfig) -> Result<MpsTrainResult> {
    cfg.validate()?;
    if data.indices.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let n = data.n_sites;
    if n < 2 {
        return Err(Error::invalid("MPS training needs at least two sites"));
    }
    let start = Instant::now();
    let mut model = MpsModel::random_positive(n, cfg.max_bond.min(2), cfg.seed)?;
    model.max_bond = cfg.max_bond;
    model.right_canonicalize();
    let ns = data.indices.len();
    let mut envs = Envs { left: vec![Vec::new(); n + 1], right: vec![Vec::new(); n + 1] };
    envs.left[0] = vec![vec![1.0]; ns];
    envs.right[n] = vec![vec![1.0]; ns];
    for k in (2..n).rev() {
        envs.right[k] = (0..ns).map(|s| times_col(&model.tensors[k], data.bit(s, k), &envs.right[k + 1][s])).collect();
    }

    let mut nll_trace = Vec::new();
    let mut prev = f64::INFINITY;
    let mut stop = StopReason::MaxIterations;
    let mut n_iters = 0;
    for sweep in 0..cfg.max_sweeps {
        n_iters = sweep + 1;
        for k in 0..n - 1 {
            update_bond(&mut model, data, &mut envs, k, true, cfg);
        }
        for k in (0..n - 1).rev() {
            update_bond(&mut model, data, &mut envs, k, false, cfg);
        }
        let cur = nll(&model, data);
        nll_trace.push(cur);
        if cur - data.entropy() <= cfg.kl_threshold {
            stop = StopReason::KlThreshold;
            break;
        }
        if (prev - cur).abs() < cfg.delta_threshold {
            stop = StopReason::ObjectiveDelta;
            break;
        }
        prev = cur;
    }
    model.normalize();
    let kl = kl_data_model(&model, data);
    Ok(MpsTrainResult { model, nll_trace, kl, n_iters, stop, seconds: start.elapsed().as_secs_f64() })
}

fn update_bond(model: &mut MpsModel, data: &Dataset, envs: &mut Envs, k: usize, moving_right: bool, cfg: &MpsTrainConfig) {
    let (a, b) = (&model.tensors[k], &model.tensors[k + 1]);
    let (dl, dr) = (a.dl, b.dr);
    let mut bt = merge(a, b);
    let nz = bt.iter().map(|v| v * v).sum::<f64>().sqrt();
    bt.iter_mut().for_each(|v| *v /= nz);
    let mut grad = vec![0.0; bt.len()];
    let mut cur = local_objective(&bt, dl, dr, data, k, envs, Some(&mut grad));
    let mut lr = cfg.learning_rate;
    for _ in 0..cfg.steps_per_bond {
        let mut accepted = false;
        for _ in 0..20 {
            let trial: Vec<f64> = bt.iter().zip(&grad).map(|(b, g)| b - lr * g).collect();
            let val = local_objective(&trial, dl, dr, data, k, envs, None);
            if val <= cur {
                let tn = trial.iter().map(|v| v * v).sum::<f64>().sqrt();
                bt = trial.into_iter().map(|v| v / tn).collect();
                cur = local_objective(&bt, dl, dr, data, k, envs, Some(&mut grad));
                accepted = true;
                break;
            }
            lr *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    // split B[(l,a),(b,r)]
    let m = DMatrix::from_row_slice(dl * 2, 2 * dr, &bt);
    let (u, s, vt) = svd_sorted(&m);
    let smax = s[0].max(1e-300);
    let keep = s.iter().filter(|v| **v > cfg.cutoff * smax).count().clamp(1, model.max_bond);
    let u = u.columns(0, keep).into_owned();
    let vt = vt.rows(0, keep).into_owned();
    if moving_right {
        let sv = DMatrix::from_fn(keep, vt.ncols(), |i, j| s[i] * vt[(i, j)]);
        model.tensors[k] = SiteTensor::from_left_matrix(&u, dl);
        model.tensors[k + 1] = SiteTensor::from_right_matrix(&sv, dr);
        let t = &model.tensors[k];
        envs.left[k + 1] = (0..data.indices.len()).map(|s_| row_times(&envs.left[k][s_], t, data.bit(s_, k))).collect();
    } else {
        let us = DMatrix::from_fn(u.nrows(), keep, |i, j| u[(i, j)] * s[j]);
        model.tensors[k] = SiteTensor::from_left_matrix(&us, dl);
        model.tensors[k + 1] = SiteTensor::from_right_matrix(&vt, dr);
        let t = &model.tensors[k + 1];
        envs.right[k + 1] = (0..data.indices.len()).map(|s_| times_col(t, data.bit(s_, k + 1), &envs.right[k + 2][s_])).collect();
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub n_qubits: usize,
    pub seconds: f64,
    pub n_iters: usize,
    pub kl: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub rows: Vec<ScalingRow>,
    /// Least-squares slope of log(seconds) vs log(n).
    pub slope: f64,
    /// Pearson correlation of the log-log points.
    pub correlation: f64,
}

/// Trains on each dataset (one per qubit count) and fits wall time ∝ n^slope.
pub fn training_scaling(datasets: &[Dataset], cfg: &MpsTrainConfig) -> Result<ScalingReport> {
    if datasets.len() < 2 {
        return Err(Error::DegenerateFit { needed: 2, got: datasets.len() });
    }
    let mut rows = Vec::new();
    for d in datasets {
        let r = train_mps(d, cfg)?;
        rows.push(ScalingRow { n_qubits: d.n_sites, seconds: r.seconds.max(1e-9), n_iters: r.n_iters, kl: r.kl });
    }
    let xs: Vec<f64> = rows.iter().map(|r| (r.n_qubits as f64).ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.seconds.ln()).collect();
    let (slope, correlation) = linear_fit(&xs, &ys);
    Ok(ScalingReport { rows, slope, correlation })
}

/// Slope and Pearson correlation of `y` against `x`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(ys).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = xs.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|b| (b - my).powi(2)).sum();
    (sxy / sxx, sxy / (sxx * syy).sqrt())
}

/// Circuit for a unitary on `qubits` (`qubits[0]` = least significant bit).
pub fn decompose_unitary(u: &CMat, qubits: &[usize], n_qubits: usize) -> Result<Circuit> {
    let (gates, phase) = linalg::synthesize(u, qubits)?;
    let mut c = Circuit::new(n_qubits);
    c.gates = gates;
    c.global_phase = phase;
    Ok(c)
}

/// Bracket on the CNOT count of a generic k-qubit unitary:
/// `[(4^k − 3k − 1)/4, (23/48)·4^k − (3/2)·2^k + 4/3]`.
pub fn cnot_bracket(k: usize) -> (f64, f64) {
    let f = 4f64.powi(k as i32);
    ((f - 3.0 * k as f64 - 1.0) / 4.0, 23.0 / 48.0 * f - 1.5 * 2f64.powi(k as i32) + 4.0 / 3.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockReport {
    /// Qubits the block acts on.
    pub width: usize,
    pub cnots: usize,
    pub bracket: (f64, f64),
}

#[derive(Clone, Debug)]
pub struct CompiledMps {
    pub circuit: Circuit,
    pub cnot_count: usize,
    pub single_qubit_count: usize,
    /// `|⟨compiled|model⟩|²`, when the dense state fits in memory.
    pub fidelity_vs_mps: Option<f64>,
    pub blocks: Vec<BlockReport>,
}

/// Completes orthonormal columns `v` (d × k) to a d × d unitary.
fn complete_unitary(v: &CMat) -> CMat {
    let (d, k) = (v.nrows(), v.ncols());
    let mut cols: Vec<nalgebra::DVector<C64>> = (0..k).map(|j| v.column(j).into_owned()).collect();
    let mut e = 0;
    while cols.len() < d {
        let mut c = nalgebra::DVector::<C64>::zeros(d);
        c[e] = C64::new(1.0, 0.0);
        e += 1;
        for _ in 0..2 {
            for q in &cols {
                let p = q.dotc(&c);
                c -= q * p;
            }
        }
        let nn = c.norm();
        if nn > 1e-8 {
            cols.push(c / C64::new(nn, 0.0));
        }
    }
    CMat::from_columns(&cols)
}

/// Compiles `model` into a circuit preparing its normalised state from
/// `|0…0⟩`. `D` is embedded upward to a power of two.
pub fn compile_mps(model: &MpsModel) -> Result<CompiledMps> {
    model.validate()?;
    let n = model.n_sites();
    let dmax = model.bond_dims().into_iter().max().unwrap_or(1).max(model.max_bond);
    let d = (dmax.next_power_of_two().trailing_zeros() as usize).max(1);
    if d > n / 2 {
        return Err(Error::BondTooLarge { d: dmax, max: 1usize << (n / 2) });
    }
    let mut m = model.clone();
    m.right_canonicalize();
    m.left_canonicalize();
    let z = m.norm_sq().sqrt();
    m.tensors[n - 1].data.iter_mut().for_each(|v| *v /= z);
    let w = d + 1;
    let dim = 1usize << w;
    let qubit = |site: usize| n - 1 - site;
    let mut circuit = Circuit::new(n);
    let mut blocks = Vec::new();
    let mut emit = |u: &CMat, sites_hi_to_lo: std::ops::RangeInclusive<usize>, circuit: &mut Circuit| -> Result<()> {
        // local bit b ↔ site (last − b)
        let last = *sites_hi_to_lo.end();
        let qs: Vec<usize> = (0..w).map(|b| qubit(last - b)).collect();
        let c = decompose_unitary(u, &qs, n)?;
        blocks.push(BlockReport { width: w, cnots: c.cnot_count(), bracket: cnot_bracket(w) });
        circuit.global_phase += c.global_phase;
        circuit.gates.extend(c.gates);
        Ok(())
    };
    // sites n−1 down to d+1: isometry |r⟩|0⟩ → Σ A[l,x,r] |l⟩|x⟩
    for site in (d + 1..n).rev() {
        let t = &m.tensors[site];
        let mut v = CMat::zeros(dim, t.dr);
        for l in 0..t.dl {
            for x in 0..2 {
                for r in 0..t.dr {
                    v[(x + 2 * l, r)] = C64::new(t.get(l, x, r), 0.0);
                }
            }
        }
        let u = complete_unitary(&v);
        emit(&u, site - d..=site, &mut circuit)?;
    }
    // sites 0..=d merged: |r⟩ (bond into site d+1) → Σ (A^(0)⋯A^(d))[x, r] |x⟩
    let dr = m.tensors[d].dr;
    let mut v = CMat::zeros(dim, dr);
    for idx in 0..dim {
        // local bit b ↔ site d − b
        let mut row = vec![1.0];
        for site in 0..=d {
            row = row_times(&row, &m.tensors[site], idx >> (d - site) & 1);
        }
        for (r, val) in row.iter().enumerate() {
            v[(idx, r)] = C64::new(*val, 0.0);
        }
    }
    let u = complete_unitary(&v);
    emit(&u, 0..=d, &mut circuit)?;

    // keep identity runs so the single-qubit count is structural
    let circuit = linalg::fuse_single_qubit_runs(&circuit, false);
    let fidelity_vs_mps = if n <= 20 {
        let psi = run_zero(&circuit)?;
        let amps = m.dense_amplitudes()?;
        let target = StateVector::from_amplitudes(amps.iter().map(|a| C64::new(*a, 0.0)).collect())?;
        Some(state_fidelity(&psi, &target)?)
    } else {
        None
    };
    Ok(CompiledMps { cnot_count: circuit.cnot_count(), single_qubit_count: circuit.single_qubit_count(), circuit, fidelity_vs_mps, blocks })
}

/// Model file: `mps <n_sites> <max_bond>`, then per site `site <k> <dl> <dr>`
/// followed by the row-major entries on one line.
pub fn model_to_text(model: &MpsModel) -> String {
    let mut s = format!("mps {} {}\n", model.n_sites(), model.max_bond);
    for (k, t) in model.tensors.iter().enumerate() {
        let _ = writeln!(s, "site {k} {} {}", t.dl, t.dr);
        let vals: Vec<String> = t.data.iter().map(|v| format!("{v:e}")).collect();
        let _ = writeln!(s, "{}", vals.join(" "));
    }
    s
}

pub fn model_from_text(text: &str) -> Result<MpsModel> {
    let lines: Vec<(usize, &str)> = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()).collect();
    let perr = |line: usize, msg: &str| Error::Parse { line: line + 1, msg: msg.into() };
    let (l0, h) = *lines.first().ok_or_else(|| perr(0, "empty model file"))?;
    let f: Vec<&str> = h.split_whitespace().collect();
    if f.len() != 3 || f[0] != "mps" {
        return Err(perr(l0, "expected `mps <n_sites> <max_bond>`"));
    }
    let num = |s: &str, line: usize| s.parse::<usize>().map_err(|e| perr(line, &e.to_string()));
    let (n, max_bond) = (num(f[1], l0)?, num(f[2], l0)?);
    if lines.len() != 1 + 2 * n {
        return Err(perr(l0, "site count does not match header"));
    }
    let mut tensors = Vec::with_capacity(n);
    for k in 0..n {
        let (lh, hdr) = lines[1 + 2 * k];
        let g: Vec<&str> = hdr.split_whitespace().collect();
        if g.len() != 4 || g[0] != "site" || num(g[1], lh)? != k {
            return Err(perr(lh, "expected `site <k> <dl> <dr>`"));
        }
        let (dl, dr) = (num(g[2], lh)?, num(g[3], lh)?);
        let (ld, body) = lines[2 + 2 * k];
        let data = body.split_whitespace().map(|v| v.parse::<f64>().map_err(|e| perr(ld, &e.to_string()))).collect::<Result<Vec<_>>>()?;
        tensors.push(SiteTensor { dl, dr, data });
    }
    MpsModel::new(tensors, max_bond)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute-force contraction over every bond index assignment.
    fn brute_amplitude(m: &MpsModel, bits: &[u8]) -> f64 {
        let dims = m.bond_dims();
        let n = m.n_sites();
        let mut total = 0.0;
        let mut idx = vec![0usize; n + 1];
        loop {
            let mut prod = 1.0;
            for s in 0..n {
                prod *= m.tensors[s].get(idx[s], bits[s] as usize, idx[s + 1]);
            }
            total += prod;
            // odometer over internal bonds 1..n−1
            let mut b = 1;
            loop {
                if b >= n {
                    return total;
                }
                idx[b] += 1;
                if idx[b] < dims[b] {
                    break;
                }
                idx[b] = 0;
                b += 1;
            }
        }
    }

    #[test]
    fn product_model_amplitude() {
        let ts = vec![
            SiteTensor { dl: 1, dr: 1, data: vec![0.6, 0.8] },
            SiteTensor { dl: 1, dr: 1, data: vec![1.0, 0.0] },
            SiteTensor { dl: 1, dr: 1, data: vec![0.0, 1.0] },
        ];
        let m = MpsModel::new(ts, 1).unwrap();
        assert!((m.evaluate(&[1, 0, 1]).unwrap() - 0.8).abs() < 1e-15);
        assert_eq!(m.evaluate(&[1, 1, 1]).unwrap(), 0.0);
        assert!(m.evaluate(&[1, 0]).is_err());
    }

    #[test]
    fn random_model_matches_brute_force() {
        let m = MpsModel::random(4, 3, 11).unwrap();
        for x in 0..16usize {
            let bits: Vec<u8> = (0..4).map(|s| (x >> (3 - s) & 1) as u8).collect();
            let a = m.evaluate(&bits).unwrap();
            assert!((a - brute_amplitude(&m, &bits)).abs() < 1e-12);
            assert!((a - m.evaluate_index(x)).abs() < 1e-15);
        }
        let p: f64 = m.dense_amplitudes().unwrap().iter().map(|a| a * a).sum();
        assert!((p - 1.0).abs() < 1e-10);
    }

    #[test]
    fn canonical_forms_are_isometries_and_preserve_state() {
        let m = MpsModel::random(6, 4, 2).unwrap();
        let before = m.dense_amplitudes().unwrap();
        let mut l = m.clone();
        l.left_canonicalize();
        for s in 0..5 {
            assert!(l.left_isometry_error(s) < 1e-10);
        }
        let mut r = m.clone();
        r.right_canonicalize();
        for (a, b) in before.iter().zip(l.dense_amplitudes().unwrap()).chain(before.iter().zip(r.dense_amplitudes().unwrap())) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn tt_svd_is_exact_without_truncation() {
        let m = MpsModel::random(5, 4, 3).unwrap();
        let a = m.dense_amplitudes().unwrap();
        let m2 = MpsModel::from_amplitudes(&a, 4).unwrap();
        for (x, y) in a.iter().zip(m2.dense_amplitudes().unwrap()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn single_bitstring_learned_in_one_sweep() {
        let data = Dataset::from_samples(5, &[0b10110; 10]).unwrap();
        let cfg = MpsTrainConfig { max_sweeps: 1, kl_threshold: 1e-8, ..MpsTrainConfig::default() };
        let r = train_mps(&data, &cfg).unwrap();
        assert_eq!(r.n_iters, 1);
        assert!(r.kl < 1e-8, "kl {}", r.kl);
    }

    #[test]
    fn nll_bounded_by_entropy() {
        let m = MpsModel::random_positive(4, 2, 5).unwrap();
        let data = Dataset::from_samples(4, &[1, 2, 2, 3, 7, 7, 7, 15]).unwrap();
        assert!(nll(&m, &data) >= data.entropy());
        // a model equal to the empirical distribution attains the entropy
        let mut p = vec![0.0; 16];
        for (i, w) in data.indices.iter().zip(&data.weights) {
            p[*i] = w.sqrt();
        }
        let exact = MpsModel::from_amplitudes(&p, 4).unwrap();
        assert!((nll(&exact, &data) - data.entropy()).abs() < 1e-10);
    }

    #[test]
    fn training_reduces_objective() {
        let m = MpsModel::random_positive(6, 2, 9).unwrap();
        let p = m.probabilities().unwrap();
        let data = Dataset::from_distribution(&p).unwrap();
        let r = train_mps(&data, &MpsTrainConfig { max_sweeps: 6, seed: 1, ..MpsTrainConfig::default() }).unwrap();
        assert!(r.kl < 1e-3, "kl {}", r.kl);
        for w in r.nll_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn compile_counts_for_bond_two() {
        for (n, cx, sq) in [(4usize, 9usize, 19usize), (6, 15, 31)] {
            let m = MpsModel::random(n, 2, n as u64).unwrap();
            let c = compile_mps(&m).unwrap();
            assert_eq!(c.cnot_count, cx);
            assert_eq!(c.single_qubit_count, sq);
            assert!(c.fidelity_vs_mps.unwrap() > 1.0 - 1e-9);
        }
    }

    #[test]
    fn compile_counts_scale_linearly() {
        for (n, cx) in [(8usize, 21usize), (16, 45), (32, 93)] {
            let m = MpsModel::random(n, 2, 100 + n as u64).unwrap();
            let c = compile_mps(&m).unwrap();
            assert_eq!(c.cnot_count, cx);
            assert_eq!(c.single_qubit_count, 6 * n - 5);
            assert_eq!(c.blocks.len(), n - 1);
        }
    }

    #[test]
    fn compile_five_sites_fidelity() {
        let m = MpsModel::random(5, 2, 77).unwrap();
        let c = compile_mps(&m).unwrap();
        assert!((c.fidelity_vs_mps.unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn compile_bond_four_and_odd_bond() {
        let m = MpsModel::random(6, 4, 8).unwrap();
        let c = compile_mps(&m).unwrap();
        assert!(c.fidelity_vs_mps.unwrap() > 1.0 - 1e-9);
        assert!(c.blocks.iter().all(|b| b.width == 3));
        let m3 = MpsModel::random(6, 3, 8).unwrap();
        assert!(compile_mps(&m3).unwrap().fidelity_vs_mps.unwrap() > 1.0 - 1e-9);
        assert!(matches!(compile_mps(&MpsModel::random(4, 8, 1).unwrap()), Err(Error::BondTooLarge { .. })));
    }

    #[test]
    fn bracket_values() {
        let (lo, hi) = cnot_bracket(3);
        assert!((lo - 13.5).abs() < 1e-12);
        assert!((hi - 20.0).abs() < 1e-12);
        let (lo2, hi2) = cnot_bracket(2);
        assert!((lo2 - 2.25).abs() < 1e-12 && (hi2 - 3.0).abs() < 1e-12);
    }

    #[test]
    fn model_text_round_trip() {
        let m = MpsModel::random(4, 2, 4).unwrap();
        assert_eq!(model_from_text(&model_to_text(&m)).unwrap(), m);
        assert!(model_from_text("mps 2 2\nsite 0 1 2\n1 2 3\n").is_err());
    }
}
