//! Controlled Rotation Circuit Ansatz (CRCA): a cheap variational stand-in
//! for the block-diagonal rotation `R_f : |i⟩|0⟩ ↦ |i⟩(√(1−f_i)|0⟩ + √f_i|1⟩)`.
//!
//! Ansatz: an initial `Ry` on the ancilla, then `3·layers` passes over the
//! register; each step of a pass is `CNOT(register_k → ancilla)` followed by
//! `Ry·Rz` on the ancilla. On a basis state of the register every CNOT acts
//! as a fixed `X` or identity, so each block is a product of 2×2 matrices and
//! evaluates in `O(#gates)`.
//!
//! Errors follow the real-block reduction: with `φ_i = arcsin √f_i` and
//! `η_i = arcsin √f̃_i`, the block distance is `2|sin((φ_i−η_i)/2)|` and the
//! CRCA error is its maximum. The relative phase of the trained blocks is
//! dropped, which is harmless for the final projector measurement.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::cmaes::{self, CmaesConfig, TraceRow};
use crate::linalg::CMat;
use crate::simulator::{Circuit, Gate, Mat2};
use crate::{Error, Result};

/// Tabulated `f ∈ [0, 1]` on all `2^width` register states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotationTarget {
    pub width: usize,
    pub values: Vec<f64>,
}

impl RotationTarget {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || !values.len().is_power_of_two() {
            return Err(Error::invalid("rotation table length must be a power of two"));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::OutOfUnitInterval(*v));
        }
        Ok(RotationTarget { width: values.len().trailing_zeros() as usize, values })
    }

    /// `φ_i = arcsin √f_i ∈ [0, π/2]`.
    pub fn angles(&self) -> Vec<f64> {
        self.values.iter().map(|f| f.clamp(0.0, 1.0).sqrt().asin()).collect()
    }
}

/// `diag(U^(0), …)` with `U^(i) = [[√(1−f_i), −√f_i], [√f_i, √(1−f_i)]]`.
/// Local ordering: ancilla = bit 0, register index = bits `1..=width`.
pub fn target_unitary(values: &[f64]) -> Result<CMat> {
    let t = RotationTarget::new(values.to_vec())?;
    let dim = 2 * t.values.len();
    let mut u = CMat::zeros(dim, dim);
    for (i, f) in t.values.iter().enumerate() {
        let (c, s) = ((1.0 - f).max(0.0).sqrt(), f.sqrt());
        u[(2 * i, 2 * i)] = C64::new(c, 0.0);
        u[(2 * i, 2 * i + 1)] = C64::new(-s, 0.0);
        u[(2 * i + 1, 2 * i)] = C64::new(s, 0.0);
        u[(2 * i + 1, 2 * i + 1)] = C64::new(c, 0.0);
    }
    Ok(u)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrcaAnsatz {
    pub width: usize,
    pub layers: usize,
}

/// Passes over the register per layer.
pub const PASSES_PER_LAYER: usize = 3;

impl CrcaAnsatz {
    pub fn new(width: usize, layers: usize) -> Result<Self> {
        if width == 0 || layers == 0 {
            return Err(Error::invalid("CRCA needs width >= 1 and layers >= 1"));
        }
        Ok(CrcaAnsatz { width, layers })
    }

    pub fn n_cnots(&self) -> usize {
        PASSES_PER_LAYER * self.layers * self.width
    }

    pub fn n_params(&self) -> usize {
        1 + 2 * self.n_cnots()
    }

    fn check(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.n_params() {
            return Err(Error::Dimension { expected: self.n_params(), got: theta.len() });
        }
        Ok(())
    }

    /// Register qubit driving CNOT step `s`.
    fn control(&self, s: usize) -> usize {
        s % self.width
    }

    /// `V(x)|0⟩` for register state `x`.
    fn column(&self, theta: &[f64], x: usize) -> [C64; 2] {
        self.apply_block(theta, x, [C64::new(1.0, 0.0), C64::new(0.0, 0.0)])
    }

    /// The full 2×2 ancilla block `V^(i)` (phases included) for register state `x`.
    pub fn block(&self, theta: &[f64], x: usize) -> Result<Mat2> {
        self.check(theta)?;
        let c0 = self.apply_block(theta, x, [C64::new(1.0, 0.0), C64::new(0.0, 0.0)]);
        let c1 = self.apply_block(theta, x, [C64::new(0.0, 0.0), C64::new(1.0, 0.0)]);
        Ok([[c0[0], c1[0]], [c0[1], c1[1]]])
    }

    fn apply_block(&self, theta: &[f64], x: usize, mut v: [C64; 2]) -> [C64; 2] {
        ry(&mut v, theta[0]);
        for s in 0..self.n_cnots() {
            if x >> self.control(s) & 1 == 1 {
                v.swap(0, 1);
            }
            ry(&mut v, theta[1 + 2 * s]);
            rz(&mut v, theta[2 + 2 * s]);
        }
        v
    }

    /// `f̃(x_i, θ) = |⟨1|V^(i)|0⟩|²` for every register state.
    pub fn f_tilde(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.check(theta)?;
        Ok((0..1usize << self.width).map(|x| self.column(theta, x)[1].norm_sqr()).collect())
    }

    /// Relative phase `φ(x_i, θ)` between the `|1⟩` and `|0⟩` amplitudes.
    pub fn relative_phases(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.check(theta)?;
        Ok((0..1usize << self.width)
            .map(|x| {
                let v = self.column(theta, x);
                (v[1] * v[0].conj()).arg()
            })
            .collect())
    }

    /// The ansatz on `register` (LSB first) and `ancilla` of an `n_qubits` circuit.
    pub fn circuit(&self, theta: &[f64], register: &[usize], ancilla: usize, n_qubits: usize) -> Result<Circuit> {
        self.check(theta)?;
        if register.len() != self.width {
            return Err(Error::Dimension { expected: self.width, got: register.len() });
        }
        let mut c = Circuit::new(n_qubits);
        c.push(Gate::Ry(ancilla, theta[0]));
        for s in 0..self.n_cnots() {
            c.push(Gate::Cnot { control: register[self.control(s)], target: ancilla });
            c.push(Gate::Ry(ancilla, theta[1 + 2 * s]));
            c.push(Gate::Rz(ancilla, theta[2 + 2 * s]));
        }
        c.validate()?;
        Ok(c)
    }

    /// Walsh features of the Ry angles when every Rz is zero. Moving every `X`
    /// to the front flips each later `Ry`, so the ancilla ends in
    /// `X^P Ry(θ_0 + Σ_s σ_s(x) θ_{s+1})|0⟩`, with `σ_s` the parity of the
    /// CNOTs up to step `s` and `P` the total parity; `X^P` adds `π·P` to the angle.
    fn walsh_design(&self) -> (DMatrix<f64>, Vec<f64>) {
        let dim = 1usize << self.width;
        let k = 1 + self.n_cnots();
        let mut a = DMatrix::zeros(dim, k);
        let mut offset = vec![0.0; dim];
        for x in 0..dim {
            let mut parity = 0;
            a[(x, 0)] = 1.0;
            for s in 0..self.n_cnots() {
                parity ^= x >> self.control(s) & 1;
                a[(x, 1 + s)] = if parity == 0 { 1.0 } else { -1.0 };
            }
            offset[x] = PI * parity as f64;
        }
        (a, offset)
    }

    /// Least-squares fit of the Ry angles (Rz = 0) to `2 arcsin √f` — a
    /// starting point for the non-linear optimizer.
    pub fn walsh_init(&self, target: &RotationTarget) -> Result<Vec<f64>> {
        if target.width != self.width {
            return Err(Error::Dimension { expected: self.width, got: target.width });
        }
        let (a, offset) = self.walsh_design();
        let b = DVector::from_iterator(offset.len(), target.angles().iter().zip(&offset).map(|(phi, o)| 2.0 * phi - o));
        let sol = a.svd(true, true).solve(&b, 1e-10).map_err(Error::invalid)?;
        let mut theta = vec![0.0; self.n_params()];
        theta[0] = sol[0];
        for s in 0..self.n_cnots() {
            theta[1 + 2 * s] = sol[1 + s];
        }
        Ok(theta)
    }
}

fn ry(v: &mut [C64; 2], t: f64) {
    let (s, c) = (t / 2.0).sin_cos();
    *v = [v[0] * c - v[1] * s, v[0] * s + v[1] * c];
}

fn rz(v: &mut [C64; 2], t: f64) {
    v[0] *= C64::from_polar(1.0, -t / 2.0);
    v[1] *= C64::from_polar(1.0, t / 2.0);
}

/// `2|sin((φ−η)/2)|` for each block.
pub fn block_errors(f_tilde: &[f64], f: &[f64]) -> Vec<f64> {
    f_tilde
        .iter()
        .zip(f)
        .map(|(ft, f)| {
            let (eta, phi) = (ft.clamp(0.0, 1.0).sqrt().asin(), f.clamp(0.0, 1.0).sqrt().asin());
            2.0 * ((phi - eta) / 2.0).sin().abs()
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrcaError {
    /// `max_i ‖U^(i) − V^(i)‖₂`.
    pub epsilon_spectral: f64,
    /// `2^{-w} Σ_i |f̃_i − f_i|`.
    pub one_norm: f64,
}

/// Spectral and 1-norm errors of `f_tilde` against the target.
pub fn crca_error(f_tilde: &[f64], target: &RotationTarget) -> Result<CrcaError> {
    if f_tilde.len() != target.values.len() {
        return Err(Error::Dimension { expected: target.values.len(), got: f_tilde.len() });
    }
    let eps = block_errors(f_tilde, &target.values).into_iter().fold(0.0, f64::max);
    let one = f_tilde.iter().zip(&target.values).map(|(a, b)| (a - b).abs()).sum::<f64>() / f_tilde.len() as f64;
    if one > eps + 1e-12 {
        return Err(Error::invalid(format!("1-norm {one:e} exceeds spectral error {eps:e}")));
    }
    Ok(CrcaError { epsilon_spectral: eps, one_norm: one })
}

/// `max_i ‖U^(i) − V^(i)‖₂` with the trained blocks' phases kept (reference only;
/// the bound uses the real-block error).
pub fn full_operator_error(ansatz: &CrcaAnsatz, theta: &[f64], target: &RotationTarget) -> Result<f64> {
    if ansatz.width != target.width {
        return Err(Error::Dimension { expected: target.width, got: ansatz.width });
    }
    let mut worst: f64 = 0.0;
    for (x, f) in target.values.iter().enumerate() {
        let v = ansatz.block(theta, x)?;
        let (c, s) = ((1.0 - f).max(0.0).sqrt(), f.sqrt());
        let u = [[c, -s], [s, c]];
        let d = nalgebra::Matrix2::from_fn(|r, k| C64::new(u[r][k], 0.0) - v[r][k]);
        worst = worst.max(d.svd(false, false).singular_values.max());
    }
    Ok(worst)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub points: usize,
    /// Largest `|sin φ − sin η| − 2|sin((φ−η)/2)|` seen (≤ 0 means pass).
    pub max_excess: f64,
    pub pass: bool,
}

/// Checks `|sin φ − sin η| ≤ 2|sin((φ−η)/2)|` on a `k × k` grid over `[0, π/2]²`.
pub fn sine_chord_inequality_check(k: usize) -> InequalityReport {
    let step = if k > 1 { PI / 2.0 / (k - 1) as f64 } else { 0.0 };
    let mut max_excess = f64::NEG_INFINITY;
    for a in 0..k {
        for b in 0..k {
            let (phi, eta) = (a as f64 * step, b as f64 * step);
            let excess = (phi.sin() - eta.sin()).abs() - 2.0 * ((phi - eta) / 2.0).sin().abs();
            max_excess = max_excess.max(excess);
        }
    }
    InequalityReport { points: k * k, max_excess, pass: max_excess <= 1e-15 }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrcaTrainConfig {
    pub sigma0: f64,
    /// CMA-ES generations per restart.
    pub max_iters: usize,
    /// Independent restarts (the first starts from the Walsh fit).
    pub restarts: usize,
    /// Sharpness of the soft maximum, relative to the current largest block error.
    pub softmax_kappa: f64,
    /// Stop early once ε reaches this.
    pub target_epsilon: Option<f64>,
    pub seed: u64,
}

impl Default for CrcaTrainConfig {
    fn default() -> Self {
        CrcaTrainConfig { sigma0: 0.3, max_iters: 3000, restarts: 3, softmax_kappa: 50.0, target_epsilon: None, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrcaModel {
    pub ansatz: CrcaAnsatz,
    pub params: Vec<f64>,
    pub error: CrcaError,
    /// False when a `target_epsilon` was set and not reached.
    pub converged: bool,
    pub trace: Vec<TraceRow>,
}

impl CrcaModel {
    pub fn f_tilde(&self) -> Vec<f64> {
        self.ansatz.f_tilde(&self.params).expect("params sized by construction")
    }
}

/// Scale-free soft maximum: `m · (1 + ln Σ exp(κ(e_i/m − 1)) / κ)`.
fn soft_max(errors: &[f64], kappa: f64) -> f64 {
    let m = errors.iter().cloned().fold(0.0, f64::max);
    if m <= 0.0 {
        return 0.0;
    }
    let s: f64 = errors.iter().map(|e| (kappa * (e / m - 1.0)).exp()).sum();
    m * (1.0 + s.ln() / kappa)
}

/// Fits the ansatz to `target` by CMA-ES on the soft maximum of the block errors.
pub fn train_crca(target: &RotationTarget, ansatz: CrcaAnsatz, cfg: &CrcaTrainConfig) -> Result<CrcaModel> {
    if ansatz.width != target.width {
        return Err(Error::Dimension { expected: target.width, got: ansatz.width });
    }
    if cfg.restarts == 0 {
        return Err(Error::invalid("CRCA training needs at least one restart"));
    }
    let eps_of = |theta: &[f64]| -> f64 {
        let ft = ansatz.f_tilde(theta).expect("sized");
        block_errors(&ft, &target.values).into_iter().fold(0.0, f64::max)
    };
    let init = ansatz.walsh_init(target)?;
    let mut best: Option<(f64, Vec<f64>, Vec<TraceRow>)> = None;
    for r in 0..cfg.restarts {
        let x0 = if r == 0 {
            init.clone()
        } else {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(cfg.seed ^ (0xc7ca << 8) ^ r as u64);
            init.iter().map(|v| v + rng.random_range(-0.5..0.5)).collect()
        };
        let ccfg = CmaesConfig {
            sigma0: cfg.sigma0,
            max_iters: cfg.max_iters,
            seed: cfg.seed.wrapping_add(r as u64),
            target: cfg.target_epsilon,
            ..CmaesConfig::default()
        };
        let res = cmaes::minimize(
            |theta| {
                let ft = ansatz.f_tilde(theta).expect("sized");
                soft_max(&block_errors(&ft, &target.values), cfg.softmax_kappa)
            },
            &x0,
            &ccfg,
        )?;
        let e = eps_of(&res.best_x);
        if best.as_ref().is_none_or(|b| e < b.0) {
            best = Some((e, res.best_x, res.trace));
        }
        if cfg.target_epsilon.is_some_and(|t| e <= t) {
            break;
        }
    }
    let (e, params, trace) = best.expect("at least one restart");
    let error = crca_error(&ansatz.f_tilde(&params)?, target)?;
    Ok(CrcaModel { ansatz, params, error, converged: cfg.target_epsilon.is_none_or(|t| e <= t), trace })
}

/// Model file: `crca <width> <layers>`, then one angle per line.
pub fn model_to_text(model: &CrcaModel) -> String {
    let mut s = format!("crca {} {}\n", model.ansatz.width, model.ansatz.layers);
    for p in &model.params {
        let _ = writeln!(s, "{p:e}");
    }
    s
}

/// Parses a model file; the errors are recomputed against `target`.
pub fn model_from_text(text: &str, target: &RotationTarget) -> Result<CrcaModel> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let perr = |line: usize, msg: String| Error::Parse { line: line + 1, msg };
    let (l0, h) = lines.next().ok_or_else(|| perr(0, "empty model file".into()))?;
    let f: Vec<&str> = h.split_whitespace().collect();
    if f.len() != 3 || f[0] != "crca" {
        return Err(perr(l0, "expected `crca <width> <layers>`".into()));
    }
    let width = f[1].parse().map_err(|e: std::num::ParseIntError| perr(l0, e.to_string()))?;
    let layers = f[2].parse().map_err(|e: std::num::ParseIntError| perr(l0, e.to_string()))?;
    let ansatz = CrcaAnsatz::new(width, layers)?;
    let params = lines.map(|(i, l)| l.trim().parse::<f64>().map_err(|e| perr(i, e.to_string()))).collect::<Result<Vec<_>>>()?;
    ansatz.check(&params)?;
    let error = crca_error(&ansatz.f_tilde(&params)?, target)?;
    Ok(CrcaModel { ansatz, params, error, converged: true, trace: Vec::new() })
}
