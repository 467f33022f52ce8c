//! Engineered-likelihood-function (ELF) Bayesian amplitude estimation.
//!
//! We estimate `η = cos θ = ⟨A|O|A⟩` with `O = 2Π − I`. Every operator in the
//! layered circuit
//!
//! ```text
//! Q(x) = V(x_2L) U(x_2L−1) … V(x_2) U(x_1),   U(x) = exp(ixΠ),   V(y) = A exp(iy|0⟩⟨0|) A†
//! ```
//!
//! leaves the plane spanned by `Π|A⟩` and `(I−Π)|A⟩` invariant, so the
//! likelihood is computed on two amplitudes: `|A⟩ = cos(θ/2)|g⟩ + sin(θ/2)|b⟩`
//! (good component first). In that basis `O = diag(1, −1)`, `U(x) = diag(e^{ix}, 1)`
//! and `V(y) = I + (e^{iy} − 1)|A⟩⟨A|`.
//!
//! Outcome convention: `P(d) = (1 + (−1)^d f Δ)/2` with `Δ = ⟨A|Q† O Q|A⟩`,
//! so `d = 0` is the outcome "Π observed".

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::simulator::{expectation, run_zero, Circuit, Gate, Projector};
use crate::{Error, Result};

/// Number of quadrature points in the Bayesian update.
pub const QUADRATURE_POINTS: usize = 2048;
/// Half-width (in standard deviations) of the quadrature window around the prior mean.
pub const QUADRATURE_HALF_WIDTH: f64 = 10.0;
/// Composite-fidelity floor for choosing the layer count (`e^{-1}`).
pub const FIDELITY_FLOOR: f64 = 0.367_879_441_171_442_3;

/// The amplitude-estimation target.
#[derive(Clone, Debug)]
pub enum ElfProblem {
    /// Fast mode: `θ` supplied directly.
    Angle(f64),
    /// An ansatz circuit `A` and the projector `Π`.
    Circuit { circuit: Circuit, projector: Projector },
}

impl ElfProblem {
    pub fn eta(&self) -> Result<f64> {
        match self {
            ElfProblem::Angle(t) => Ok(t.cos()),
            ElfProblem::Circuit { circuit, projector } => {
                let psi = run_zero(circuit)?;
                Ok((2.0 * expectation(&psi, projector) - 1.0).clamp(-1.0, 1.0))
            }
        }
    }

    pub fn theta(&self) -> Result<f64> {
        match self {
            ElfProblem::Angle(t) if !(0.0..=PI).contains(t) => Err(Error::invalid(format!("theta {t} outside [0, pi]"))),
            ElfProblem::Angle(t) => Ok(*t),
            _ => Ok(self.eta()?.acos()),
        }
    }
}

/// `L` layers and their `2L` angles `(x_1, …, x_2L)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElfSchedule {
    pub layers: usize,
    pub angles: Vec<f64>,
}

impl ElfSchedule {
    pub fn new(angles: Vec<f64>) -> Result<Self> {
        if !angles.len().is_multiple_of(2) {
            return Err(Error::invalid("schedule needs an even number of angles"));
        }
        if angles.iter().any(|a| !a.is_finite()) {
            return Err(Error::invalid("schedule angles must be finite"));
        }
        Ok(ElfSchedule { layers: angles.len() / 2, angles })
    }

    /// The Grover-like default `x = (π, π, …)`, for which `Δ = cos((2L+1)θ)`.
    pub fn grover(layers: usize) -> Self {
        ElfSchedule { layers, angles: vec![PI; 2 * layers] }
    }

    /// Calls to `A` or `A†` made by one shot: `2L + 1`.
    pub fn queries(&self) -> usize {
        2 * self.layers + 1
    }
}

/// Single-fidelity noise model: an `L`-layer circuit has fidelity `e^{−λ(2L+1)}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Per-application decay rate, `λ = M ln(1/f_2Q)`.
    pub lambda: f64,
    /// Readout fidelity; enters only the runtime model, not the likelihood.
    pub readout: f64,
}

impl NoiseModel {
    pub fn noiseless() -> Self {
        NoiseModel { lambda: 0.0, readout: 1.0 }
    }

    pub fn from_gate_fidelity(two_qubit_gates_per_layer: usize, f_2q: f64, readout: f64) -> Result<Self> {
        if !(f_2q > 0.0 && f_2q <= 1.0) {
            return Err(Error::OutOfUnitInterval(f_2q));
        }
        Ok(NoiseModel { lambda: two_qubit_gates_per_layer as f64 * (1.0 / f_2q).ln(), readout })
    }

    pub fn fidelity(&self, layers: usize) -> f64 {
        (-self.lambda * (2 * layers + 1) as f64).exp()
    }

    /// Largest `L` with `e^{−λ(2L+1)} ≥ e^{−1}`; `None` when unbounded (noiseless).
    pub fn max_layers(&self) -> Option<usize> {
        if self.lambda <= 0.0 {
            None
        } else {
            Some(((-FIDELITY_FLOOR.ln() / self.lambda - 1.0) / 2.0).max(0.0).floor() as usize)
        }
    }
}

type V2 = [C64; 2];
type V4 = [C64; 4];
type M4 = [[C64; 4]; 4];

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

fn expi(x: f64) -> C64 {
    C64::from_polar(1.0, x)
}

/// Augmented transfer matrix of gate `k` acting on `(s, ∂s/∂θ)`.
fn gate4(k: usize, x: f64, theta: f64) -> M4 {
    let mut g = [[ZERO; 4]; 4];
    if k.is_multiple_of(2) {
        let u = [expi(x), C64::new(1.0, 0.0)];
        for r in 0..2 {
            g[r][r] = u[r];
            g[r + 2][r + 2] = u[r];
        }
    } else {
        let (s, c) = (theta / 2.0).sin_cos();
        let a = [c, s];
        let da = [-s / 2.0, c / 2.0];
        let e = expi(x) - 1.0;
        for r in 0..2 {
            for col in 0..2 {
                let v = if r == col { C64::new(1.0, 0.0) } else { ZERO } + e * a[r] * a[col];
                let dv = e * (da[r] * a[col] + a[r] * da[col]);
                g[r][col] = v;
                g[r + 2][col + 2] = v;
                g[r + 2][col] = dv;
            }
        }
    }
    g
}

fn apply4(g: &M4, z: &V4) -> V4 {
    let mut out = [ZERO; 4];
    for r in 0..4 {
        out[r] = g[r][0] * z[0] + g[r][1] * z[1] + g[r][2] * z[2] + g[r][3] * z[3];
    }
    out
}

/// `G† K G`.
fn conjugate_form(k: &M4, g: &M4) -> M4 {
    let mut kg = [[ZERO; 4]; 4];
    for r in 0..4 {
        for c in 0..4 {
            kg[r][c] = (0..4).map(|t| k[r][t] * g[t][c]).sum();
        }
    }
    let mut out = [[ZERO; 4]; 4];
    for r in 0..4 {
        for c in 0..4 {
            out[r][c] = (0..4).map(|t| g[t][r].conj() * kg[t][c]).sum();
        }
    }
    out
}

fn form(k: &M4, z: &V4) -> f64 {
    let mut acc = ZERO;
    for r in 0..4 {
        for c in 0..4 {
            acc += z[r].conj() * k[r][c] * z[c];
        }
    }
    acc.re
}

/// Forms giving `Δ` and `∂Δ/∂θ` from the final augmented state.
fn output_forms() -> (M4, M4) {
    let one = C64::new(1.0, 0.0);
    let mut kd = [[ZERO; 4]; 4];
    kd[0][0] = one;
    kd[1][1] = -one;
    let mut kdd = [[ZERO; 4]; 4];
    kdd[0][2] = one;
    kdd[2][0] = one;
    kdd[1][3] = -one;
    kdd[3][1] = -one;
    (kd, kdd)
}

fn initial4(theta: f64) -> V4 {
    let (s, c) = (theta / 2.0).sin_cos();
    [C64::new(c, 0.0), C64::new(s, 0.0), C64::new(-s / 2.0, 0.0), C64::new(c / 2.0, 0.0)]
}

/// `Δ(θ; x)` and its analytic `θ`-derivative.
pub fn delta_and_derivative(theta: f64, x: &ElfSchedule) -> (f64, f64) {
    let mut z = initial4(theta);
    for (k, xk) in x.angles.iter().enumerate() {
        z = apply4(&gate4(k, *xk, theta), &z);
    }
    let (kd, kdd) = output_forms();
    (form(&kd, &z), form(&kdd, &z))
}

/// `Δ(θ; x) = ⟨A|Q†(x) O Q(x)|A⟩` on the invariant plane.
pub fn delta(theta: f64, x: &ElfSchedule) -> f64 {
    let (s, c) = (theta / 2.0).sin_cos();
    let mut v: V2 = [C64::new(c, 0.0), C64::new(s, 0.0)];
    let a = [c, s];
    for (k, xk) in x.angles.iter().enumerate() {
        if k % 2 == 0 {
            v[0] *= expi(*xk);
        } else {
            let overlap = v[0] * a[0] + v[1] * a[1];
            let e = (expi(*xk) - 1.0) * overlap;
            v[0] += e * a[0];
            v[1] += e * a[1];
        }
    }
    v[0].norm_sqr() - v[1].norm_sqr()
}

/// `P(d | θ, x, f) = (1 + (−1)^d f Δ)/2`.
pub fn likelihood(theta: f64, x: &ElfSchedule, fidelity: f64, d: u8) -> f64 {
    let s = if d == 0 { 1.0 } else { -1.0 };
    ((1.0 + s * fidelity * delta(theta, x)) / 2.0).clamp(0.0, 1.0)
}

fn fisher_from(fidelity: f64, delta: f64, ddelta: f64) -> f64 {
    let den = (1.0 - fidelity * fidelity * delta * delta).max(1e-12);
    (fidelity * fidelity * ddelta * ddelta / den).max(0.0)
}

/// `I(θ; x) = f² (∂Δ/∂θ)² / (1 − f² Δ²)`.
pub fn fisher_information(theta: f64, x: &ElfSchedule, fidelity: f64) -> f64 {
    let (d, dd) = delta_and_derivative(theta, x);
    fisher_from(fidelity, d, dd)
}

/// Full statevector likelihood `P(d)` for a circuit ansatz (the oracle for
/// the two-amplitude reduction).
pub fn statevector_likelihood(circuit: &Circuit, projector: &Projector, x: &ElfSchedule, fidelity: f64, d: u8) -> Result<f64> {
    let n = circuit.n_qubits;
    let basis = projector.values.iter().enumerate().fold(0usize, |acc, (k, v)| acc | (usize::from(*v) << k));
    let inverse = circuit.inverse();
    let mut q = circuit.clone();
    for (k, xk) in x.angles.iter().enumerate() {
        if k % 2 == 0 {
            q.push(Gate::DiagonalPhase { qubits: projector.qubits.clone(), basis, phase: *xk });
        } else {
            q.extend(&inverse);
            q.global_phase += inverse.global_phase;
            q.push(Gate::DiagonalPhase { qubits: (0..n).collect(), basis: 0, phase: *xk });
            q.extend(circuit);
            q.global_phase += circuit.global_phase;
        }
    }
    let p_pi = expectation(&run_zero(&q)?, projector);
    let big_delta = 2.0 * p_pi - 1.0;
    let s = if d == 0 { 1.0 } else { -1.0 };
    Ok((1.0 + s * fidelity * big_delta) / 2.0)
}

/// Coordinate-ascent tuning budget.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuningConfig {
    pub grid: usize,
    pub refine_iters: usize,
    pub max_sweeps: usize,
}

impl Default for TuningConfig {
    fn default() -> Self {
        TuningConfig { grid: 24, refine_iters: 30, max_sweeps: 3 }
    }
}

/// Maximises the Fisher information at `θ̂ = μ` by coordinate ascent from the
/// Grover point. Returns the Grover point when the landscape is flat.
pub fn tune_angles(layers: usize, mu: f64, fidelity: f64, cfg: &TuningConfig) -> ElfSchedule {
    let mut x = ElfSchedule::grover(layers);
    if layers == 0 || fidelity <= 0.0 {
        return x;
    }
    let (kd, kdd) = output_forms();
    let n = 2 * layers;
    let mut current = fisher_information(mu, &x, fidelity);
    for _ in 0..cfg.max_sweeps {
        let before = current;
        // suffix forms: value = z_j† K_j z_j where z_j is the state after gate j
        let mut suffix_d = vec![kd; n];
        let mut suffix_dd = vec![kdd; n];
        for j in (0..n - 1).rev() {
            let g = gate4(j + 1, x.angles[j + 1], mu);
            suffix_d[j] = conjugate_form(&suffix_d[j + 1], &g);
            suffix_dd[j] = conjugate_form(&suffix_dd[j + 1], &g);
        }
        let mut z = initial4(mu);
        for j in 0..n {
            let eval = |xj: f64| {
                let w = apply4(&gate4(j, xj, mu), &z);
                fisher_from(fidelity, form(&suffix_d[j], &w), form(&suffix_dd[j], &w))
            };
            let mut best = (x.angles[j], eval(x.angles[j]));
            let step = 2.0 * PI / cfg.grid as f64;
            for k in 0..cfg.grid {
                let t = k as f64 * step;
                let v = eval(t);
                if v > best.1 + 1e-15 {
                    best = (t, v);
                }
            }
            // golden-section refinement around the best grid point
            let (mut lo, mut hi) = (best.0 - step, best.0 + step);
            let r = (5f64.sqrt() - 1.0) / 2.0;
            let (mut c, mut d) = (hi - r * (hi - lo), lo + r * (hi - lo));
            let (mut fc, mut fd) = (eval(c), eval(d));
            for _ in 0..cfg.refine_iters {
                if fc > fd {
                    hi = d;
                    d = c;
                    fd = fc;
                    c = hi - r * (hi - lo);
                    fc = eval(c);
                } else {
                    lo = c;
                    c = d;
                    fc = fd;
                    d = lo + r * (hi - lo);
                    fd = eval(d);
                }
            }
            let (t, v) = if fc > fd { (c, fc) } else { (d, fd) };
            if v > best.1 {
                best = (t.rem_euclid(2.0 * PI), v);
            }
            x.angles[j] = best.0;
            z = apply4(&gate4(j, best.0, mu), &z);
        }
        current = fisher_information(mu, &x, fidelity);
        if current - before <= 1e-9 * before.max(1e-300) {
            break;
        }
    }
    if current < 1e-12 {
        ElfSchedule::grover(layers)
    } else {
        x
    }
}

/// One recorded shot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShotRecord {
    pub shot: usize,
    pub layers: usize,
    pub angles: Vec<f64>,
    pub d: u8,
    pub mu: f64,
    pub sigma: f64,
    /// `Σ L` over the shots so far.
    pub cum_layers: usize,
    /// `Σ (2L+1)` over the shots so far.
    pub cum_queries: usize,
}

/// Gaussian belief over `θ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimationState {
    pub mu: f64,
    pub sigma: f64,
    pub history: Vec<ShotRecord>,
    /// Set when a posterior update underflowed twice and was skipped.
    pub degenerate: bool,
}

impl EstimationState {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !mu.is_finite() {
            return Err(Error::invalid("belief needs finite mean and positive sigma"));
        }
        Ok(EstimationState { mu: mu.clamp(0.0, PI), sigma, history: Vec::new(), degenerate: false })
    }

    /// The image of a uniform prior on `η ∈ [−1, 1]`: `θ` has density `sin θ / 2`,
    /// mean `π/2` and variance `(π² − 8)/4`.
    pub fn uninformative() -> Self {
        EstimationState { mu: PI / 2.0, sigma: ((PI * PI - 8.0) / 4.0).sqrt(), history: Vec::new(), degenerate: false }
    }

    /// `η̂ = cos μ`.
    pub fn eta_hat(&self) -> f64 {
        self.mu.cos()
    }

    /// Standard deviation of `cos θ` under the Gaussian belief.
    pub fn eta_sigma(&self) -> f64 {
        let (m, s2) = (self.mu, self.sigma * self.sigma);
        let e1 = (-s2 / 2.0).exp() * m.cos();
        let e2 = (1.0 + (-2.0 * s2).exp() * (2.0 * m).cos()) / 2.0;
        (e2 - e1 * e1).max(0.0).sqrt()
    }
}

fn moments(mu: f64, sigma: f64, x: &ElfSchedule, fidelity: f64, d: u8) -> Option<(f64, f64)> {
    let lo = (mu - QUADRATURE_HALF_WIDTH * sigma).max(0.0);
    let hi = (mu + QUADRATURE_HALF_WIDTH * sigma).min(PI);
    if !(hi > lo) {
        return None;
    }
    let h = (hi - lo) / (QUADRATURE_POINTS - 1) as f64;
    let (mut z, mut m1, mut m2) = (0.0, 0.0, 0.0);
    for k in 0..QUADRATURE_POINTS {
        let t = lo + k as f64 * h;
        let w = (-0.5 * ((t - mu) / sigma).powi(2)).exp() * likelihood(t, x, fidelity, d);
        z += w;
        m1 += w * t;
        m2 += w * t * t;
    }
    if !(z > 1e-300) || !z.is_finite() {
        return None;
    }
    let mean = m1 / z;
    let var = (m2 / z - mean * mean).max(0.0);
    // a posterior narrower than the quadrature spacing is resolved no further
    Some((mean, var.sqrt().max(h / 2.0)))
}

/// Bayes rule on the quadrature window, re-Gaussianised by moment matching.
/// Underflow widens the prior once; a second failure leaves the belief
/// unchanged and raises the `degenerate` flag.
pub fn bayes_update(state: &EstimationState, d: u8, x: &ElfSchedule, fidelity: f64) -> EstimationState {
    let mut next = state.clone();
    let result = moments(state.mu, state.sigma, x, fidelity, d).or_else(|| moments(state.mu, 4.0 * state.sigma, x, fidelity, d));
    match result {
        Some((mu, sigma)) => {
            next.mu = mu.clamp(0.0, PI);
            next.sigma = sigma;
        }
        None => next.degenerate = true,
    }
    next
}

/// Estimation loop settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateConfig {
    /// Stop once the standard deviation of `η` falls below this.
    pub epsilon_target: f64,
    pub max_shots: usize,
    /// Optional budget on `Σ(2L+1)`; the loop stops before exceeding it.
    pub max_queries: Option<usize>,
    /// Fixes `L` for every shot (e.g. `Some(0)` for direct sampling).
    pub forced_layers: Option<usize>,
    pub max_layers: usize,
    /// `L` is also capped so that `(2L+1)·σ·depth_factor ≤ π/4`, keeping the
    /// likelihood single-lobed over the belief.
    pub depth_factor: f64,
    pub tuning: TuningConfig,
    pub seed: u64,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        EstimateConfig {
            epsilon_target: 1e-3,
            max_shots: 100_000,
            max_queries: None,
            forced_layers: None,
            max_layers: 10_000,
            depth_factor: 1.5,
            tuning: TuningConfig::default(),
            seed: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EstimateStatus {
    Converged,
    QueryBudget,
    MaxShots,
    Degenerate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElfEstimate {
    pub eta_hat: f64,
    pub eta_sigma: f64,
    pub theta_mu: f64,
    pub theta_sigma: f64,
    pub shots: usize,
    pub total_layers: usize,
    pub total_queries: usize,
    /// `Σ L · M` when a per-layer two-qubit gate count is supplied.
    pub two_qubit_gates: Option<usize>,
    pub status: EstimateStatus,
    pub history: Vec<ShotRecord>,
}

/// Layer count for the next shot.
pub fn choose_layers(sigma: f64, noise: &NoiseModel, cfg: &EstimateConfig) -> usize {
    if let Some(l) = cfg.forced_layers {
        return l;
    }
    let by_sigma = ((PI / (4.0 * sigma * cfg.depth_factor) - 1.0) / 2.0).max(0.0);
    let by_sigma = if by_sigma.is_finite() { by_sigma.floor() as usize } else { cfg.max_layers };
    let mut l = by_sigma.min(cfg.max_layers);
    if let Some(lf) = noise.max_layers() {
        l = l.min(lf);
    }
    l
}

/// Runs the tune → sample → update loop against a simulated device whose
/// true angle is `problem.theta()`.
pub fn estimate(problem: &ElfProblem, noise: &NoiseModel, cfg: &EstimateConfig, gates_per_layer: Option<usize>) -> Result<ElfEstimate> {
    if !(cfg.epsilon_target > 0.0) {
        return Err(Error::invalid("epsilon_target must be positive"));
    }
    let theta = problem.theta()?;
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut state = EstimationState::uninformative();
    let (mut layers_sum, mut queries_sum) = (0usize, 0usize);
    let status = loop {
        if state.eta_sigma() <= cfg.epsilon_target {
            break EstimateStatus::Converged;
        }
        if state.degenerate {
            break EstimateStatus::Degenerate;
        }
        if state.history.len() >= cfg.max_shots {
            break EstimateStatus::MaxShots;
        }
        let layers = choose_layers(state.sigma, noise, cfg);
        if let Some(b) = cfg.max_queries {
            if queries_sum + 2 * layers + 1 > b {
                break EstimateStatus::QueryBudget;
            }
        }
        let f = noise.fidelity(layers);
        let x = tune_angles(layers, state.mu, f, &cfg.tuning);
        let d = u8::from(rng.random::<f64>() >= likelihood(theta, &x, f, 0));
        state = bayes_update(&state, d, &x, f);
        layers_sum += layers;
        queries_sum += 2 * layers + 1;
        let rec = ShotRecord {
            shot: state.history.len() + 1,
            layers,
            angles: x.angles,
            d,
            mu: state.mu,
            sigma: state.sigma,
            cum_layers: layers_sum,
            cum_queries: queries_sum,
        };
        state.history.push(rec);
    };
    Ok(ElfEstimate {
        eta_hat: state.eta_hat(),
        eta_sigma: state.eta_sigma(),
        theta_mu: state.mu,
        theta_sigma: state.sigma,
        shots: state.history.len(),
        total_layers: layers_sum,
        total_queries: queries_sum,
        two_qubit_gates: gates_per_layer.map(|m| m * layers_sum),
        status,
        history: state.history,
    })
}

/// Writes the run ledger as CSV: `shot,L,x_vec,d,mu,sigma,cum_layers`
/// (angles joined by `;`).
pub fn write_ledger<W: Write>(w: W, history: &[ShotRecord]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["shot", "L", "x_vec", "d", "mu", "sigma", "cum_layers"])?;
    for r in history {
        let xs: Vec<String> = r.angles.iter().map(|a| format!("{a:.12}")).collect();
        wr.write_record([
            r.shot.to_string(),
            r.layers.to_string(),
            xs.join(";"),
            r.d.to_string(),
            format!("{:.15e}", r.mu),
            format!("{:.15e}", r.sigma),
            r.cum_layers.to_string(),
        ])?;
    }
    wr.flush().map_err(|source| Error::Io { path: "<ledger>".into(), source })?;
    Ok(())
}

/// RMSE of `η̂` at a set of query budgets, one trajectory per seed: the
/// estimate at budget `B` is the belief after the last shot that keeps
/// `Σ(2L+1) ≤ B`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingStudy {
    pub budgets: Vec<usize>,
    pub rmse: Vec<f64>,
    /// Log-log slope of RMSE against the budget.
    pub slope: f64,
}

pub fn rmse_scaling(theta: f64, noise: &NoiseModel, base: &EstimateConfig, budgets: &[usize], seeds: u64) -> Result<ScalingStudy> {
    let max_b = *budgets.iter().max().ok_or_else(|| Error::invalid("no budgets"))?;
    let eta = theta.cos();
    let mut sq = vec![0.0; budgets.len()];
    for s in 0..seeds {
        let cfg = EstimateConfig { epsilon_target: 1e-300, max_queries: Some(max_b), seed: base.seed.wrapping_add(s), ..base.clone() };
        let run = estimate(&ElfProblem::Angle(theta), noise, &cfg, None)?;
        for (k, b) in budgets.iter().enumerate() {
            let mu = run.history.iter().take_while(|r| r.cum_queries <= *b).last().map_or(PI / 2.0, |r| r.mu);
            sq[k] += (mu.cos() - eta).powi(2);
        }
    }
    let rmse: Vec<f64> = sq.iter().map(|v| (v / seeds as f64).sqrt()).collect();
    let xs: Vec<f64> = budgets.iter().map(|b| (*b as f64).ln()).collect();
    let ys: Vec<f64> = rmse.iter().map(|r| r.ln()).collect();
    let (slope, _) = crate::resource::log_fit(&xs, &ys)?;
    Ok(ScalingStudy { budgets: budgets.to_vec(), rmse, slope })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::Gate;

    fn grover_delta(theta: f64, l: usize) -> f64 {
        ((2 * l + 1) as f64 * theta).cos()
    }

    #[test]
    fn zero_layers_is_direct_sampling() {
        let x = ElfSchedule::grover(0);
        for t in [0.0, 0.3, PI / 3.0, 2.0, PI] {
            assert!((likelihood(t, &x, 0.8, 0) - (1.0 + 0.8 * t.cos()) / 2.0).abs() < 1e-15);
            assert!((likelihood(t, &x, 1.0, 0) + likelihood(t, &x, 1.0, 1) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_fidelity_is_uninformative() {
        let x = ElfSchedule::new(vec![0.3, 1.2, 2.0, 0.1]).unwrap();
        for t in [0.1, 1.0, 2.5] {
            assert_eq!(likelihood(t, &x, 0.0, 1), 0.5);
        }
        assert_eq!(tune_angles(2, 1.0, 0.0, &TuningConfig::default()), ElfSchedule::grover(2));
    }

    #[test]
    fn grover_point_gives_odd_multiple_angle() {
        for l in 0..5 {
            for t in [0.2, 1.1, 2.9] {
                assert!((delta(t, &ElfSchedule::grover(l)) - grover_delta(t, l)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn analytic_derivative_matches_finite_difference() {
        let x = ElfSchedule::new(vec![0.4, 2.2, 1.7, 0.9, 3.0, 5.5]).unwrap();
        for t in [0.3, 1.3, 2.6] {
            let (d, dd) = delta_and_derivative(t, &x);
            assert!((d - delta(t, &x)).abs() < 1e-13);
            let h = 1e-6;
            let fd = (delta(t + h, &x) - delta(t - h, &x)) / (2.0 * h);
            assert!((dd - fd).abs() < 1e-7, "{dd} vs {fd}");
        }
    }

    fn test_ansatz() -> (Circuit, Projector) {
        // ⟨Π⟩ = sin²(π/3) = 3/4 on qubit 0, so θ = arccos(1/2) = π/3
        let mut c = Circuit::new(3);
        c.push(Gate::Ry(0, 2.0 * PI / 3.0));
        c.push(Gate::H(1));
        c.push(Gate::Cnot { control: 1, target: 2 });
        c.push(Gate::Rz(2, 0.7));
        c.push(Gate::Cnot { control: 0, target: 1 });
        c.push(Gate::Ry(1, 0.4));
        (c, Projector::all_ones(vec![0]))
    }

    #[test]
    fn plane_reduction_matches_statevector() {
        let (c, p) = test_ansatz();
        let problem = ElfProblem::Circuit { circuit: c.clone(), projector: p.clone() };
        let theta = problem.theta().unwrap();
        assert!((theta - PI / 3.0).abs() < 1e-12);
        let x = ElfSchedule::new(vec![0.9, 2.1]).unwrap();
        for d in [0, 1] {
            let a = likelihood(theta, &x, 0.9, d);
            let b = statevector_likelihood(&c, &p, &x, 0.9, d).unwrap();
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
        let x = ElfSchedule::new(vec![0.3, 1.0, 4.0, 2.5, 5.0, 0.2]).unwrap();
        assert!((likelihood(theta, &x, 1.0, 0) - statevector_likelihood(&c, &p, &x, 1.0, 0).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn tuning_beats_grover_and_is_deterministic() {
        let cfg = TuningConfig::default();
        for (l, mu, f) in [(1, 1.0, 1.0), (1, 0.4, 0.7), (3, 2.0, 0.9)] {
            let x = tune_angles(l, mu, f, &cfg);
            assert!(fisher_information(mu, &x, f) >= fisher_information(mu, &ElfSchedule::grover(l), f) - 1e-9);
            assert_eq!(x, tune_angles(l, mu, f, &cfg));
        }
        // noiseless Grover already reaches (2L+1)²
        let x = tune_angles(1, 1.0, 1.0, &cfg);
        assert!((fisher_information(1.0, &x, 1.0) - 9.0).abs() < 1e-6);
    }

    #[test]
    fn uninformative_update_keeps_prior() {
        let s = EstimationState::new(1.2, 0.05).unwrap();
        let next = bayes_update(&s, 1, &ElfSchedule::grover(2), 0.0);
        assert!((next.mu - 1.2).abs() < 1e-6);
        assert!((next.sigma - 0.05).abs() / 0.05 < 1e-4);
    }

    #[test]
    fn sharp_outcome_narrows_belief() {
        let s = EstimationState::new(1.0, 0.2).unwrap();
        let x = tune_angles(1, 1.0, 1.0, &TuningConfig::default());
        let next = bayes_update(&s, 1, &x, 1.0);
        assert!(next.sigma < s.sigma);
    }

    #[test]
    fn direct_sampling_matches_binomial_mle() {
        let theta = PI / 3.0;
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let mut s = EstimationState::uninformative();
        let x = ElfSchedule::grover(0);
        let n = 4000;
        let mut zeros = 0usize;
        for _ in 0..n {
            let d = u8::from(rng.random::<f64>() >= likelihood(theta, &x, 1.0, 0));
            zeros += usize::from(d == 0);
            s = bayes_update(&s, d, &x, 1.0);
        }
        let eta_mle = 2.0 * zeros as f64 / n as f64 - 1.0;
        let theta_mle = eta_mle.acos();
        // Fisher information of one direct shot in θ is 1
        assert!((s.sigma * (n as f64).sqrt() - 1.0).abs() < 0.1, "{}", s.sigma);
        assert!((s.mu - theta_mle).abs() < 0.1 * s.sigma);
        assert!((s.mu - theta).abs() < 4.0 * s.sigma);
    }

    #[test]
    fn endpoints_converge_without_nan() {
        for theta in [0.0, PI] {
            let cfg = EstimateConfig { epsilon_target: 1e-4, max_shots: 2000, seed: 9, ..EstimateConfig::default() };
            let r = estimate(&ElfProblem::Angle(theta), &NoiseModel::noiseless(), &cfg, None).unwrap();
            assert!(r.eta_hat.is_finite() && r.theta_sigma.is_finite());
            assert!((r.eta_hat - theta.cos()).abs() < 1e-3, "{r:?}");
        }
    }

    #[test]
    fn noisy_estimate_is_within_three_sigma() {
        let noise = NoiseModel { lambda: 1e-3, readout: 1.0 };
        let mut hits = 0;
        for seed in 0..20 {
            let cfg = EstimateConfig { epsilon_target: 2e-3, seed, ..EstimateConfig::default() };
            let r = estimate(&ElfProblem::Angle(1.0), &noise, &cfg, Some(10)).unwrap();
            assert_eq!(r.status, EstimateStatus::Converged);
            assert!(r.history.iter().all(|h| h.layers <= noise.max_layers().unwrap()));
            hits += usize::from((r.eta_hat - 1f64.cos()).abs() <= 3.0 * r.eta_sigma);
        }
        assert!(hits >= 19, "{hits}");
    }

    #[test]
    fn ledger_has_header_and_rows() {
        let cfg = EstimateConfig { epsilon_target: 0.05, seed: 2, ..EstimateConfig::default() };
        let r = estimate(&ElfProblem::Angle(0.8), &NoiseModel::noiseless(), &cfg, None).unwrap();
        let mut buf = Vec::new();
        write_ledger(&mut buf, &r.history).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("shot,L,x_vec,d,mu,sigma,cum_layers"));
        assert_eq!(text.lines().count(), r.history.len() + 1);
    }
}
