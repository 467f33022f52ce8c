//! Assembly of the full CVA circuit and its error budget.
//!
//! Qubit map on `n + m + 3` qubits (qubit 0 = least significant):
//!
//! | qubits            | role                                     |
//! |-------------------|------------------------------------------|
//! | `0 .. n`          | price register `j`                       |
//! | `n .. n+m`        | time register `i`                        |
//! | `n+m`             | payoff ancilla (p.f.)                    |
//! | `n+m+1`           | default-probability ancilla (p.o.d.)     |
//! | `n+m+2`           | discount-factor ancilla (d.f.)           |
//!
//! so the joint register index is `(i << n) | j`, matching the discretised
//! distribution and the tables. `Π` projects the three ancillas onto `|111⟩`.

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::crca::{self, CrcaAnsatz, CrcaModel, CrcaTrainConfig, RotationTarget};
use crate::discretize::{self, Instance, ScalingOverrides};
use crate::linalg::CMat;
use crate::qcbm::{self, kl_divergence, QcbmAnsatz, QcbmTrainConfig, TrainResult as QcbmResult};
use crate::simulator::{run_zero, Circuit, Gate};
use crate::{Error, Result};

/// Fixed constants turning `⟨Π⟩` into a CVA value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvaConstants {
    pub m: usize,
    pub recovery: f64,
    pub c_v: f64,
    pub c_p: f64,
    pub c_q: f64,
}

impl CvaConstants {
    /// `2^m (1−R) C_v C_p C_q`.
    pub fn prefactor(&self) -> f64 {
        (1usize << self.m) as f64 * (1.0 - self.recovery) * self.c_v * self.c_p * self.c_q
    }
}

/// How `G_𝒫` is realised.
#[derive(Clone, Debug)]
pub enum StatePrep {
    /// Dense loader of `√p` — an exact stand-in for testing.
    Exact(Vec<f64>),
    /// Any `n+m`-qubit circuit (QCBM, compiled MPS) acting from `|0…0⟩`.
    Circuit(Circuit),
}

/// How one controlled rotation is realised.
#[derive(Clone, Debug)]
pub enum Rotation {
    /// The exact block-diagonal `R_f` for the listed values.
    Exact(Vec<f64>),
    Crca(CrcaModel),
}

impl Rotation {
    fn width(&self) -> usize {
        match self {
            Rotation::Exact(v) => v.len().trailing_zeros() as usize,
            Rotation::Crca(m) => m.ansatz.width,
        }
    }

    /// `f̃` realised on the ancilla.
    pub fn realised_values(&self) -> Vec<f64> {
        match self {
            Rotation::Exact(v) => v.clone(),
            Rotation::Crca(m) => m.f_tilde(),
        }
    }

    fn circuit(&self, register: &[usize], ancilla: usize, n_qubits: usize) -> Result<Circuit> {
        match self {
            Rotation::Exact(v) => {
                let u = crca::target_unitary(v)?;
                let mut qubits = vec![ancilla];
                qubits.extend_from_slice(register);
                let mut c = Circuit::new(n_qubits);
                c.push(Gate::Dense { qubits, matrix: u });
                Ok(c)
            }
            Rotation::Crca(m) => m.ansatz.circuit(&m.params, register, ancilla, n_qubits),
        }
    }
}

/// Householder reflection `I − 2wwᵀ/wᵀw` with `w = e₀ − √p`, mapping `|0⟩` to `Σ √p_x |x⟩`.
pub fn exact_loader(probs: &[f64]) -> Result<Gate> {
    let d = probs.len();
    if d < 2 || !d.is_power_of_two() {
        return Err(Error::invalid("distribution length must be a power of two >= 2"));
    }
    let z: f64 = probs.iter().sum();
    if probs.iter().any(|p| *p < 0.0) || !(z > 0.0) {
        return Err(Error::invalid("loader needs a non-negative distribution with mass"));
    }
    let psi: Vec<f64> = probs.iter().map(|p| (p / z).sqrt()).collect();
    let mut w: Vec<f64> = psi.iter().map(|a| -a).collect();
    w[0] += 1.0;
    let ww: f64 = w.iter().map(|v| v * v).sum();
    let matrix = if ww < 1e-30 {
        CMat::identity(d, d)
    } else {
        CMat::from_fn(d, d, |r, c| C64::new(if r == c { 1.0 } else { 0.0 } - 2.0 * w[r] * w[c] / ww, 0.0))
    };
    Ok(Gate::Dense { qubits: (0..d.trailing_zeros() as usize).collect(), matrix })
}

#[derive(Clone, Debug)]
pub struct AssembledCva {
    pub n: usize,
    pub m: usize,
    pub circuit: Circuit,
    pub constants: CvaConstants,
}

impl AssembledCva {
    pub fn payoff_ancilla(&self) -> usize {
        self.n + self.m
    }
    pub fn default_ancilla(&self) -> usize {
        self.n + self.m + 1
    }
    pub fn discount_ancilla(&self) -> usize {
        self.n + self.m + 2
    }
}

/// Rotation order after the payoff rotation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TimeRotationOrder {
    /// `R_q` then `R_p`.
    #[default]
    DefaultThenDiscount,
    DiscountThenDefault,
}

/// Builds `R_p R_q R_v G_𝒫` on `n + m + 3` qubits.
pub fn assemble(
    prep: &StatePrep,
    rv: &Rotation,
    rq: &Rotation,
    rp: &Rotation,
    n: usize,
    constants: CvaConstants,
    order: TimeRotationOrder,
) -> Result<AssembledCva> {
    let m = constants.m;
    let total = n + m + 3;
    if rv.width() != n + m {
        return Err(Error::Dimension { expected: n + m, got: rv.width() });
    }
    for r in [rq, rp] {
        if r.width() != m {
            return Err(Error::Dimension { expected: m, got: r.width() });
        }
    }
    let mut circuit = Circuit::new(total);
    match prep {
        StatePrep::Exact(p) => {
            if p.len() != 1 << (n + m) {
                return Err(Error::Dimension { expected: 1 << (n + m), got: p.len() });
            }
            circuit.push(exact_loader(p)?);
        }
        StatePrep::Circuit(c) => {
            if c.n_qubits != n + m {
                return Err(Error::Dimension { expected: n + m, got: c.n_qubits });
            }
            circuit.extend_mapped(c, &(0..n + m).collect::<Vec<_>>());
            circuit.global_phase += c.global_phase;
        }
    }
    let joint: Vec<usize> = (0..n + m).collect();
    let time: Vec<usize> = (n..n + m).collect();
    circuit.extend(&rv.circuit(&joint, n + m, total)?);
    let (first, second) = match order {
        TimeRotationOrder::DefaultThenDiscount => ((rq, n + m + 1), (rp, n + m + 2)),
        TimeRotationOrder::DiscountThenDefault => ((rp, n + m + 2), (rq, n + m + 1)),
    };
    circuit.extend(&first.0.circuit(&time, first.1, total)?);
    circuit.extend(&second.0.circuit(&time, second.1, total)?);
    circuit.validate()?;
    Ok(AssembledCva { n, m, circuit, constants })
}

/// `⟨ξ̃|Π|ξ̃⟩` by exact simulation.
pub fn pi_expectation(asm: &AssembledCva) -> Result<f64> {
    let psi = run_zero(&asm.circuit)?;
    let mask = 0b111usize << (asm.n + asm.m);
    Ok(psi.amplitudes.iter().enumerate().filter(|(i, _)| i & mask == mask).map(|(_, a)| a.norm_sqr()).sum::<f64>().clamp(0.0, 1.0))
}

/// `2^m (1−R) C_p C_q C_v ⟨ξ̃|Π|ξ̃⟩`.
pub fn quantum_cva(asm: &AssembledCva) -> Result<f64> {
    Ok(asm.constants.prefactor() * pi_expectation(asm)?)
}

/// Born distribution of a state-preparation option over the `n+m` register.
pub fn prep_distribution(prep: &StatePrep) -> Result<Vec<f64>> {
    match prep {
        StatePrep::Exact(p) => {
            let z: f64 = p.iter().sum();
            Ok(p.iter().map(|v| v / z).collect())
        }
        StatePrep::Circuit(c) => Ok(run_zero(c)?.probabilities()),
    }
}

/// Spectral CRCA errors (real-block convention) of the three rotations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RotationErrors {
    pub v: f64,
    pub q: f64,
    pub p: f64,
}

/// Reference values the report compares against.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct References {
    pub cva_mc: f64,
    /// `CVA~(n)` from the classical discretised sum.
    pub cva_discrete: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub cva_q: f64,
    pub epsilon_d: f64,
    pub epsilon_q: f64,
    pub epsilon_pi: f64,
    pub kl_g_tg: f64,
    pub epsilon_crca_v: f64,
    pub epsilon_crca_q: f64,
    pub epsilon_crca_p: f64,
    /// `√(2·KL(p_G‖p_tg)) + 2(ε_v + ε_q + ε_p)`.
    pub bound: f64,
    pub bound_holds: bool,
    /// Full-operator CRCA errors (phases kept), for reference.
    pub full_operator: Option<RotationErrors>,
}

fn rotation_error(r: &Rotation, target: &[f64]) -> Result<(f64, Option<f64>)> {
    let t = RotationTarget::new(target.to_vec())?;
    match r {
        Rotation::Exact(v) => Ok((crca::crca_error(v, &t)?.epsilon_spectral, None)),
        Rotation::Crca(m) => {
            Ok((crca::crca_error(&m.f_tilde(), &t)?.epsilon_spectral, Some(crca::full_operator_error(&m.ansatz, &m.params, &t)?)))
        }
    }
}

/// Ideal tables the trained components approximate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdealTables {
    /// Target distribution `p_tg` over the joint register.
    pub probs: Vec<f64>,
    pub v: Vec<f64>,
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

impl IdealTables {
    /// `Σ_x p(x) ṽ(x) q̃(t(x)) p̃(t(x))` — the ideal `⟨ξ|Π|ξ⟩`.
    pub fn pi_ideal(&self, n: usize) -> f64 {
        self.probs.iter().enumerate().map(|(x, pr)| pr * self.v[x] * self.q[x >> n] * self.p[x >> n]).sum()
    }
}

/// Error decomposition of an assembled instance built from `prep`, `rv`, `rq`, `rp`.
pub fn error_report(
    asm: &AssembledCva,
    prep: &StatePrep,
    rotations: [&Rotation; 3],
    ideal: &IdealTables,
    refs: &References,
) -> Result<ErrorReport> {
    let cva_q = quantum_cva(asm)?;
    let epsilon_q = (refs.cva_discrete - cva_q).abs();
    let p_g = prep_distribution(prep)?;
    let kl_g_tg = kl_divergence(&p_g, &ideal.probs)?;
    let (ev, fv) = rotation_error(rotations[0], &ideal.v)?;
    let (eq, fq) = rotation_error(rotations[1], &ideal.q)?;
    let (ep, fp) = rotation_error(rotations[2], &ideal.p)?;
    let bound = (2.0 * kl_g_tg).sqrt() + 2.0 * (ev + eq + ep);
    let pref = asm.constants.prefactor();
    let epsilon_pi = if pref > 0.0 { epsilon_q / pref } else { 0.0 };
    let full_operator = match (fv, fq, fp) {
        (None, None, None) => None,
        (v, q, p) => Some(RotationErrors { v: v.unwrap_or(0.0), q: q.unwrap_or(0.0), p: p.unwrap_or(0.0) }),
    };
    Ok(ErrorReport {
        cva_q,
        epsilon_d: (refs.cva_mc - refs.cva_discrete).abs(),
        epsilon_q,
        epsilon_pi,
        kl_g_tg,
        epsilon_crca_v: ev,
        epsilon_crca_q: eq,
        epsilon_crca_p: ep,
        bound,
        bound_holds: epsilon_pi <= bound + 1e-12,
        full_operator,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationCheck {
    pub epsilon_pi: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Random perturbations of every component (CRCA angles jittered by up to
/// `scale`, the loaded distribution reweighted by factors in `[1−scale, 1+scale]`);
/// checks the bound on each.
pub fn perturbation_sweep(
    n: usize,
    constants: CvaConstants,
    ideal: &IdealTables,
    base: [&CrcaModel; 3],
    count: usize,
    scale: f64,
    seed: u64,
) -> Result<Vec<PerturbationCheck>> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let refs = References { cva_mc: 0.0, cva_discrete: constants.prefactor() * ideal.pi_ideal(n) };
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let jitter = |m: &CrcaModel, rng: &mut ChaCha20Rng| {
            let mut m = m.clone();
            m.params.iter_mut().for_each(|p| *p += rng.random_range(-scale..=scale));
            m
        };
        let rv = Rotation::Crca(jitter(base[0], &mut rng));
        let rq = Rotation::Crca(jitter(base[1], &mut rng));
        let rp = Rotation::Crca(jitter(base[2], &mut rng));
        let probs: Vec<f64> = ideal.probs.iter().map(|p| p * (1.0 + rng.random_range(-scale..=scale))).collect();
        let prep = StatePrep::Exact(probs);
        let asm = assemble(&prep, &rv, &rq, &rp, n, constants, TimeRotationOrder::default())?;
        let rep = error_report(&asm, &prep, [&rv, &rq, &rp], ideal, &refs)?;
        out.push(PerturbationCheck { epsilon_pi: rep.epsilon_pi, bound: rep.bound, holds: rep.bound_holds });
    }
    Ok(out)
}

/// Settings of the end-to-end build: QCBM loader, three CRCA rotations, assembly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Price qubits `n` (the time register width comes from the instance).
    pub n: usize,
    pub qcbm_layers: usize,
    pub qcbm: QcbmTrainConfig,
    /// CRCA layers for the payoff rotation (`3·L·(n+m)` CNOTs).
    pub payoff_layers: usize,
    /// CRCA layers for the default-probability and discount rotations.
    pub time_layers: usize,
    pub crca: CrcaTrainConfig,
    pub overrides: ScalingOverrides,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            n: 2,
            qcbm_layers: 2,
            qcbm: QcbmTrainConfig::default(),
            payoff_layers: 2,
            time_layers: 1,
            crca: CrcaTrainConfig::default(),
            overrides: ScalingOverrides::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub assembled: AssembledCva,
    pub report: ErrorReport,
    pub cva_mc: f64,
    pub cva_discrete: f64,
    pub qcbm: QcbmResult,
    pub rotations: [CrcaModel; 3],
    pub ideal: IdealTables,
}

impl PipelineOutput {
    /// `(CNOT, single-qubit)` counts of the loader.
    pub fn loader_gates(&self) -> (usize, usize) {
        self.qcbm.ansatz.gate_counts()
    }

    /// CNOT counts of the payoff, default-probability and discount rotations.
    pub fn rotation_cnots(&self) -> [usize; 3] {
        [0, 1, 2].map(|k| self.rotations[k].ansatz.n_cnots())
    }
}

/// Discretises `inst`, trains every component and assembles the circuit.
pub fn run_pipeline(inst: &Instance, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let m = inst.m();
    let n = cfg.n;
    let (dist, f) = inst.discretize(n, cfg.overrides)?;
    let cva_discrete = discretize::cva_discrete(&dist, &f)?;
    let cva_mc = inst.cva_mc()?.value;
    let ideal = IdealTables { probs: dist.probs.clone(), v: f.v_tilde.clone(), q: f.q_tilde.clone(), p: f.p_tilde.clone() };

    let ansatz = QcbmAnsatz::new(n + m, cfg.qcbm_layers)?;
    let qcbm = qcbm::train_qcbm(&ansatz, &ideal.probs, &QcbmTrainConfig { seed: cfg.seed, ..cfg.qcbm.clone() })?;
    let crca_cfg = |k: u64| CrcaTrainConfig { seed: cfg.seed.wrapping_mul(3).wrapping_add(k), ..cfg.crca.clone() };
    let mv = crca::train_crca(&RotationTarget::new(ideal.v.clone())?, CrcaAnsatz::new(n + m, cfg.payoff_layers)?, &crca_cfg(1))?;
    let mq = crca::train_crca(&RotationTarget::new(ideal.q.clone())?, CrcaAnsatz::new(m, cfg.time_layers)?, &crca_cfg(2))?;
    let mp = crca::train_crca(&RotationTarget::new(ideal.p.clone())?, CrcaAnsatz::new(m, cfg.time_layers)?, &crca_cfg(3))?;

    let constants = CvaConstants { m, recovery: f.recovery, c_v: f.c_v, c_p: f.c_p, c_q: f.c_q };
    let prep = StatePrep::Circuit(ansatz.circuit(&qcbm.params)?);
    let (rv, rq, rp) = (Rotation::Crca(mv.clone()), Rotation::Crca(mq.clone()), Rotation::Crca(mp.clone()));
    let assembled = assemble(&prep, &rv, &rq, &rp, n, constants, TimeRotationOrder::default())?;
    let report = error_report(&assembled, &prep, [&rv, &rq, &rp], &ideal, &References { cva_mc, cva_discrete })?;
    Ok(PipelineOutput { assembled, report, cva_mc, cva_discrete, qcbm, rotations: [mv, mq, mp], ideal })
}
