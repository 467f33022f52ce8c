//! Fault-tolerant runtime model and the classical/quantum crossover.
//!
//! Surface-code overheads follow the usual rules of thumb: with physical
//! error rate `p` and distance `d`, the logical error per round is
//! `0.1·(p/0.01)^{(d+1)/2}`, a non-Clifford gate takes `100d` rounds, so
//! `f_nc = (1 − 0.1·(p/0.01)^{(d+1)/2})^{100d}` — at `p = 10⁻³` this is
//! `(1 − 10^{−(d+3)/2})^{100d}`. Two-qubit gates inherit `f_nc` and `t_nc`.
//!
//! The quantum runtime for an absolute error `ε` on `⟨Π⟩` is
//!
//! ```text
//! T(ε) = t_2Q · M · e^{−λ}/p̄² · ( λ/ε² + 1/(√2 ε) + √((λ/ε²)² + (2√2/ε)²) )
//! ```
//!
//! with `λ = M ln(1/f_2Q)`, the big-O constant set to 1. Relative errors are
//! turned into absolute ones with `ε = RE · ⟨Π⟩`.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::market::{self, DiscountCurve, HazardCurve, MarketSpec};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HardwareModel {
    pub gate_error: f64,
    pub distance: usize,
    /// Surface-code cycle time in seconds.
    pub cycle_time: f64,
}

impl Default for HardwareModel {
    fn default() -> Self {
        HardwareModel { gate_error: 1e-3, distance: 18, cycle_time: 1e-6 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfaceOverhead {
    pub f_nc: f64,
    pub t_nc: f64,
    pub physical_qubits_per_logical: usize,
    /// Readout fidelity `p̄ = f_nc³` (Π acts on three qubits).
    pub readout: f64,
    pub f_2q: f64,
    pub t_2q: f64,
}

/// Logical error per code cycle.
pub fn logical_error_rate(gate_error: f64, distance: usize) -> f64 {
    0.1 * (gate_error / 0.01).powf((distance as f64 + 1.0) / 2.0)
}

pub fn surface_overhead(hw: &HardwareModel) -> Result<SurfaceOverhead> {
    if hw.distance < 3 {
        return Err(Error::invalid(format!("code distance {} below 3", hw.distance)));
    }
    if !(hw.gate_error > 0.0 && hw.gate_error < 0.01) {
        return Err(Error::invalid("physical gate error must lie in (0, 1e-2)"));
    }
    if !(hw.cycle_time > 0.0) {
        return Err(Error::invalid("cycle time must be positive"));
    }
    let rounds = 100.0 * hw.distance as f64;
    let f_nc = (rounds * (-logical_error_rate(hw.gate_error, hw.distance)).ln_1p()).exp();
    let t_nc = rounds * hw.cycle_time;
    Ok(SurfaceOverhead {
        f_nc,
        t_nc,
        physical_qubits_per_logical: 2 * hw.distance * hw.distance,
        readout: f_nc.powi(3),
        f_2q: f_nc,
        t_2q: t_nc,
    })
}

/// Two-qubit gates of one ELF layer and the qubits it touches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CircuitFootprint {
    pub logical_qubits: usize,
    /// `M`: two-qubit gates per layer.
    pub two_qubit_per_layer: usize,
}

impl CircuitFootprint {
    /// `λ = M ln(1/f_2Q)`.
    pub fn lambda(&self, f_2q: f64) -> f64 {
        self.two_qubit_per_layer as f64 * (1.0 / f_2q).ln()
    }
}

/// Two-qubit gates of `A` in the reference instance: 12 (QCBM) + 24 (payoff CRCA)
/// + 6 (one time-register CRCA). This is the split that reproduces `M = 136`.
pub const REFERENCE_BASE_TWO_QUBIT: usize = 42;

/// `R_0(y)` on `k = n+m+3` qubits: `k−1` Toffolis computing an AND tree into
/// `k−1` ancillas, uncomputed afterwards, 4 two-qubit gates per Toffoli.
pub fn reflection_two_qubit(n: usize, m: usize) -> usize {
    8 * (n + m + 2)
}

/// `exp(ixΠ)` on three qubits.
pub const PROJECTOR_PHASE_TWO_QUBIT: usize = 4;

/// One layer is `V(y) U(x) = A R_0(y) A† exp(ixΠ)`, so
/// `M = 2·base + 8(n+m+2) + 4`; qubits: `n+m+3` plus `n+m+2` ancillas.
pub fn elf_footprint(n: usize, m: usize, base_two_qubit: usize) -> CircuitFootprint {
    CircuitFootprint {
        logical_qubits: 2 * (n + m) + 5,
        two_qubit_per_layer: 2 * base_two_qubit + reflection_two_qubit(n, m) + PROJECTOR_PHASE_TWO_QUBIT,
    }
}

/// Error convention for the runtime formula.
pub fn absolute_epsilon(relative_error: f64, pi_expectation: f64) -> f64 {
    relative_error * pi_expectation
}

/// Quantum runtime (seconds) for absolute error `eps`.
pub fn quantum_runtime(eps: f64, fp: &CircuitFootprint, hw: &SurfaceOverhead) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::invalid("epsilon must be positive"));
    }
    let lambda = fp.lambda(hw.f_2q);
    Ok(runtime_formula(eps, lambda, hw.t_2q, fp.two_qubit_per_layer, hw.readout))
}

/// The bare formula, exposed for limit studies.
pub fn runtime_formula(eps: f64, lambda: f64, t_2q: f64, m: usize, readout: f64) -> f64 {
    let a = lambda / (eps * eps);
    let b = 2.0 * 2f64.sqrt() / eps;
    t_2q * m as f64 * (-lambda).exp() / (readout * readout) * (a + 1.0 / (2f64.sqrt() * eps) + a.hypot(b))
}

/// Quantum runtime as a function of relative error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantumModel {
    pub footprint: CircuitFootprint,
    pub overhead: SurfaceOverhead,
    pub pi_expectation: f64,
}

impl QuantumModel {
    pub fn new(hw: &HardwareModel, footprint: CircuitFootprint, pi_expectation: f64) -> Result<Self> {
        Ok(QuantumModel { footprint, overhead: surface_overhead(hw)?, pi_expectation })
    }

    pub fn seconds(&self, relative_error: f64) -> Result<f64> {
        quantum_runtime(absolute_epsilon(relative_error, self.pi_expectation), &self.footprint, &self.overhead)
    }
}

/// `T = e^{a} (1/RE)^{b}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassicalModel {
    pub log_a: f64,
    pub b: f64,
}

impl ClassicalModel {
    /// Anchored at one runtime with a fixed exponent.
    pub fn anchored(relative_error: f64, seconds: f64, b: f64) -> Self {
        ClassicalModel { log_a: seconds.ln() - b * (1.0 / relative_error).ln(), b }
    }

    pub fn seconds(&self, relative_error: f64) -> f64 {
        (self.log_a + self.b * (1.0 / relative_error).ln()).exp()
    }
}

/// Least-squares line `y = slope·x + intercept`.
pub fn log_fit(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.len() != ys.len() {
        return Err(Error::Dimension { expected: xs.len(), got: ys.len() });
    }
    if xs.len() < 2 {
        return Err(Error::DegenerateFit { needed: 2, got: xs.len() });
    }
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::DegenerateFit { needed: 2, got: 1 });
    }
    let slope = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / sxx;
    Ok((slope, my - slope * mx))
}

/// One timed Monte Carlo run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPoint {
    pub paths: usize,
    pub value: f64,
    pub stderr: f64,
    pub relative_error: f64,
    pub seconds: f64,
}

/// Times `cva_mc` at each path count (best of `repeats` wall-clock timings).
pub fn calibrate_classical(
    spec: &MarketSpec,
    curve: &DiscountCurve,
    hazard: &HazardCurve,
    m: usize,
    path_counts: &[usize],
    repeats: usize,
    seed: u64,
) -> Result<Vec<CalibrationPoint>> {
    let mut out = Vec::with_capacity(path_counts.len());
    for &paths in path_counts {
        let mut best = f64::INFINITY;
        let mut est = None;
        for _ in 0..repeats.max(1) {
            let t0 = Instant::now();
            let e = market::cva_mc(spec, curve, hazard, m, paths, seed)?;
            best = best.min(t0.elapsed().as_secs_f64());
            est = Some(e);
        }
        let e = est.expect("at least one repeat");
        out.push(CalibrationPoint { paths, value: e.value, stderr: e.stderr, relative_error: e.stderr / e.value, seconds: best });
    }
    Ok(out)
}

/// Fits `log T = a + b log(1/RE)` to calibration points.
pub fn classical_runtime(points: &[CalibrationPoint]) -> Result<ClassicalModel> {
    if points.len() < 3 {
        return Err(Error::DegenerateFit { needed: 3, got: points.len() });
    }
    let xs: Vec<f64> = points.iter().map(|p| (1.0 / p.relative_error).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.seconds.ln()).collect();
    let (b, log_a) = log_fit(&xs, &ys)?;
    Ok(ClassicalModel { log_a, b })
}

/// Log-log slope of `f` against `ε` over `[lo, hi]` sampled at `points` log-spaced values.
pub fn loglog_slope(f: impl Fn(f64) -> Result<f64>, lo: f64, hi: f64, points: usize) -> Result<f64> {
    let grid = log_grid(lo, hi, points);
    let xs: Vec<f64> = grid.iter().map(|e| e.ln()).collect();
    let ys = grid.iter().map(|e| f(*e).map(f64::ln)).collect::<Result<Vec<_>>>()?;
    Ok(log_fit(&xs, &ys)?.0)
}

/// `points` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points < 2 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..points).map(|k| (a + (b - a) * k as f64 / (points - 1) as f64).exp()).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Crossover {
    /// Largest relative error at which the quantum runtime is no longer above
    /// the classical one; `None` when the curves do not cross on the grid.
    pub relative_error: Option<f64>,
    pub seconds: Option<f64>,
}

/// Solves `T_Q(RE) = T_C(RE)` by bisection in `log RE` on the first sign change
/// of the grid (scanned from large to small RE).
pub fn crossover(quantum: &QuantumModel, classical: &ClassicalModel, re_grid: &[f64]) -> Result<Crossover> {
    let mut grid = re_grid.to_vec();
    grid.sort_by(|a, b| b.total_cmp(a));
    let gap = |re: f64| -> Result<f64> { Ok(quantum.seconds(re)?.ln() - classical.seconds(re).ln()) };
    for w in grid.windows(2) {
        let (g0, g1) = (gap(w[0])?, gap(w[1])?);
        if g0 == 0.0 {
            return Ok(Crossover { relative_error: Some(w[0]), seconds: Some(classical.seconds(w[0])) });
        }
        if g0.signum() != g1.signum() {
            let (mut lo, mut hi) = (w[1].ln(), w[0].ln());
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if gap(mid.exp())?.signum() == g1.signum() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let re = (0.5 * (lo + hi)).exp();
            return Ok(Crossover { relative_error: Some(re), seconds: Some(classical.seconds(re)) });
        }
    }
    Ok(Crossover { relative_error: None, seconds: None })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuntimeRow {
    pub d: usize,
    pub epsilon_rel: f64,
    #[serde(rename = "T_quantum_s")]
    pub t_quantum_s: f64,
    #[serde(rename = "T_classical_s")]
    pub t_classical_s: f64,
}

/// Runtime table over code distances and relative errors.
pub fn runtime_table(
    base: &HardwareModel,
    distances: &[usize],
    footprint: CircuitFootprint,
    pi_expectation: f64,
    classical: &ClassicalModel,
    re_grid: &[f64],
) -> Result<Vec<RuntimeRow>> {
    let mut rows = Vec::new();
    for &d in distances {
        let q = QuantumModel::new(&HardwareModel { distance: d, ..*base }, footprint, pi_expectation)?;
        for &re in re_grid {
            rows.push(RuntimeRow { d, epsilon_rel: re, t_quantum_s: q.seconds(re)?, t_classical_s: classical.seconds(re) });
        }
    }
    Ok(rows)
}

pub fn write_runtime_csv<W: Write>(w: W, rows: &[RuntimeRow]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush().map_err(|source| Error::Io { path: "<runtime>".into(), source })?;
    Ok(())
}

/// Distance minimising the quantum runtime at `relative_error`.
pub fn optimal_distance(base: &HardwareModel, distances: &[usize], footprint: CircuitFootprint, pi_expectation: f64, relative_error: f64) -> Result<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for &d in distances {
        let t = QuantumModel::new(&HardwareModel { distance: d, ..*base }, footprint, pi_expectation)?.seconds(relative_error)?;
        if best.is_none_or(|(_, bt)| t < bt) {
            best = Some((d, t));
        }
    }
    best.ok_or_else(|| Error::invalid("no code distances"))
}
