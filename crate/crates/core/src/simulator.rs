//! Dense statevector simulator and the gate-list circuit representation.
//!
//! Conventions used by every other module:
//!
//! * qubit 0 is the least significant bit of a basis index;
//! * `Rx/Ry/Rz(θ) = exp(-iθσ/2)`;
//! * `XX(θ) = exp(-iθ X⊗X)` (no factor ½, matching the ion-trap native gate);
//! * a dense k-qubit matrix acting on `qubits = [q0, q1, ...]` uses `q0` as the
//!   least significant bit of its row/column index.
//!
//! Circuits carry a global phase so that compiled circuits can be compared to
//! their source unitaries exactly, not only up to phase.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::{Error, Result};

/// Largest register the dense simulator accepts.
pub const MAX_QUBITS: usize = 24;

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// A 2×2 complex matrix in row-major order.
pub type Mat2 = [[C64; 2]; 2];

#[derive(Clone, Debug, PartialEq)]
pub enum Gate {
    H(usize),
    X(usize),
    Rx(usize, f64),
    Ry(usize, f64),
    Rz(usize, f64),
    /// Arbitrary single-qubit unitary.
    U(usize, Mat2),
    /// `exp(-iθ X_a X_b)`.
    Xx(usize, usize, f64),
    Cnot {
        control: usize,
        target: usize,
    },
    /// Ry on `target`, applied only when every control qubit holds its required value.
    ControlledRy {
        controls: Vec<usize>,
        values: Vec<bool>,
        target: usize,
        theta: f64,
    },
    /// `exp(iy |b⟩⟨b|)` on the listed qubits (basis state `b` in their local ordering).
    DiagonalPhase {
        qubits: Vec<usize>,
        basis: usize,
        phase: f64,
    },
    Dense {
        qubits: Vec<usize>,
        matrix: DMatrix<C64>,
    },
}

impl Gate {
    /// Qubits the gate touches (controls included).
    pub fn qubits(&self) -> Vec<usize> {
        match self {
            Gate::H(q) | Gate::X(q) | Gate::Rx(q, _) | Gate::Ry(q, _) | Gate::Rz(q, _) | Gate::U(q, _) => vec![*q],
            Gate::Xx(a, b, _) => vec![*a, *b],
            Gate::Cnot { control, target } => vec![*control, *target],
            Gate::ControlledRy { controls, target, .. } => {
                let mut v = controls.clone();
                v.push(*target);
                v
            }
            Gate::DiagonalPhase { qubits, .. } | Gate::Dense { qubits, .. } => qubits.clone(),
        }
    }

    pub fn is_single_qubit(&self) -> bool {
        matches!(self, Gate::H(_) | Gate::X(_) | Gate::Rx(..) | Gate::Ry(..) | Gate::Rz(..) | Gate::U(..))
    }

    pub fn inverse(&self) -> Gate {
        match self {
            Gate::H(q) => Gate::H(*q),
            Gate::X(q) => Gate::X(*q),
            Gate::Rx(q, t) => Gate::Rx(*q, -t),
            Gate::Ry(q, t) => Gate::Ry(*q, -t),
            Gate::Rz(q, t) => Gate::Rz(*q, -t),
            Gate::U(q, m) => Gate::U(*q, adjoint2(m)),
            Gate::Xx(a, b, t) => Gate::Xx(*a, *b, -t),
            Gate::Cnot { .. } => self.clone(),
            Gate::ControlledRy { controls, values, target, theta } => Gate::ControlledRy {
                controls: controls.clone(),
                values: values.clone(),
                target: *target,
                theta: -theta,
            },
            Gate::DiagonalPhase { qubits, basis, phase } => Gate::DiagonalPhase {
                qubits: qubits.clone(),
                basis: *basis,
                phase: -phase,
            },
            Gate::Dense { qubits, matrix } => Gate::Dense {
                qubits: qubits.clone(),
                matrix: matrix.adjoint(),
            },
        }
    }

    /// The 2×2 matrix of a single-qubit gate.
    pub fn matrix2(&self) -> Option<Mat2> {
        let z = C64::new(0.0, 0.0);
        let one = C64::new(1.0, 0.0);
        Some(match *self {
            Gate::H(_) => {
                let h = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
                [[h, h], [h, -h]]
            }
            Gate::X(_) => [[z, one], [one, z]],
            Gate::Rx(_, t) => {
                let (s, c) = (t / 2.0).sin_cos();
                [[C64::new(c, 0.0), -I * s], [-I * s, C64::new(c, 0.0)]]
            }
            Gate::Ry(_, t) => ry_matrix(t),
            Gate::Rz(_, t) => [[C64::from_polar(1.0, -t / 2.0), z], [z, C64::from_polar(1.0, t / 2.0)]],
            Gate::U(_, m) => m,
            _ => return None,
        })
    }

    fn validate(&self, n_qubits: usize) -> Result<()> {
        let qs = self.qubits();
        for (k, &q) in qs.iter().enumerate() {
            if q >= n_qubits {
                return Err(Error::QubitOutOfRange { qubit: q, n_qubits });
            }
            if qs[..k].contains(&q) {
                return Err(Error::RepeatedQubit(q));
            }
        }
        match self {
            Gate::ControlledRy { controls, values, .. } if controls.len() != values.len() => {
                Err(Error::Dimension { expected: controls.len(), got: values.len() })
            }
            Gate::DiagonalPhase { qubits, basis, .. } if *basis >= 1 << qubits.len() => {
                Err(Error::invalid(format!("basis index {basis} out of range for {} qubits", qubits.len())))
            }
            Gate::Dense { qubits, matrix } => {
                let d = 1 << qubits.len();
                if matrix.nrows() != d || matrix.ncols() != d {
                    return Err(Error::Dimension { expected: d, got: matrix.nrows() });
                }
                let dev = unitarity_deviation(matrix);
                if dev > 1e-10 {
                    return Err(Error::NotUnitary(dev));
                }
                Ok(())
            }
            Gate::U(_, m) => {
                let mm = DMatrix::from_fn(2, 2, |r, c| m[r][c]);
                let dev = unitarity_deviation(&mm);
                if dev > 1e-10 {
                    return Err(Error::NotUnitary(dev));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

pub fn ry_matrix(t: f64) -> Mat2 {
    let (s, c) = (t / 2.0).sin_cos();
    [[C64::new(c, 0.0), C64::new(-s, 0.0)], [C64::new(s, 0.0), C64::new(c, 0.0)]]
}

pub fn adjoint2(m: &Mat2) -> Mat2 {
    [[m[0][0].conj(), m[1][0].conj()], [m[0][1].conj(), m[1][1].conj()]]
}

pub fn mul2(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut r = [[C64::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            r[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    r
}

/// Max-entry deviation of `U†U` from the identity.
pub fn unitarity_deviation(m: &DMatrix<C64>) -> f64 {
    let p = m.adjoint() * m;
    let mut dev: f64 = 0.0;
    for r in 0..p.nrows() {
        for c in 0..p.ncols() {
            let target = if r == c { 1.0 } else { 0.0 };
            dev = dev.max((p[(r, c)] - target).norm());
        }
    }
    dev
}

#[derive(Clone, Debug, PartialEq)]
pub struct Circuit {
    pub n_qubits: usize,
    pub gates: Vec<Gate>,
    /// Global phase `e^{iφ}` multiplying the whole circuit.
    pub global_phase: f64,
}

impl Circuit {
    pub fn new(n_qubits: usize) -> Self {
        Circuit { n_qubits, gates: Vec::new(), global_phase: 0.0 }
    }

    pub fn push(&mut self, g: Gate) -> &mut Self {
        self.gates.push(g);
        self
    }

    /// Append another circuit acting on the same or a smaller register.
    pub fn extend(&mut self, other: &Circuit) {
        self.gates.extend(other.gates.iter().cloned());
        self.global_phase += other.global_phase;
    }

    /// Append `other` with its qubit `k` relabelled to `map[k]`.
    pub fn extend_mapped(&mut self, other: &Circuit, map: &[usize]) {
        for g in &other.gates {
            self.gates.push(remap_gate(g, map));
        }
        self.global_phase += other.global_phase;
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_qubits > MAX_QUBITS {
            return Err(Error::invalid(format!("{} qubits exceeds the dense limit {MAX_QUBITS}", self.n_qubits)));
        }
        self.gates.iter().try_for_each(|g| g.validate(self.n_qubits))
    }

    pub fn inverse(&self) -> Circuit {
        Circuit {
            n_qubits: self.n_qubits,
            gates: self.gates.iter().rev().map(Gate::inverse).collect(),
            global_phase: -self.global_phase,
        }
    }

    pub fn cnot_count(&self) -> usize {
        self.gates.iter().filter(|g| matches!(g, Gate::Cnot { .. })).count()
    }

    pub fn single_qubit_count(&self) -> usize {
        self.gates.iter().filter(|g| g.is_single_qubit()).count()
    }

    /// Gates touching two or more qubits, whatever their kind.
    pub fn multi_qubit_count(&self) -> usize {
        self.gates.iter().filter(|g| g.qubits().len() >= 2).count()
    }

    /// Rewrites every `XX(θ)` as `H⊗H · CNOT · Rz(2θ) · CNOT · H⊗H`.
    pub fn with_xx_decomposed(&self) -> Circuit {
        let mut out = Circuit { n_qubits: self.n_qubits, gates: Vec::new(), global_phase: self.global_phase };
        for g in &self.gates {
            if let Gate::Xx(a, b, t) = *g {
                out.gates.extend([
                    Gate::H(a),
                    Gate::H(b),
                    Gate::Cnot { control: a, target: b },
                    Gate::Rz(b, 2.0 * t),
                    Gate::Cnot { control: a, target: b },
                    Gate::H(a),
                    Gate::H(b),
                ]);
            } else {
                out.gates.push(g.clone());
            }
        }
        out
    }

    /// Dense unitary of the whole circuit (columns are images of basis states).
    pub fn unitary(&self) -> Result<DMatrix<C64>> {
        let d = 1usize << self.n_qubits;
        let mut u = DMatrix::zeros(d, d);
        for col in 0..d {
            let psi = run(self, &StateVector::basis(self.n_qubits, col))?;
            for row in 0..d {
                u[(row, col)] = psi.amplitudes[row];
            }
        }
        Ok(u)
    }

    /// Line-oriented text form; `Circuit::parse` inverts it exactly.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "qubits {}", self.n_qubits);
        let _ = writeln!(s, "phase {:e}", self.global_phase);
        for g in &self.gates {
            match g {
                Gate::H(q) => { let _ = writeln!(s, "H {q}"); }
                Gate::X(q) => { let _ = writeln!(s, "X {q}"); }
                Gate::Rx(q, t) => { let _ = writeln!(s, "RX {q} {t:e}"); }
                Gate::Ry(q, t) => { let _ = writeln!(s, "RY {q} {t:e}"); }
                Gate::Rz(q, t) => { let _ = writeln!(s, "RZ {q} {t:e}"); }
                Gate::U(q, m) => {
                    let _ = write!(s, "U {q}");
                    for z in m.iter().flatten() {
                        let _ = write!(s, " {:e} {:e}", z.re, z.im);
                    }
                    s.push('\n');
                }
                Gate::Xx(a, b, t) => { let _ = writeln!(s, "XX {a} {b} {t:e}"); }
                Gate::Cnot { control, target } => { let _ = writeln!(s, "CNOT {control} {target}"); }
                Gate::ControlledRy { controls, values, target, theta } => {
                    let _ = write!(s, "CRY {target} {}", controls.len());
                    for (c, v) in controls.iter().zip(values) {
                        let _ = write!(s, " {c}:{}", u8::from(*v));
                    }
                    let _ = writeln!(s, " {theta:e}");
                }
                Gate::DiagonalPhase { qubits, basis, phase } => {
                    let _ = write!(s, "PHASE {}", qubits.len());
                    for q in qubits {
                        let _ = write!(s, " {q}");
                    }
                    let _ = writeln!(s, " {basis} {phase:e}");
                }
                Gate::Dense { qubits, matrix } => {
                    let _ = write!(s, "DENSE {}", qubits.len());
                    for q in qubits {
                        let _ = write!(s, " {q}");
                    }
                    for r in 0..matrix.nrows() {
                        for c in 0..matrix.ncols() {
                            let z = matrix[(r, c)];
                            let _ = write!(s, " {:e} {:e}", z.re, z.im);
                        }
                    }
                    s.push('\n');
                }
            }
        }
        s
    }

    pub fn parse(text: &str) -> Result<Circuit> {
        let mut n_qubits = None;
        let mut phase = 0.0;
        let mut gates = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: &str| Error::Parse { line: ln + 1, msg: msg.to_string() };
            let toks: Vec<&str> = line.split_whitespace().collect();
            let mut it = toks.iter().skip(1);
            let mut us = || -> Result<usize> {
                it.next().ok_or_else(|| err("missing field"))?.parse().map_err(|_| err("bad integer"))
            };
            let f = |t: &str| -> Result<f64> { t.parse().map_err(|_| err("bad number")) };
            match toks[0] {
                "qubits" => n_qubits = Some(us()?),
                "phase" => phase = f(toks.get(1).ok_or_else(|| err("missing phase"))?)?,
                "H" => gates.push(Gate::H(us()?)),
                "X" => gates.push(Gate::X(us()?)),
                "RX" | "RY" | "RZ" => {
                    let q = us()?;
                    let t = f(toks.get(2).ok_or_else(|| err("missing angle"))?)?;
                    gates.push(match toks[0] {
                        "RX" => Gate::Rx(q, t),
                        "RY" => Gate::Ry(q, t),
                        _ => Gate::Rz(q, t),
                    });
                }
                "U" => {
                    let q = us()?;
                    if toks.len() != 10 {
                        return Err(err("U needs 8 numbers"));
                    }
                    let v: Vec<f64> = toks[2..].iter().map(|t| f(t)).collect::<Result<_>>()?;
                    let c = |k: usize| C64::new(v[2 * k], v[2 * k + 1]);
                    gates.push(Gate::U(q, [[c(0), c(1)], [c(2), c(3)]]));
                }
                "XX" => {
                    let a = us()?;
                    let b = us()?;
                    let t = f(toks.get(3).ok_or_else(|| err("missing angle"))?)?;
                    gates.push(Gate::Xx(a, b, t));
                }
                "CNOT" => {
                    let control = us()?;
                    let target = us()?;
                    gates.push(Gate::Cnot { control, target });
                }
                "CRY" => {
                    let target = us()?;
                    let k = us()?;
                    if toks.len() != 4 + k {
                        return Err(err("CRY field count"));
                    }
                    let mut controls = Vec::with_capacity(k);
                    let mut values = Vec::with_capacity(k);
                    for t in &toks[3..3 + k] {
                        let (c, v) = t.split_once(':').ok_or_else(|| err("control must be q:v"))?;
                        controls.push(c.parse().map_err(|_| err("bad control"))?);
                        values.push(v == "1");
                    }
                    let theta = f(toks[3 + k])?;
                    gates.push(Gate::ControlledRy { controls, values, target, theta });
                }
                "PHASE" => {
                    let k = us()?;
                    if toks.len() != 4 + k {
                        return Err(err("PHASE field count"));
                    }
                    let qubits = (0..k).map(|_| us()).collect::<Result<Vec<_>>>()?;
                    let basis = us()?;
                    let phase = f(toks[3 + k])?;
                    gates.push(Gate::DiagonalPhase { qubits, basis, phase });
                }
                "DENSE" => {
                    let k = us()?;
                    let d = 1usize << k;
                    if toks.len() != 2 + k + 2 * d * d {
                        return Err(err("DENSE field count"));
                    }
                    let qubits = (0..k).map(|_| us()).collect::<Result<Vec<_>>>()?;
                    let v: Vec<f64> = toks[2 + k..].iter().map(|t| f(t)).collect::<Result<_>>()?;
                    let matrix = DMatrix::from_fn(d, d, |r, c| C64::new(v[2 * (r * d + c)], v[2 * (r * d + c) + 1]));
                    gates.push(Gate::Dense { qubits, matrix });
                }
                other => return Err(err(&format!("unknown gate {other}"))),
            }
        }
        let n_qubits = n_qubits.ok_or(Error::Parse { line: 0, msg: "missing `qubits` header".into() })?;
        let c = Circuit { n_qubits, gates, global_phase: phase };
        c.validate()?;
        Ok(c)
    }
}

fn remap_gate(g: &Gate, map: &[usize]) -> Gate {
    let m = |q: &usize| map[*q];
    match g {
        Gate::H(q) => Gate::H(m(q)),
        Gate::X(q) => Gate::X(m(q)),
        Gate::Rx(q, t) => Gate::Rx(m(q), *t),
        Gate::Ry(q, t) => Gate::Ry(m(q), *t),
        Gate::Rz(q, t) => Gate::Rz(m(q), *t),
        Gate::U(q, u) => Gate::U(m(q), *u),
        Gate::Xx(a, b, t) => Gate::Xx(m(a), m(b), *t),
        Gate::Cnot { control, target } => Gate::Cnot { control: m(control), target: m(target) },
        Gate::ControlledRy { controls, values, target, theta } => Gate::ControlledRy {
            controls: controls.iter().map(m).collect(),
            values: values.clone(),
            target: m(target),
            theta: *theta,
        },
        Gate::DiagonalPhase { qubits, basis, phase } => Gate::DiagonalPhase {
            qubits: qubits.iter().map(m).collect(),
            basis: *basis,
            phase: *phase,
        },
        Gate::Dense { qubits, matrix } => Gate::Dense { qubits: qubits.iter().map(m).collect(), matrix: matrix.clone() },
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    pub n_qubits: usize,
    pub amplitudes: Vec<C64>,
}

impl StateVector {
    pub fn zero(n_qubits: usize) -> Self {
        Self::basis(n_qubits, 0)
    }

    pub fn basis(n_qubits: usize, index: usize) -> Self {
        let mut amplitudes = vec![C64::new(0.0, 0.0); 1 << n_qubits];
        amplitudes[index] = C64::new(1.0, 0.0);
        StateVector { n_qubits, amplitudes }
    }

    /// Wraps amplitudes, checking the length is a power of two and the norm is 1.
    pub fn from_amplitudes(amplitudes: Vec<C64>) -> Result<Self> {
        let len = amplitudes.len();
        if len == 0 || !len.is_power_of_two() {
            return Err(Error::invalid(format!("state length {len} is not a power of two")));
        }
        let s = StateVector { n_qubits: len.trailing_zeros() as usize, amplitudes };
        let nrm = s.norm();
        if (nrm - 1.0).abs() > 1e-10 {
            return Err(Error::invalid(format!("state norm {nrm} differs from 1")));
        }
        Ok(s)
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        if self.amplitudes.len() != other.amplitudes.len() {
            return Err(Error::Dimension { expected: self.amplitudes.len(), got: other.amplitudes.len() });
        }
        Ok(self.amplitudes.iter().zip(&other.amplitudes).map(|(a, b)| a.conj() * b).sum())
    }

    pub fn apply_gate(&mut self, g: &Gate) {
        let amps = &mut self.amplitudes;
        match g {
            Gate::Xx(a, b, t) => {
                let mask = (1usize << a) | (1usize << b);
                let (s, c) = t.sin_cos();
                for i in 0..amps.len() {
                    let j = i ^ mask;
                    if i < j {
                        let (x, y) = (amps[i], amps[j]);
                        amps[i] = x * c - I * s * y;
                        amps[j] = y * c - I * s * x;
                    }
                }
            }
            Gate::Cnot { control, target } => {
                let (cb, tb) = (1usize << control, 1usize << target);
                for i in 0..amps.len() {
                    if i & cb != 0 && i & tb == 0 {
                        amps.swap(i, i | tb);
                    }
                }
            }
            Gate::ControlledRy { controls, values, target, theta } => {
                let m = ry_matrix(*theta);
                let (mut cmask, mut cval) = (0usize, 0usize);
                for (c, v) in controls.iter().zip(values) {
                    cmask |= 1 << c;
                    if *v {
                        cval |= 1 << c;
                    }
                }
                let tb = 1usize << target;
                for i in 0..amps.len() {
                    if i & tb == 0 && i & cmask == cval {
                        let (x, y) = (amps[i], amps[i | tb]);
                        amps[i] = m[0][0] * x + m[0][1] * y;
                        amps[i | tb] = m[1][0] * x + m[1][1] * y;
                    }
                }
            }
            Gate::DiagonalPhase { qubits, basis, phase } => {
                let (mut mask, mut val) = (0usize, 0usize);
                for (k, q) in qubits.iter().enumerate() {
                    mask |= 1 << q;
                    if basis >> k & 1 == 1 {
                        val |= 1 << q;
                    }
                }
                let z = C64::from_polar(1.0, *phase);
                for (i, a) in amps.iter_mut().enumerate() {
                    if i & mask == val {
                        *a *= z;
                    }
                }
            }
            Gate::Dense { qubits, matrix } => apply_dense(amps, qubits, matrix),
            single => {
                let q = single.qubits()[0];
                let m = single.matrix2().expect("single-qubit gate");
                apply_1q(amps, q, &m);
            }
        }
    }
}

fn apply_1q(amps: &mut [C64], q: usize, m: &Mat2) {
    let tb = 1usize << q;
    let len = amps.len();
    let mut base = 0;
    while base < len {
        for i in base..base + tb {
            let (x, y) = (amps[i], amps[i + tb]);
            amps[i] = m[0][0] * x + m[0][1] * y;
            amps[i + tb] = m[1][0] * x + m[1][1] * y;
        }
        base += 2 * tb;
    }
}

fn apply_dense(amps: &mut [C64], qubits: &[usize], matrix: &DMatrix<C64>) {
    let k = qubits.len();
    let d = 1usize << k;
    let mask: usize = qubits.iter().map(|q| 1usize << q).sum();
    let offsets: Vec<usize> = (0..d)
        .map(|l| qubits.iter().enumerate().filter(|(b, _)| l >> b & 1 == 1).map(|(_, q)| 1usize << q).sum())
        .collect();
    let mut buf = vec![C64::new(0.0, 0.0); d];
    for base in 0..amps.len() {
        if base & mask != 0 {
            continue;
        }
        for (l, off) in offsets.iter().enumerate() {
            buf[l] = amps[base + off];
        }
        for (r, off) in offsets.iter().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for (c, b) in buf.iter().enumerate() {
                acc += matrix[(r, c)] * b;
            }
            amps[base + off] = acc;
        }
    }
}

/// Applies `circuit` to `initial` (which must have the same width).
pub fn run(circuit: &Circuit, initial: &StateVector) -> Result<StateVector> {
    circuit.validate()?;
    if initial.n_qubits != circuit.n_qubits {
        return Err(Error::Dimension { expected: circuit.n_qubits, got: initial.n_qubits });
    }
    let mut psi = initial.clone();
    for g in &circuit.gates {
        psi.apply_gate(g);
    }
    if circuit.global_phase != 0.0 {
        let z = C64::from_polar(1.0, circuit.global_phase);
        psi.amplitudes.iter_mut().for_each(|a| *a *= z);
    }
    Ok(psi)
}

/// Runs from `|0…0⟩`.
pub fn run_zero(circuit: &Circuit) -> Result<StateVector> {
    run(circuit, &StateVector::zero(circuit.n_qubits))
}

/// Rank-1 projector on a subset of qubits (identity elsewhere).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Projector {
    pub qubits: Vec<usize>,
    pub values: Vec<bool>,
}

impl Projector {
    pub fn new(qubits: Vec<usize>, values: Vec<bool>) -> Result<Self> {
        if qubits.len() != values.len() {
            return Err(Error::Dimension { expected: qubits.len(), got: values.len() });
        }
        Ok(Projector { qubits, values })
    }

    /// `|1…1⟩⟨1…1|` on `qubits`.
    pub fn all_ones(qubits: Vec<usize>) -> Self {
        let values = vec![true; qubits.len()];
        Projector { qubits, values }
    }

    fn mask_value(&self) -> (usize, usize) {
        let (mut mask, mut val) = (0usize, 0usize);
        for (q, v) in self.qubits.iter().zip(&self.values) {
            mask |= 1 << q;
            if *v {
                val |= 1 << q;
            }
        }
        (mask, val)
    }

    pub fn matches(&self, index: usize) -> bool {
        let (mask, val) = self.mask_value();
        index & mask == val
    }

    /// `Π|ψ⟩` (unnormalised).
    pub fn apply(&self, psi: &StateVector) -> StateVector {
        let (mask, val) = self.mask_value();
        let amplitudes = psi
            .amplitudes
            .iter()
            .enumerate()
            .map(|(i, a)| if i & mask == val { *a } else { C64::new(0.0, 0.0) })
            .collect();
        StateVector { n_qubits: psi.n_qubits, amplitudes }
    }
}

/// `⟨ψ|Π|ψ⟩` by summing matching probabilities.
pub fn expectation(psi: &StateVector, proj: &Projector) -> f64 {
    let (mask, val) = proj.mask_value();
    psi.amplitudes.iter().enumerate().filter(|(i, _)| i & mask == val).map(|(_, a)| a.norm_sqr()).sum()
}

/// `⟨ψ|Π|ψ⟩` through the Pauli expansion `Π = ∏_k (I + s_k Z_k)/2`,
/// with `s_k = +1` when qubit k must read 0 and `-1` when it must read 1.
pub fn pauli_expectation(psi: &StateVector, proj: &Projector) -> f64 {
    let k = proj.qubits.len();
    let probs = psi.probabilities();
    let mut total = 0.0;
    for subset in 0..1usize << k {
        let mut sign = 1.0;
        let mut zmask = 0usize;
        for b in 0..k {
            if subset >> b & 1 == 1 {
                zmask |= 1 << proj.qubits[b];
                if proj.values[b] {
                    sign = -sign;
                }
            }
        }
        let z: f64 = probs
            .iter()
            .enumerate()
            .map(|(i, p)| if (i & zmask).count_ones().is_multiple_of(2) { *p } else { -*p })
            .sum();
        total += sign * z;
    }
    total / (1usize << k) as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SampleCounts {
    pub ones: u64,
    pub shots: u64,
}

impl SampleCounts {
    pub fn mean(&self) -> f64 {
        self.ones as f64 / self.shots as f64
    }
}

/// Bernoulli measurement of `proj` repeated `shots` times.
pub fn sample(psi: &StateVector, proj: &Projector, shots: u64, seed: u64) -> Result<SampleCounts> {
    if shots == 0 {
        return Err(Error::invalid("shots must be at least 1"));
    }
    let p = expectation(psi, proj).clamp(0.0, 1.0);
    Ok(bernoulli_counts(p, shots, seed))
}

pub fn bernoulli_counts(p: f64, shots: u64, seed: u64) -> SampleCounts {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let ones = (0..shots).filter(|_| rng.random::<f64>() < p).count() as u64;
    SampleCounts { ones, shots }
}

/// `|⟨a|b⟩|²`.
pub fn state_fidelity(a: &StateVector, b: &StateVector) -> Result<f64> {
    Ok(a.inner(b)?.norm_sqr())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_state(n: usize, seed: u64) -> StateVector {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut a: Vec<C64> = (0..1 << n).map(|_| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
        let nrm = a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        a.iter_mut().for_each(|z| *z /= nrm);
        StateVector::from_amplitudes(a).unwrap()
    }

    #[test]
    fn empty_circuit_is_identity() {
        let psi = random_state(3, 1);
        assert_eq!(run(&Circuit::new(3), &psi).unwrap(), psi);
    }

    #[test]
    fn rx_pi_flips_with_minus_i() {
        let mut circ = Circuit::new(1);
        circ.push(Gate::Rx(0, PI));
        let psi = run_zero(&circ).unwrap();
        assert!(psi.amplitudes[0].norm() < 1e-15);
        assert!((psi.amplitudes[1] - c(0.0, -1.0)).norm() < 1e-15);
    }

    #[test]
    fn xx_on_zero_state() {
        let theta = 0.37;
        let mut circ = Circuit::new(2);
        circ.push(Gate::Xx(0, 1, theta));
        let psi = run_zero(&circ).unwrap();
        assert!((psi.amplitudes[0] - c(theta.cos(), 0.0)).norm() < 1e-15);
        assert!((psi.amplitudes[3] - c(0.0, -theta.sin())).norm() < 1e-15);
        assert!(psi.amplitudes[1].norm() + psi.amplitudes[2].norm() < 1e-15);
    }

    #[test]
    fn xx_decomposition_matches_native_gate() {
        let mut circ = Circuit::new(3);
        circ.push(Gate::Ry(0, 0.4)).push(Gate::Xx(0, 2, 0.9)).push(Gate::Xx(1, 0, -0.3));
        let a = circ.unitary().unwrap();
        let b = circ.with_xx_decomposed().unitary().unwrap();
        assert!((a - b).norm() < 1e-12);
    }

    #[test]
    fn projector_examples() {
        let mut circ = Circuit::new(5);
        circ.push(Gate::X(2)).push(Gate::X(3)).push(Gate::X(4)).push(Gate::H(0));
        let psi = run_zero(&circ).unwrap();
        assert!((expectation(&psi, &Projector::all_ones(vec![2, 3, 4])) - 1.0).abs() < 1e-14);

        let mut circ = Circuit::new(2);
        circ.push(Gate::H(0)).push(Gate::H(1));
        let psi = run_zero(&circ).unwrap();
        assert!((expectation(&psi, &Projector::all_ones(vec![0])) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn pauli_expansion_equals_direct_sum() {
        for seed in 0..10 {
            let psi = random_state(4, seed);
            let proj = Projector::new(vec![3, 0, 2], vec![true, false, true]).unwrap();
            assert!((expectation(&psi, &proj) - pauli_expectation(&psi, &proj)).abs() < 1e-12);
        }
    }

    #[test]
    fn sampling_examples() {
        let mut circ = Circuit::new(1);
        circ.push(Gate::X(0));
        let one = run_zero(&circ).unwrap();
        let p = Projector::all_ones(vec![0]);
        assert_eq!(sample(&one, &p, 100, 3).unwrap().ones, 100);

        let mut circ = Circuit::new(1);
        circ.push(Gate::H(0));
        let half = run_zero(&circ).unwrap();
        let shots = 100_000;
        let s = sample(&half, &p, shots, 11).unwrap();
        assert!((s.mean() - 0.5).abs() < 4.0 / (shots as f64).sqrt());
        assert_eq!(s, sample(&half, &p, shots, 11).unwrap());
    }

    #[test]
    fn fidelity_examples() {
        let psi = random_state(3, 5);
        assert!((state_fidelity(&psi, &psi).unwrap() - 1.0).abs() < 1e-12);
        let z = C64::from_polar(1.0, 1.234);
        let rotated = StateVector { n_qubits: 3, amplitudes: psi.amplitudes.iter().map(|a| a * z).collect() };
        assert!((state_fidelity(&psi, &rotated).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(state_fidelity(&StateVector::basis(2, 1), &StateVector::basis(2, 2)).unwrap(), 0.0);
        assert!(state_fidelity(&StateVector::zero(2), &StateVector::zero(3)).is_err());
    }

    #[test]
    fn validation_rejects_malformed_gates() {
        let mut circ = Circuit::new(2);
        circ.push(Gate::Cnot { control: 1, target: 1 });
        assert!(matches!(run_zero(&circ), Err(Error::RepeatedQubit(1))));
        let mut circ = Circuit::new(2);
        circ.push(Gate::H(2));
        assert!(matches!(run_zero(&circ), Err(Error::QubitOutOfRange { .. })));
        let mut circ = Circuit::new(1);
        circ.push(Gate::Dense { qubits: vec![0], matrix: DMatrix::from_element(2, 2, c(1.0, 0.0)) });
        assert!(matches!(run_zero(&circ), Err(Error::NotUnitary(_))));
    }

    #[test]
    fn controlled_ry_respects_control_values() {
        let mut circ = Circuit::new(3);
        circ.push(Gate::X(1)).push(Gate::ControlledRy {
            controls: vec![0, 1],
            values: vec![false, true],
            target: 2,
            theta: PI,
        });
        let psi = run_zero(&circ).unwrap();
        assert!((psi.amplitudes[0b110].re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn diagonal_phase_hits_one_basis_state() {
        let mut circ = Circuit::new(2);
        circ.push(Gate::H(0)).push(Gate::H(1)).push(Gate::DiagonalPhase { qubits: vec![1, 0], basis: 0b01, phase: 0.7 });
        let psi = run_zero(&circ).unwrap();
        // basis 0b01 in local order means qubit 1 = 1, qubit 0 = 0 → global index 2
        assert!((psi.amplitudes[2] - C64::from_polar(0.5, 0.7)).norm() < 1e-15);
        assert!((psi.amplitudes[1] - c(0.5, 0.0)).norm() < 1e-15);
    }
}
