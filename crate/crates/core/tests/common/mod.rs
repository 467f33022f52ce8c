//! Dense-matrix oracle for circuits, built gate by gate from the textbook
//! definitions with explicit Kronecker embedding. It shares no code with the
//! statevector kernels it is used to check.

#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use qcva::simulator::{Circuit, Gate};

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn ry_local(t: f64) -> DMatrix<C64> {
    let (s, co) = (t / 2.0).sin_cos();
    DMatrix::from_row_slice(2, 2, &[c(co, 0.0), c(-s, 0.0), c(s, 0.0), c(co, 0.0)])
}

/// Matrix of `g` on its own qubits; local bit `k` is `g`'s `k`-th listed qubit.
pub fn local_matrix(g: &Gate) -> (Vec<usize>, DMatrix<C64>) {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    match g {
        Gate::H(q) => (vec![*q], DMatrix::from_row_slice(2, 2, &[c(r, 0.0), c(r, 0.0), c(r, 0.0), c(-r, 0.0)])),
        Gate::X(q) => (vec![*q], DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)])),
        Gate::Rx(q, t) => {
            let (s, co) = (t / 2.0).sin_cos();
            (vec![*q], DMatrix::from_row_slice(2, 2, &[c(co, 0.0), c(0.0, -s), c(0.0, -s), c(co, 0.0)]))
        }
        Gate::Ry(q, t) => (vec![*q], ry_local(*t)),
        Gate::Rz(q, t) => (vec![*q], DMatrix::from_row_slice(2, 2, &[C64::from_polar(1.0, -t / 2.0), c(0.0, 0.0), c(0.0, 0.0), C64::from_polar(1.0, t / 2.0)])),
        Gate::U(q, m) => (vec![*q], DMatrix::from_row_slice(2, 2, &[m[0][0], m[0][1], m[1][0], m[1][1]])),
        Gate::Xx(a, b, t) => {
            // cos t · I − i sin t · X⊗X
            let mut m = DMatrix::identity(4, 4) * c(t.cos(), 0.0);
            for k in 0..4 {
                m[(k ^ 3, k)] += c(0.0, -t.sin());
            }
            (vec![*a, *b], m)
        }
        Gate::Cnot { control, target } => {
            let mut m = DMatrix::zeros(4, 4);
            for k in 0..4usize {
                let out = if k & 1 == 1 { k ^ 2 } else { k };
                m[(out, k)] = c(1.0, 0.0);
            }
            (vec![*control, *target], m)
        }
        Gate::ControlledRy { controls, values, target, theta } => {
            let k = controls.len();
            let d = 1usize << (k + 1);
            let mut want = 0usize;
            for (i, v) in values.iter().enumerate() {
                if *v {
                    want |= 1 << i;
                }
            }
            let ry = ry_local(*theta);
            let mut m = DMatrix::zeros(d, d);
            for col in 0..d {
                let ctrl = col & ((1 << k) - 1);
                if ctrl != want {
                    m[(col, col)] = c(1.0, 0.0);
                    continue;
                }
                let tb = col >> k & 1;
                for out in 0..2 {
                    m[(ctrl | out << k, col)] = ry[(out, tb)];
                }
            }
            let mut qs = controls.clone();
            qs.push(*target);
            (qs, m)
        }
        Gate::DiagonalPhase { qubits, basis, phase } => {
            let mut m = DMatrix::identity(1 << qubits.len(), 1 << qubits.len());
            m[(*basis, *basis)] = C64::from_polar(1.0, *phase);
            (qubits.clone(), m)
        }
        Gate::Dense { qubits, matrix } => (qubits.clone(), matrix.clone()),
    }
}

/// `local` acting on `qubits` inside an `n`-qubit register.
pub fn embed(local: &DMatrix<C64>, qubits: &[usize], n: usize) -> DMatrix<C64> {
    let d = 1usize << n;
    let mask: usize = qubits.iter().map(|q| 1usize << q).sum();
    let loc = |x: usize| qubits.iter().enumerate().map(|(k, q)| (x >> q & 1) << k).sum::<usize>();
    DMatrix::from_fn(d, d, |r, col| if r & !mask == col & !mask { local[(loc(r), loc(col))] } else { c(0.0, 0.0) })
}

pub fn gate_matrix(g: &Gate, n: usize) -> DMatrix<C64> {
    let (qs, m) = local_matrix(g);
    embed(&m, &qs, n)
}

pub fn circuit_matrix(circ: &Circuit) -> DMatrix<C64> {
    let n = circ.n_qubits;
    let u = circ.gates.iter().fold(DMatrix::identity(1 << n, 1 << n), |acc, g| gate_matrix(g, n) * acc);
    u * C64::from_polar(1.0, circ.global_phase)
}
