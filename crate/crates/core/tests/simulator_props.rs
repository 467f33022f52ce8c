//! Simulator properties against an independent dense-matrix oracle:
//! normalisation, unitarity, gate semantics, inversion and serialisation.

mod common;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use proptest::prelude::*;
use qcva::simulator::{self, Circuit, Gate, Projector, StateVector};

const TOL: f64 = 1e-10;

fn pair(n: usize) -> impl Strategy<Value = (usize, usize)> {
    (0..n, 1..n).prop_map(move |(a, d)| (a, (a + d) % n))
}

fn angle() -> impl Strategy<Value = f64> {
    -7.0..7.0f64
}

/// Haar-ish unitary from the QR factor of a Gaussian-free random complex matrix.
fn unitary_from(entries: &[(f64, f64)], d: usize) -> DMatrix<C64> {
    let m = DMatrix::from_fn(d, d, |r, c| {
        let (re, im) = entries[r * d + c];
        C64::new(re, im)
    });
    m.qr().q()
}

fn gate(n: usize) -> impl Strategy<Value = Gate> {
    let single = (0..n, angle(), 0..6usize).prop_map(|(q, t, k)| match k {
        0 => Gate::H(q),
        1 => Gate::X(q),
        2 => Gate::Rx(q, t),
        3 => Gate::Ry(q, t),
        4 => Gate::Rz(q, t),
        _ => {
            let (s, c) = (t / 2.0).sin_cos();
            let e = C64::from_polar(1.0, 0.7 * t);
            Gate::U(q, [[C64::new(c, 0.0), -e.conj() * s], [e * s, e.conj() * e * C64::new(c, 0.0)]])
        }
    });
    let two = (pair(n), angle(), any::<bool>()).prop_map(|((a, b), t, cnot)| if cnot { Gate::Cnot { control: a, target: b } } else { Gate::Xx(a, b, t) });
    let cry = (pair(n), any::<bool>(), angle(), any::<bool>()).prop_map(move |((t, c1), v1, th, second)| {
        let mut controls = vec![c1];
        let mut values = vec![v1];
        let c2 = (0..n).find(|q| *q != t && *q != c1);
        if let (true, Some(c2)) = (second, c2) {
            controls.push(c2);
            values.push(!v1);
        }
        Gate::ControlledRy { controls, values, target: t, theta: th }
    });
    let diag = (pair(n), 0..4usize, angle()).prop_map(|((a, b), basis, phase)| Gate::DiagonalPhase { qubits: vec![a, b], basis, phase });
    let dense = (pair(n), prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 16)).prop_map(|((a, b), e)| Gate::Dense { qubits: vec![a, b], matrix: unitary_from(&e, 4) });
    prop_oneof![4 => single, 3 => two, 1 => cry, 1 => diag, 1 => dense]
}

fn circuit() -> impl Strategy<Value = Circuit> {
    (2..=5usize).prop_flat_map(|n| (prop::collection::vec(gate(n), 0..24), -3.0..3.0f64).prop_map(move |(gates, phase)| {
        let mut c = Circuit::new(n);
        for g in gates {
            c.push(g);
        }
        c.global_phase = phase;
        c
    }))
}

fn random_state(n: usize, entries: &[(f64, f64)]) -> StateVector {
    let amps: Vec<C64> = entries[..1 << n].iter().map(|(a, b)| C64::new(*a, *b)).collect();
    let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt().max(1e-3);
    let mut amps: Vec<C64> = amps.iter().map(|a| a / norm).collect();
    if norm <= 1e-3 {
        amps = vec![C64::new(0.0, 0.0); 1 << n];
        amps[0] = C64::new(1.0, 0.0);
    }
    StateVector::from_amplitudes(amps).unwrap()
}

fn max_dev(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn run_matches_oracle(c in circuit(), entries in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 32)) {
        let psi0 = random_state(c.n_qubits, &entries);
        let got = simulator::run(&c, &psi0).unwrap();
        let want = common::circuit_matrix(&c) * nalgebra::DVector::from_vec(psi0.amplitudes.clone());
        prop_assert!(max_dev(&got.amplitudes, want.as_slice()) < TOL);
    }

    #[test]
    fn norm_is_preserved(c in circuit(), entries in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 32)) {
        let psi = simulator::run(&c, &random_state(c.n_qubits, &entries)).unwrap();
        prop_assert!((psi.norm() - 1.0).abs() < 1e-12);
        prop_assert!((psi.probabilities().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unitary_is_unitary_and_matches_oracle(c in circuit()) {
        let u = c.unitary().unwrap();
        prop_assert!(simulator::unitarity_deviation(&u) < TOL);
        let o = common::circuit_matrix(&c);
        prop_assert!((u - o).iter().map(|z| z.norm()).fold(0.0, f64::max) < TOL);
    }

    #[test]
    fn inverse_undoes_circuit(c in circuit(), entries in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 32)) {
        let psi0 = random_state(c.n_qubits, &entries);
        let back = simulator::run(&c.inverse(), &simulator::run(&c, &psi0).unwrap()).unwrap();
        prop_assert!(max_dev(&back.amplitudes, &psi0.amplitudes) < TOL);
    }

    #[test]
    fn xx_decomposition_is_equivalent(c in circuit()) {
        let a = simulator::run_zero(&c).unwrap();
        let b = simulator::run_zero(&c.with_xx_decomposed()).unwrap();
        // equal up to a global phase
        prop_assert!((a.inner(&b).unwrap().norm() - 1.0).abs() < TOL);
        prop_assert!(c.with_xx_decomposed().gates.iter().all(|g| !matches!(g, Gate::Xx(..))));
    }

    #[test]
    fn text_round_trip_preserves_state(c in circuit()) {
        let parsed = Circuit::parse(&c.to_text()).unwrap();
        let (a, b) = (simulator::run_zero(&c).unwrap(), simulator::run_zero(&parsed).unwrap());
        prop_assert!(max_dev(&a.amplitudes, &b.amplitudes) < TOL);
    }

    #[test]
    fn projector_expectations_agree(c in circuit(), mask in 1usize..32) {
        let psi = simulator::run_zero(&c).unwrap();
        let qubits: Vec<usize> = (0..c.n_qubits).filter(|q| mask >> q & 1 == 1).collect();
        prop_assume!(!qubits.is_empty());
        let proj = Projector::all_ones(qubits.clone());
        let direct: f64 = psi.probabilities().iter().enumerate().filter(|(i, _)| qubits.iter().all(|q| i >> q & 1 == 1)).map(|(_, p)| p).sum();
        prop_assert!((simulator::expectation(&psi, &proj) - direct).abs() < 1e-12);
        prop_assert!((simulator::pauli_expectation(&psi, &proj) - direct).abs() < 1e-10);
        let projected = proj.apply(&psi);
        prop_assert!((projected.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>() - direct).abs() < 1e-12);
    }
}

#[test]
fn oracle_basics() {
    // CNOT with control 0: |01⟩ (index 1) → |11⟩ (index 3)
    let m = common::gate_matrix(&Gate::Cnot { control: 0, target: 1 }, 2);
    assert_eq!(m[(3, 1)], C64::new(1.0, 0.0));
    assert_eq!(m[(0, 0)], C64::new(1.0, 0.0));
    // a controlled Ry with the control unmet is the identity
    let g = Gate::ControlledRy { controls: vec![1], values: vec![true], target: 0, theta: 1.0 };
    let m = common::gate_matrix(&g, 2);
    assert_eq!(m[(0, 0)], C64::new(1.0, 0.0));
    assert_eq!(m[(1, 1)], C64::new(1.0, 0.0));
}
