//! Dense complex linear algebra for circuit synthesis.
//!
//! * single-qubit unitaries: Z-Y-Z Euler angles;
//! * two-qubit unitaries: Cartan (KAK) decomposition through the magic basis,
//!   realised with at most three CNOTs;
//! * k ≥ 3 qubits: recursive quantum Shannon decomposition (cosine–sine split
//!   on the most significant qubit, block demultiplexing, Gray-code
//!   multiplexed rotations).
//!
//! Matrices follow the simulator's convention: for a gate on `qubits =
//! [q0, q1, …]`, `q0` is the least significant bit of the row/column index.
//! Synthesis functions return a gate list plus the global phase that makes the
//! product equal to the input exactly.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;

use crate::simulator::{mul2, Circuit, Gate, Mat2};
use crate::{Error, Result};

pub type CMat = DMatrix<C64>;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

/// Reconstruction tolerance asserted after each synthesis step.
pub const SYNTH_TOL: f64 = 1e-8;

pub fn mat2_to_dmatrix(m: &Mat2) -> CMat {
    DMatrix::from_fn(2, 2, |r, c| m[r][c])
}

pub fn dmatrix_to_mat2(m: &CMat) -> Mat2 {
    [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]]
}

/// `a ⊗ b`, with `a` on the high bit of the index.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Best global phase `φ` aligning `b` to `a` (`a ≈ e^{iφ} b`) and the residual.
pub fn phase_align(a: &CMat, b: &CMat) -> (f64, f64) {
    let ip: C64 = b.iter().zip(a.iter()).map(|(x, y)| x.conj() * y).sum();
    let phi = ip.arg();
    let z = C64::from_polar(1.0, phi);
    let res = a.iter().zip(b.iter()).map(|(x, y)| (x - z * y).norm()).fold(0.0, f64::max);
    (phi, res)
}

/// Check that `u` is square, a power of two wide, and unitary to `tol`.
pub fn check_unitary(u: &CMat, tol: f64) -> Result<usize> {
    let d = u.nrows();
    if d != u.ncols() || d == 0 || !d.is_power_of_two() {
        return Err(Error::Dimension { expected: d.next_power_of_two(), got: u.ncols() });
    }
    let dev = crate::simulator::unitarity_deviation(u);
    if dev > tol {
        return Err(Error::NotUnitary(dev));
    }
    Ok(d.trailing_zeros() as usize)
}

/// Nearest unitary in Frobenius norm (polar factor).
pub fn nearest_unitary(m: &CMat) -> CMat {
    let svd = m.clone().svd(true, true);
    svd.u.unwrap() * svd.v_t.unwrap()
}

/// `U = e^{iφ} Rz(α) Ry(β) Rz(γ)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Zyz {
    pub phase: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Zyz {
    /// Rotations in time order: `Rz(γ)`, `Ry(β)`, `Rz(α)`.
    pub fn gates(&self, q: usize) -> Vec<Gate> {
        vec![Gate::Rz(q, self.gamma), Gate::Ry(q, self.beta), Gate::Rz(q, self.alpha)]
    }
}

pub fn zyz(u: &Mat2) -> Zyz {
    let det = u[0][0] * u[1][1] - u[0][1] * u[1][0];
    let phase = det.arg() / 2.0;
    let z = C64::from_polar(1.0, -phase);
    // special unitary [[a, -b*], [b, a*]] with a = cos(β/2) e^{-i(α+γ)/2}, b = sin(β/2) e^{i(α-γ)/2}
    let a = u[0][0] * z;
    let b = u[1][0] * z;
    let beta = 2.0 * b.norm().atan2(a.norm());
    let sum = if a.norm() > 1e-14 { -2.0 * a.arg() } else { 0.0 };
    let diff = if b.norm() > 1e-14 { 2.0 * b.arg() } else { 0.0 };
    Zyz { phase, alpha: (sum + diff) / 2.0, beta, gamma: (sum - diff) / 2.0 }
}

fn magic_basis() -> CMat {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let (o, i) = (C64::new(s, 0.0), C64::new(0.0, s));
    #[rustfmt::skip]
    let m = DMatrix::from_row_slice(4, 4, &[
        o, ZERO, ZERO, i,
        ZERO, i, o, ZERO,
        ZERO, i, -o, ZERO,
        o, ZERO, ZERO, -i,
    ]);
    m
}

fn pauli_pair(kind: char) -> CMat {
    let p = match kind {
        'x' => DMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]),
        'y' => DMatrix::from_row_slice(2, 2, &[ZERO, C64::new(0.0, -1.0), C64::new(0.0, 1.0), ZERO]),
        _ => DMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]),
    };
    kron(&p, &p)
}

/// `exp(i(a XX + b YY + c ZZ))`.
pub fn canonical_gate(a: f64, b: f64, c: f64) -> CMat {
    let bm = magic_basis();
    let bd = bm.adjoint();
    let diag = |k: char| {
        let d = &bd * pauli_pair(k) * &bm;
        (0..4).map(|i| d[(i, i)].re).collect::<Vec<_>>()
    };
    let (hx, hy, hz) = (diag('x'), diag('y'), diag('z'));
    let d = DMatrix::from_fn(4, 4, |r, c_| if r == c_ { C64::from_polar(1.0, a * hx[r] + b * hy[r] + c * hz[r]) } else { ZERO });
    &bm * d * bd
}

fn cnot_matrix(control_high: bool) -> CMat {
    let mut m = DMatrix::<C64>::zeros(4, 4);
    for i in 0..4usize {
        let j = if control_high { if i & 2 != 0 { i ^ 1 } else { i } } else if i & 1 != 0 { i ^ 2 } else { i };
        m[(j, i)] = ONE;
    }
    m
}

/// Gates of the three-CNOT core on `(lo, hi)`; the core is locally equivalent
/// to `exp(i(a XX + b YY + c ZZ))`.
fn core_gates(a: f64, b: f64, c: f64, lo: usize, hi: usize) -> Vec<Gate> {
    let h = std::f64::consts::FRAC_PI_2;
    let (t1, t2, t3) = (-2.0 * c - h, h + 2.0 * a, -2.0 * b - h);
    vec![
        Gate::Cnot { control: lo, target: hi },
        Gate::Rz(hi, t1),
        Gate::Ry(lo, t2),
        Gate::Cnot { control: hi, target: lo },
        Gate::Ry(lo, t3),
        Gate::Cnot { control: lo, target: hi },
    ]
}

/// Dense 4×4 of a gate list on the two qubits `0` (lo) and `1` (hi).
fn gates_matrix2q(gates: &[Gate]) -> CMat {
    let mut c = Circuit::new(2);
    c.gates = gates.to_vec();
    c.unitary().expect("valid two-qubit template")
}

/// Factors a 4×4 `L = a ⊗ b` (a on the high qubit). Returns `None` when `L`
/// is not a product to `tol`.
pub fn factor_local(l: &CMat, tol: f64) -> Option<(Mat2, Mat2, f64)> {
    let (mut r, mut c, mut best) = (0, 0, 0.0);
    for i in 0..4 {
        for j in 0..4 {
            if l[(i, j)].norm() > best {
                best = l[(i, j)].norm();
                r = i;
                c = j;
            }
        }
    }
    let (i1, i2, j1, j2) = (r >> 1, r & 1, c >> 1, c & 1);
    let a = DMatrix::from_fn(2, 2, |i, j| l[(2 * i + i2, 2 * j + j2)]);
    let b = DMatrix::from_fn(2, 2, |k, m| l[(2 * i1 + k, 2 * j1 + m)] / l[(r, c)]);
    let a = nearest_unitary(&a);
    let b = nearest_unitary(&b);
    let prod = kron(&a, &b);
    let (phi, res) = phase_align(l, &prod);
    if res > tol {
        return None;
    }
    Some((dmatrix_to_mat2(&a), dmatrix_to_mat2(&b), phi))
}

/// Simultaneous real-orthogonal diagonalisation of a symmetric unitary `M`:
/// returns `P ∈ SO(4)` and the eigenvalues with `M = P diag(λ) Pᵀ`.
fn diagonalize_symmetric_unitary(m: &CMat) -> Option<(DMatrix<f64>, Vec<C64>)> {
    let x = m.map(|z| z.re);
    let y = m.map(|z| z.im);
    for r in [0.618_033_988_749_895, 1.377_913, 0.271_828_18, 2.903_117, 0.1] {
        let s = &x + r * &y;
        let s = 0.5 * (&s + s.transpose());
        let eig = SymmetricEigen::new(s);
        let mut p = eig.eigenvectors;
        if p.determinant() < 0.0 {
            for i in 0..4 {
                p[(i, 0)] = -p[(i, 0)];
            }
        }
        let pc = p.map(|v| C64::new(v, 0.0));
        let d = pc.transpose() * m * &pc;
        let off = (0..4).flat_map(|i| (0..4).map(move |j| (i, j))).filter(|(i, j)| i != j).map(|(i, j)| d[(i, j)].norm()).fold(0.0, f64::max);
        if off < 1e-10 {
            return Some((p, (0..4).map(|i| d[(i, i)]).collect()));
        }
    }
    None
}

/// `U = e^{iφ} (a1 ⊗ b1) · T · (a2 ⊗ b2)`, where `T` is a fixed template.
#[derive(Clone, Debug)]
pub struct LocalEquivalence {
    pub phase: f64,
    pub a1: Mat2,
    pub b1: Mat2,
    pub a2: Mat2,
    pub b2: Mat2,
}

/// Finds local gates relating `u` to the template `t`, if they are locally
/// equivalent (same magic-basis spectrum).
pub fn local_equivalence(u: &CMat, t: &CMat, tol: f64) -> Option<LocalEquivalence> {
    let bm = magic_basis();
    let bd = bm.adjoint();
    let norm = |m: &CMat| {
        let det = m.determinant();
        m * C64::from_polar(1.0, -det.arg() / 4.0)
    };
    let tn = norm(t);
    let tp = &bd * &tn * &bm;
    let (pt, lt) = diagonalize_symmetric_unitary(&(tp.transpose() * &tp))?;
    for k in 0..2 {
        let un = norm(u) * C64::new(0.0, 1.0).powi(k);
        let up = &bd * &un * &bm;
        let (pu, lu) = diagonalize_symmetric_unitary(&(up.transpose() * &up))?;
        // pair eigenvalues greedily
        let mut used = [false; 4];
        let mut perm = [0usize; 4];
        let mut ok = true;
        for (i, l) in lt.iter().enumerate() {
            let best = (0..4).filter(|j| !used[*j]).min_by(|a, b| (lu[*a] - l).norm().total_cmp(&(lu[*b] - l).norm()));
            match best {
                Some(j) if (lu[j] - l).norm() < 1e-6 => {
                    used[j] = true;
                    perm[i] = j;
                }
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            continue;
        }
        let mut pu_perm = DMatrix::<f64>::zeros(4, 4);
        for i in 0..4 {
            pu_perm.set_column(i, &pu.column(perm[i]));
        }
        if pu_perm.determinant() < 0.0 {
            for r in 0..4 {
                pu_perm[(r, 0)] = -pu_perm[(r, 0)];
            }
        }
        let mut dt: Vec<C64> = lt.iter().map(|l| l.sqrt()).collect();
        let prod: C64 = dt.iter().product();
        if prod.re < 0.0 {
            dt[0] = -dt[0];
        }
        let dinv = DMatrix::from_fn(4, 4, |r, c| if r == c { 1.0 / dt[r] } else { ZERO });
        let ptc = pt.map(|v| C64::new(v, 0.0));
        let puc = pu_perm.map(|v| C64::new(v, 0.0));
        let ot = (&tp * &ptc * &dinv).map(|z| C64::new(z.re, 0.0));
        let ou = (&up * &puc * &dinv).map(|z| C64::new(z.re, 0.0));
        let l1 = &bm * (&ou * ot.transpose()) * &bd;
        let l2 = &bm * (&ptc * puc.transpose()) * &bd;
        let (a1, b1, _) = factor_local(&l1, 1e-6)?;
        let (a2, b2, _) = factor_local(&l2, 1e-6)?;
        let recon = kron(&mat2_to_dmatrix(&a1), &mat2_to_dmatrix(&b1)) * t * kron(&mat2_to_dmatrix(&a2), &mat2_to_dmatrix(&b2));
        let (phase, res) = phase_align(u, &recon);
        if res < tol {
            return Some(LocalEquivalence { phase, a1, b1, a2, b2 });
        }
    }
    None
}

/// Canonical coefficients `(a, b, c)` with `u` locally equivalent to
/// `exp(i(a XX + b YY + c ZZ))`.
pub fn canonical_coefficients(u: &CMat) -> Result<(f64, f64, f64)> {
    let bm = magic_basis();
    let bd = bm.adjoint();
    let det = u.determinant();
    let un = u * C64::from_polar(1.0, -det.arg() / 4.0);
    let up = &bd * &un * &bm;
    let (_, lam) = diagonalize_symmetric_unitary(&(up.transpose() * &up)).ok_or_else(|| Error::invalid("magic-basis diagonalisation failed"))?;
    let mut psi: Vec<f64> = lam.iter().map(|l| l.arg() / 2.0).collect();
    // lifts by π keep each equation valid; make the sum exactly zero
    let s: f64 = psi.iter().sum();
    psi[0] -= (s / std::f64::consts::PI).round() * std::f64::consts::PI;
    let h = |k: char| {
        let d = &bd * pauli_pair(k) * &bm;
        (0..4).map(|i| d[(i, i)].re).collect::<Vec<_>>()
    };
    let dot = |v: &[f64]| v.iter().zip(&psi).map(|(a, b)| a * b).sum::<f64>() / 4.0;
    Ok((dot(&h('x')), dot(&h('y')), dot(&h('z'))))
}

/// Exact synthesis of a two-qubit unitary on `(lo, hi)` with the fewest
/// CNOTs among the classes 0, 1 and 3. Returns gates and global phase.
pub fn two_qubit_gates(u: &CMat, lo: usize, hi: usize) -> Result<(Vec<Gate>, f64)> {
    if u.nrows() != 4 {
        return Err(Error::Dimension { expected: 4, got: u.nrows() });
    }
    if let Some((a, b, phase)) = factor_local(u, SYNTH_TOL) {
        return Ok((vec![Gate::U(lo, b), Gate::U(hi, a)], phase));
    }
    let emit = |eq: LocalEquivalence, core: Vec<Gate>| {
        let mut g = vec![Gate::U(lo, eq.b2), Gate::U(hi, eq.a2)];
        g.extend(core);
        g.push(Gate::U(lo, eq.b1));
        g.push(Gate::U(hi, eq.a1));
        (g, eq.phase)
    };
    if let Some(eq) = local_equivalence(u, &cnot_matrix(false), SYNTH_TOL) {
        return Ok(emit(eq, vec![Gate::Cnot { control: lo, target: hi }]));
    }
    let (a, b, c) = canonical_coefficients(u)?;
    let core_local = core_gates(a, b, c, 0, 1);
    let t = gates_matrix2q(&core_local);
    let eq = local_equivalence(u, &t, SYNTH_TOL).ok_or_else(|| Error::invalid("two-qubit KAK synthesis failed"))?;
    Ok(emit(eq, core_gates(a, b, c, lo, hi)))
}

/// Cosine–sine split of `u` on its most significant qubit:
/// `u = diag(l0, l1) · [[C, −S], [S, C]] · diag(r0, r1)`,
/// with `C = diag(cos(θ/2))`, `S = diag(sin(θ/2))`.
#[derive(Clone, Debug)]
pub struct Csd {
    pub l0: CMat,
    pub l1: CMat,
    pub r0: CMat,
    pub r1: CMat,
    pub theta: Vec<f64>,
}

pub fn csd(u: &CMat) -> Result<Csd> {
    let n = u.nrows();
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::Dimension { expected: 2, got: n });
    }
    let h = n / 2;
    let u00 = u.view((0, 0), (h, h)).into_owned();
    let u01 = u.view((0, h), (h, h)).into_owned();
    let u10 = u.view((h, 0), (h, h)).into_owned();
    let u11 = u.view((h, h), (h, h)).into_owned();

    let svd = u00.svd(true, true);
    let (w, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    // ascending cosines: columns with vanishing sine come last in the QR below
    let mut order: Vec<usize> = (0..h).collect();
    order.sort_by(|a, b| svd.singular_values[*a].total_cmp(&svd.singular_values[*b]));
    let mut l0 = CMat::zeros(h, h);
    let mut r0 = CMat::zeros(h, h);
    let mut cs = vec![0.0; h];
    for (k, &o) in order.iter().enumerate() {
        l0.set_column(k, &w.column(o));
        r0.set_row(k, &vt.row(o));
        cs[k] = svd.singular_values[o].min(1.0);
    }
    let x = &u10 * r0.adjoint();
    // sqrt(1 − c²) loses half the digits as c → 1; there the column norm of
    // u10·r0† (= l1·S) is the accurate sine
    let sn: Vec<f64> = cs
        .iter()
        .enumerate()
        .map(|(k, c)| if *c > std::f64::consts::FRAC_1_SQRT_2 { x.column(k).norm() } else { (1.0 - c * c).max(0.0).sqrt() })
        .collect();

    let qr = x.qr();
    let (q, r) = (qr.q(), qr.r());
    let mut l1 = q.clone();
    for k in 0..h {
        let d = r[(k, k)];
        if d.norm() > 1e-12 {
            let p = d / d.norm();
            for i in 0..h {
                l1[(i, k)] = q[(i, k)] * p;
            }
        }
    }
    let mut r1 = CMat::zeros(h, h);
    let a = l1.adjoint() * &u11;
    let b = l0.adjoint() * &u01;
    for k in 0..h {
        if cs[k] >= sn[k] {
            r1.set_row(k, &(a.row(k) / C64::new(cs[k], 0.0)));
        } else {
            r1.set_row(k, &(b.row(k) / C64::new(-sn[k], 0.0)));
        }
    }
    let theta = cs.iter().zip(&sn).map(|(c, s)| 2.0 * s.atan2(*c)).collect();
    let out = Csd { l0, l1, r0, r1, theta };
    let res = max_abs_diff(&out.reconstruct(), u);
    if res > SYNTH_TOL {
        return Err(Error::invalid(format!("cosine-sine decomposition residual {res:e}")));
    }
    Ok(out)
}

impl Csd {
    pub fn reconstruct(&self) -> CMat {
        let h = self.l0.nrows();
        let mut left = CMat::zeros(2 * h, 2 * h);
        left.view_mut((0, 0), (h, h)).copy_from(&self.l0);
        left.view_mut((h, h), (h, h)).copy_from(&self.l1);
        let mut right = CMat::zeros(2 * h, 2 * h);
        right.view_mut((0, 0), (h, h)).copy_from(&self.r0);
        right.view_mut((h, h), (h, h)).copy_from(&self.r1);
        let mut mid = CMat::zeros(2 * h, 2 * h);
        for (k, t) in self.theta.iter().enumerate() {
            let (s, c) = (t / 2.0).sin_cos();
            mid[(k, k)] = C64::new(c, 0.0);
            mid[(h + k, h + k)] = C64::new(c, 0.0);
            mid[(k, h + k)] = C64::new(-s, 0.0);
            mid[(h + k, k)] = C64::new(s, 0.0);
        }
        left * mid * right
    }
}

/// `diag(a, b) = (I ⊗ v) · diag(D, D†) · (I ⊗ w)`; returns `(v, phases of D, w)`.
pub fn demultiplex(a: &CMat, b: &CMat) -> Result<(CMat, Vec<C64>, CMat)> {
    let h = a.nrows();
    let prod = a * b.adjoint();
    let (q, t) = nalgebra::Schur::new(prod).unpack();
    let d: Vec<C64> = (0..h).map(|i| t[(i, i)].sqrt()).collect();
    let ddiag = CMat::from_fn(h, h, |r, c| if r == c { d[r] } else { ZERO });
    let w = &ddiag * q.adjoint() * b;
    let v = q;
    let ra = &v * &ddiag * &w;
    let rb = &v * ddiag.adjoint() * &w;
    let res = max_abs_diff(&ra, a).max(max_abs_diff(&rb, b));
    if res > SYNTH_TOL {
        return Err(Error::invalid(format!("demultiplexing residual {res:e}")));
    }
    Ok((nearest_unitary(&v), d, nearest_unitary(&w)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RotationAxis {
    Y,
    Z,
}

/// Multiplexed rotation on `target`: for each control basis state `x`
/// (bit b of `x` ↔ `controls[b]`) apply `R(angles[x])`. Uses `2^{#controls}`
/// CNOTs in Gray-code order.
pub fn multiplexed_rotation(axis: RotationAxis, target: usize, controls: &[usize], angles: &[f64]) -> Vec<Gate> {
    let r = controls.len();
    let n = 1usize << r;
    assert_eq!(angles.len(), n, "one angle per control state");
    let rot = |t: f64| match axis {
        RotationAxis::Y => Gate::Ry(target, t),
        RotationAxis::Z => Gate::Rz(target, t),
    };
    if r == 0 {
        return vec![rot(angles[0])];
    }
    let gray = |j: usize| j ^ (j >> 1);
    let mut gates = Vec::with_capacity(2 * n);
    for j in 0..n {
        let g = gray(j);
        let phi: f64 = (0..n).map(|x| if (x & g).count_ones() % 2 == 0 { angles[x] } else { -angles[x] }).sum::<f64>() / n as f64;
        gates.push(rot(phi));
        let bit = ((j + 1).trailing_zeros() as usize).min(r - 1);
        gates.push(Gate::Cnot { control: controls[bit], target });
    }
    gates
}

/// Exact synthesis of an arbitrary unitary on `qubits` (`qubits[0]` = least
/// significant bit of the matrix index) into CNOTs and single-qubit gates.
pub fn synthesize(u: &CMat, qubits: &[usize]) -> Result<(Vec<Gate>, f64)> {
    let k = check_unitary(u, 1e-10)?;
    if k != qubits.len() {
        return Err(Error::Dimension { expected: 1 << qubits.len(), got: u.nrows() });
    }
    let id = CMat::identity(u.nrows(), u.nrows());
    let (phi, res) = phase_align(u, &id);
    if res < SYNTH_TOL {
        return Ok((Vec::new(), phi));
    }
    synth_rec(u, qubits)
}

fn synth_rec(u: &CMat, qubits: &[usize]) -> Result<(Vec<Gate>, f64)> {
    match qubits.len() {
        0 => Ok((Vec::new(), u[(0, 0)].arg())),
        1 => Ok((vec![Gate::U(qubits[0], dmatrix_to_mat2(u))], 0.0)),
        2 => two_qubit_gates(u, qubits[0], qubits[1]),
        k => {
            let msb = qubits[k - 1];
            let lower = &qubits[..k - 1];
            let c = csd(u)?;
            let mut gates = Vec::new();
            let mut phase = 0.0;
            let push_demux = |a: &CMat, b: &CMat, gates: &mut Vec<Gate>, phase: &mut f64| -> Result<()> {
                let (v, d, w) = demultiplex(a, b)?;
                let (gw, pw) = synth_rec(&w, lower)?;
                gates.extend(gw);
                let angles: Vec<f64> = d.iter().map(|z| -2.0 * z.arg()).collect();
                gates.extend(multiplexed_rotation(RotationAxis::Z, msb, lower, &angles));
                let (gv, pv) = synth_rec(&v, lower)?;
                gates.extend(gv);
                *phase += pw + pv;
                Ok(())
            };
            push_demux(&c.r0, &c.r1, &mut gates, &mut phase)?;
            gates.extend(multiplexed_rotation(RotationAxis::Y, msb, lower, &c.theta));
            push_demux(&c.l0, &c.l1, &mut gates, &mut phase)?;
            Ok((gates, phase))
        }
    }
}

/// Fuses runs of single-qubit gates on the same wire into one `U` gate and
/// drops runs that multiply to the identity (up to phase, which moves into
/// the circuit's global phase).
pub fn merge_single_qubit_runs(c: &Circuit) -> Circuit {
    fuse_single_qubit_runs(c, true)
}

/// Like [`merge_single_qubit_runs`]; with `drop_identities = false` every
/// fused run stays as one gate even when it is the identity, so the count is
/// structural (one gate per run) rather than data-dependent.
pub fn fuse_single_qubit_runs(c: &Circuit, drop_identities: bool) -> Circuit {
    let mut out = Circuit::new(c.n_qubits);
    out.global_phase = c.global_phase;
    let mut pending: Vec<Option<Mat2>> = vec![None; c.n_qubits];
    let flush = |q: usize, pending: &mut Vec<Option<Mat2>>, out: &mut Circuit| {
        if let Some(m) = pending[q].take() {
            let md = mat2_to_dmatrix(&m);
            let (phi, res) = phase_align(&md, &CMat::identity(2, 2));
            if drop_identities && res < 1e-12 {
                out.global_phase += phi;
            } else {
                out.gates.push(Gate::U(q, m));
            }
        }
    };
    for g in &c.gates {
        if let Some(m) = g.matrix2() {
            let q = g.qubits()[0];
            pending[q] = Some(match pending[q] {
                Some(p) => mul2(&m, &p),
                None => m,
            });
        } else {
            for q in g.qubits() {
                flush(q, &mut pending, &mut out);
            }
            out.gates.push(g.clone());
        }
    }
    for q in 0..c.n_qubits {
        flush(q, &mut pending, &mut out);
    }
    out
}

/// Haar-random unitary (QR of a complex Ginibre matrix with phase fix).
pub fn random_unitary<R: rand::Rng>(dim: usize, rng: &mut R) -> CMat {
    use rand_distr::{Distribution, StandardNormal};
    let g = CMat::from_fn(dim, dim, |_, _| C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng)));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for k in 0..dim {
        let d = r[(k, k)];
        let p = if d.norm() > 0.0 { d / d.norm() } else { ONE };
        for i in 0..dim {
            q[(i, k)] *= p;
        }
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn circuit_of(gates: Vec<Gate>, phase: f64, n: usize) -> CMat {
        let mut c = Circuit::new(n);
        c.gates = gates;
        c.global_phase = phase;
        c.unitary().unwrap()
    }

    #[test]
    fn zyz_reconstructs() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for _ in 0..20 {
            let u = random_unitary(2, &mut rng);
            let z = zyz(&dmatrix_to_mat2(&u));
            let r = circuit_of(z.gates(0), z.phase, 1);
            assert!(max_abs_diff(&r, &u) < 1e-12);
        }
        let z = zyz(&dmatrix_to_mat2(&CMat::identity(2, 2)));
        assert!(z.beta.abs() < 1e-15);
    }

    #[test]
    fn canonical_gate_has_unit_determinant() {
        let g = canonical_gate(0.3, -0.2, 0.7);
        assert!((g.determinant() - ONE).norm() < 1e-12);
        assert!(crate::simulator::unitarity_deviation(&g) < 1e-12);
    }

    #[test]
    fn canonical_coefficients_of_cnot() {
        let (a, b, c) = canonical_coefficients(&cnot_matrix(true)).unwrap();
        let mut v = [a.abs(), b.abs(), c.abs()];
        v.sort_by(f64::total_cmp);
        // CNOT ~ exp(iπ/4 XX): one coefficient ±π/4 (mod π/2), the others 0 mod π/2
        let r = |x: f64| x % std::f64::consts::FRAC_PI_2;
        assert!(r(v[0]) < 1e-9 && r(v[1]) < 1e-9, "{v:?}");
    }

    #[test]
    fn random_two_qubit_uses_three_cnots() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        for _ in 0..30 {
            let u = random_unitary(4, &mut rng);
            let (g, p) = two_qubit_gates(&u, 0, 1).unwrap();
            assert_eq!(g.iter().filter(|g| matches!(g, Gate::Cnot { .. })).count(), 3);
            assert_eq!(g.iter().filter(|g| g.is_single_qubit()).count(), 7);
            assert!(max_abs_diff(&circuit_of(g, p, 2), &u) < 1e-9);
        }
    }

    #[test]
    fn cnot_and_locals_are_recognised() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let a = random_unitary(2, &mut rng);
        let b = random_unitary(2, &mut rng);
        let loc = kron(&a, &b);
        let (g, p) = two_qubit_gates(&loc, 0, 1).unwrap();
        assert_eq!(g.len(), 2);
        assert!(max_abs_diff(&circuit_of(g, p, 2), &loc) < 1e-10);

        for high in [false, true] {
            let u = &loc * cnot_matrix(high) * kron(&b, &a);
            let (g, p) = two_qubit_gates(&u, 0, 1).unwrap();
            assert_eq!(g.iter().filter(|g| matches!(g, Gate::Cnot { .. })).count(), 1);
            assert!(max_abs_diff(&circuit_of(g, p, 2), &u) < 1e-9);
        }
    }

    #[test]
    fn degenerate_spectra_synthesise() {
        // SWAP and canonical points on chamber edges have repeated magic-basis eigenvalues
        let swap = canonical_gate(std::f64::consts::FRAC_PI_4, std::f64::consts::FRAC_PI_4, std::f64::consts::FRAC_PI_4);
        for u in [swap, canonical_gate(0.4, 0.4, 0.0), canonical_gate(0.3, 0.0, 0.0)] {
            let (g, p) = two_qubit_gates(&u, 0, 1).unwrap();
            assert!(max_abs_diff(&circuit_of(g, p, 2), &u) < 1e-9);
        }
    }

    #[test]
    fn csd_reconstructs() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for dim in [2, 4, 8, 16] {
            let u = random_unitary(dim, &mut rng);
            let c = csd(&u).unwrap();
            assert!(max_abs_diff(&c.reconstruct(), &u) < 1e-10);
        }
        // a block-diagonal input has vanishing sines
        let a = random_unitary(2, &mut rng);
        let b = random_unitary(2, &mut rng);
        let mut u = CMat::zeros(4, 4);
        u.view_mut((0, 0), (2, 2)).copy_from(&a);
        u.view_mut((2, 2), (2, 2)).copy_from(&b);
        let c = csd(&u).unwrap();
        assert!(c.theta.iter().all(|t| t.abs() < 1e-7));
    }

    #[test]
    fn multiplexed_rotation_matches_blocks() {
        let angles = [0.3, -1.1, 2.0, 0.25];
        for axis in [RotationAxis::Y, RotationAxis::Z] {
            let gates = multiplexed_rotation(axis, 2, &[0, 1], &angles);
            assert_eq!(gates.iter().filter(|g| matches!(g, Gate::Cnot { .. })).count(), 4);
            let u = circuit_of(gates, 0.0, 3);
            for (x, t) in angles.iter().enumerate() {
                let r = match axis {
                    RotationAxis::Y => Gate::Ry(0, *t),
                    RotationAxis::Z => Gate::Rz(0, *t),
                }
                .matrix2()
                .unwrap();
                for i in 0..2 {
                    for j in 0..2 {
                        assert!((u[(x + 4 * i, x + 4 * j)] - r[i][j]).norm() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn shannon_decomposition_counts_and_exactness() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        for (k, cnots) in [(3usize, 24usize), (4, 4 * 24 + 3 * 8)] {
            let u = random_unitary(1 << k, &mut rng);
            let qs: Vec<usize> = (0..k).collect();
            let (g, p) = synthesize(&u, &qs).unwrap();
            assert_eq!(g.iter().filter(|g| matches!(g, Gate::Cnot { .. })).count(), cnots);
            assert!(max_abs_diff(&circuit_of(g, p, k), &u) < 1e-8);
        }
    }

    #[test]
    fn identity_gives_empty_list() {
        let (g, p) = synthesize(&(CMat::identity(8, 8) * C64::from_polar(1.0, 0.4)), &[0, 1, 2]).unwrap();
        assert!(g.is_empty());
        assert!((p - 0.4).abs() < 1e-12);
    }

    #[test]
    fn merging_preserves_unitary() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let u = random_unitary(8, &mut rng);
        let (g, p) = synthesize(&u, &[0, 1, 2]).unwrap();
        let mut c = Circuit::new(3);
        c.gates = g;
        c.global_phase = p;
        let m = merge_single_qubit_runs(&c);
        assert!(m.single_qubit_count() <= c.single_qubit_count());
        assert!(max_abs_diff(&m.unitary().unwrap(), &u) < 1e-8);

        let mut c = Circuit::new(2);
        c.gates = vec![Gate::Rz(0, 0.3), Gate::Ry(0, 0.2), Gate::Cnot { control: 0, target: 1 }, Gate::Rx(1, 0.5), Gate::Rx(1, -0.5)];
        let m = merge_single_qubit_runs(&c);
        assert_eq!(m.single_qubit_count(), 1);
        assert_eq!(m.cnot_count(), 1);
        assert!(max_abs_diff(&m.unitary().unwrap(), &c.unitary().unwrap()) < 1e-12);
    }

    #[test]
    fn non_unitary_rejected() {
        let m = CMat::from_element(4, 4, ONE);
        assert!(synthesize(&m, &[0, 1]).is_err());
    }
}
