//! Reversible-logic-synthesis baseline: transformation-based synthesis of
//! permutations into multi-controlled NOT (MCT) gates, and the two-qubit
//! gate accounting of the evaluate / rotate / uncompute schedule.
//!
//! Synthesis is the bidirectional transformation-based method: walk the basis
//! states in increasing order and, for each state not yet mapped to itself,
//! fix it with MCT gates added either on the output side or on the input
//! side, whichever needs fewer gates. States already fixed are never
//! disturbed because every added gate is controlled on a superset of bits
//! that only larger states carry.
//!
//! Function tables are turned into permutations by the usual embedding
//! `|x⟩|y⟩ ↦ |x⟩|y ⊕ f(x)⟩`, with `f` encoded in fixed point on `b` bits.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Positive-control Toffoli gate: flips `target` when every bit of `controls` is set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mct {
    pub controls: u64,
    pub target: u32,
}

impl Mct {
    #[inline]
    pub fn apply(&self, x: u64) -> u64 {
        if x & self.controls == self.controls {
            x ^ (1 << self.target)
        } else {
            x
        }
    }

    pub fn n_controls(&self) -> usize {
        self.controls.count_ones() as usize
    }
}

/// How multi-controlled NOTs are priced in CNOTs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum McxConvention {
    /// V-chain with `k−2` clean ancillas: `2(k−2)+1` Toffolis at 6 CNOTs each,
    /// i.e. `6(2k−3)` for `k ≥ 2`.
    #[default]
    CleanAncillaChain,
    /// Dirty-ancilla chain: `4(k−2)` Toffolis for `k ≥ 3`, i.e. `24(k−2)`.
    DirtyAncillaChain,
}

/// CNOT-equivalent cost of a NOT with `k` positive controls.
///
/// `k = 0` is a bare X (no CNOTs), `k = 1` a CNOT, `k = 2` a Toffoli (6 CNOTs).
pub fn multi_controlled_not_cost(k: usize, convention: McxConvention) -> usize {
    match k {
        0 => 0,
        1 => 1,
        2 => 6,
        _ => match convention {
            McxConvention::CleanAncillaChain => 6 * (2 * k - 3),
            McxConvention::DirtyAncillaChain => 24 * (k - 2),
        },
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReversibleCircuit {
    pub lines: usize,
    /// Gates in application order.
    pub gates: Vec<Mct>,
}

impl ReversibleCircuit {
    pub fn apply(&self, x: u64) -> u64 {
        self.gates.iter().fold(x, |acc, g| g.apply(acc))
    }

    /// The permutation realised on all `2^lines` basis states.
    pub fn permutation(&self) -> Vec<usize> {
        (0..1u64 << self.lines).map(|x| self.apply(x) as usize).collect()
    }

    /// Total CNOT-equivalent count `C`.
    pub fn cnot_equivalent_count(&self, convention: McxConvention) -> usize {
        self.gates.iter().map(|g| multi_controlled_not_cost(g.n_controls(), convention)).sum()
    }
}

impl fmt::Display for ReversibleCircuit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "lines {}", self.lines)?;
        for g in &self.gates {
            let cs: Vec<String> = (0..self.lines).filter(|b| g.controls >> b & 1 == 1).map(|b| b.to_string()).collect();
            writeln!(f, "mct [{}] {}", cs.join(","), g.target)?;
        }
        Ok(())
    }
}

fn check_permutation(perm: &[usize]) -> Result<usize> {
    let n = perm.len();
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::invalid("permutation length must be a power of two"));
    }
    let w = n.trailing_zeros() as usize;
    if w > 30 {
        return Err(Error::invalid("permutation too wide"));
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || std::mem::replace(&mut seen[p], true) {
            return Err(Error::NotBijective);
        }
    }
    Ok(w)
}

/// Gates turning value `y` into `i` (for `y ≥ i`, smaller states untouched).
fn fix_gates(y: u64, i: u64, w: usize) -> Vec<Mct> {
    let mut gates = Vec::new();
    let mut cur = y;
    // set the bits i has and cur lacks, controlled on cur's ones
    for b in 0..w {
        let bit = 1u64 << b;
        if i & bit != 0 && cur & bit == 0 {
            gates.push(Mct { controls: cur, target: b as u32 });
            cur |= bit;
        }
    }
    // clear the bits cur has and i lacks, controlled on i's ones
    for b in 0..w {
        let bit = 1u64 << b;
        if cur & bit != 0 && i & bit == 0 {
            gates.push(Mct { controls: i, target: b as u32 });
            cur &= !bit;
        }
    }
    debug_assert_eq!(cur, i);
    gates
}

/// Bidirectional transformation-based synthesis of `perm` (state `x ↦ perm[x]`).
pub fn synthesize(perm: &[usize]) -> Result<ReversibleCircuit> {
    let w = check_permutation(perm)?;
    let n = perm.len();
    let mut f: Vec<u64> = perm.iter().map(|&p| p as u64).collect();
    let mut inv = vec![0u64; n];
    for (x, &y) in f.iter().enumerate() {
        inv[y as usize] = x as u64;
    }
    let mut out_side: Vec<Mct> = Vec::new();
    let mut in_side: Vec<Mct> = Vec::new();
    for i in 0..n as u64 {
        let y = f[i as usize];
        if y == i {
            continue;
        }
        let j = inv[i as usize];
        let cost_out = (y ^ i).count_ones();
        let cost_in = (j ^ i).count_ones();
        if cost_out <= cost_in {
            // f ← g ∘ f for each gate
            for g in fix_gates(y, i, w) {
                for v in f.iter_mut() {
                    *v = g.apply(*v);
                }
                out_side.push(g);
            }
            for (x, &v) in f.iter().enumerate() {
                inv[v as usize] = x as u64;
            }
        } else {
            // f ← f ∘ h, i.e. f⁻¹ ← h ∘ f⁻¹
            for g in fix_gates(j, i, w) {
                for v in inv.iter_mut() {
                    *v = g.apply(*v);
                }
                in_side.push(g);
            }
            for (y, &x) in inv.iter().enumerate() {
                f[x as usize] = y as u64;
            }
        }
    }
    // perm = G⁻¹ ∘ H⁻¹: input-side gates first in order, then output-side gates reversed
    let mut gates = in_side;
    gates.extend(out_side.into_iter().rev());
    Ok(ReversibleCircuit { lines: w, gates })
}

/// A function table `f : {0,1}^{n_in} → {0,1}^{n_out}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthTable {
    pub n_in: usize,
    pub n_out: usize,
    pub table: Vec<u64>,
}

impl TruthTable {
    pub fn new(n_in: usize, n_out: usize, table: Vec<u64>) -> Result<Self> {
        if table.len() != 1 << n_in {
            return Err(Error::Dimension { expected: 1 << n_in, got: table.len() });
        }
        if n_in + n_out > 30 {
            return Err(Error::invalid("truth table too wide"));
        }
        if let Some(v) = table.iter().find(|v| **v >> n_out != 0) {
            return Err(Error::invalid(format!("value {v} does not fit in {} bits", n_out)));
        }
        Ok(TruthTable { n_in, n_out, table })
    }

    /// Fixed-point encoding `round(f·(2^b − 1))` of values in `[0, 1]`.
    pub fn from_unit_values(values: &[f64], bits: usize) -> Result<Self> {
        if values.is_empty() || !values.len().is_power_of_two() {
            return Err(Error::invalid("value table length must be a power of two"));
        }
        if bits == 0 || bits > 24 {
            return Err(Error::invalid("encoding width must be in 1..=24"));
        }
        let scale = ((1u64 << bits) - 1) as f64;
        let table = values
            .iter()
            .map(|v| if (0.0..=1.0).contains(v) { Ok((v * scale).round() as u64) } else { Err(Error::OutOfUnitInterval(*v)) })
            .collect::<Result<Vec<_>>>()?;
        TruthTable::new(values.len().trailing_zeros() as usize, bits, table)
    }

    /// Embedding `|x⟩|y⟩ ↦ |x⟩|y ⊕ f(x)⟩`; `x` in the high bits, `y` in the low `n_out` bits.
    pub fn embed(&self) -> Vec<usize> {
        let mask = (1usize << self.n_out) - 1;
        (0..1usize << (self.n_in + self.n_out))
            .map(|s| {
                let (x, y) = (s >> self.n_out, s & mask);
                (x << self.n_out) | (y ^ self.table[x] as usize)
            })
            .collect()
    }
}

/// `N_2q = 2(C + 2n)`: evaluate and uncompute (`2C`) plus `n + n + 2n` controlled
/// rotations for the discount, default and payoff tables.
pub fn cost_cva_rls(n: usize, c: usize) -> usize {
    2 * (c + 2 * n)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RlsReport {
    /// Register width (time + price qubits).
    pub n: usize,
    /// Fixed-point encoding width.
    pub b: usize,
    /// Summed CNOT-equivalent count of the three oracles.
    pub c: usize,
    pub n_2q: usize,
}

/// Synthesises the payoff table (over the `n+m`-qubit register) and the
/// discount/default tables (over the `m` time qubits) at `b` bits each.
pub fn cva_rls_report(v: &[f64], p: &[f64], q: &[f64], bits: usize, convention: McxConvention) -> Result<RlsReport> {
    let mut c = 0;
    for vals in [v, p, q] {
        let tt = TruthTable::from_unit_values(vals, bits)?;
        c += synthesize(&tt.embed())?.cnot_equivalent_count(convention);
    }
    let n = v.len().trailing_zeros() as usize;
    Ok(RlsReport { n, b: bits, c, n_2q: cost_cva_rls(n, c) })
}
