//! Credit valuation adjustment on a (simulated) quantum computer.
//!
//! The crate covers the whole pipeline, from the classical Monte Carlo
//! benchmark to fault-tolerant runtime estimates:
//!
//! * [`market`] — GBM paths, payoff, discount and hazard curves, Monte Carlo CVA.
//! * [`discretize`] — the binned joint distribution and scaled payoff/discount/default tables.
//! * [`simulator`] — dense statevector simulator and the gate-list circuit IR.
//! * [`cmaes`] / [`qcbm`] — derivative-free optimizer and the circuit Born machine.
//! * [`mps`] — MPS generative model, training sweeps and compilation to gates.
//! * [`crca`] / [`rls`] — variational controlled rotations and the reversible-logic baseline.
//! * [`cva_circuit`] — assembly of the full circuit and its error budget.
//! * [`elf`] — engineered-likelihood Bayesian amplitude estimation.
//! * [`resource`] — surface-code overheads and runtime crossover analysis.
//!
//! Qubit ordering everywhere: qubit 0 is the least significant bit of a basis index.

// Input validation is written as `!(x > 0.0)` on purpose: it rejects NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cmaes;
pub mod crca;
pub mod cva_circuit;
pub mod discretize;
pub mod elf;
pub mod error;
pub mod linalg;
pub mod market;
pub mod mps;
pub mod qcbm;
pub mod reference;
pub mod resource;
pub mod rls;
pub mod simulator;

pub use error::{Error, Result};
