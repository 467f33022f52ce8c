//! Discrete joint distribution 𝒫(s_j, t_i) and the scaled functions ṽ, p̃, q̃.
//!
//! Prices are binned at the `M = 2^m` time points `t_i = i·T/M` onto `N = 2^n`
//! evenly spaced price values `s_1 < … < s_N` with `s_1 = max(μ̂ − 3σ̂, 0)` and
//! `s_N = μ̂ + 3σ̂`. Each time row is normalised to `1/M`, so the flattened
//! table (index `i·N + j`, time in the high bits) is a probability vector over
//! `m + n` qubits. Samples outside the binned range are dropped and the row is
//! renormalised; the dropped mass is reported per row.
//!
//! The discretised CVA is
//!
//! ```text
//! CVA~ = M (1 − R) C_v C_p C_q Σ_{i,j} 𝒫(s_j,t_i) ṽ(s_j,t_i) p̃(t_i) q̃(t_i).
//! ```

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::market::{self, DiscountCurve, HazardCurve, MarketSpec, PathMatrix};
use crate::{Error, Result};

/// Which samples define μ̂ and σ̂ of the price grid.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum GridStatistics {
    /// Prices at the maturity column only.
    #[default]
    Terminal,
    /// Every price that is binned (all `t_1..t_M` columns pooled).
    AllBinned,
}

/// How the N grid values relate to the N histogram bins. Except for
/// `LowerPoint`, the bins are N equal-width intervals exactly spanning
/// `[s_1, s_N]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum BinLabel {
    /// Grid value = the bin's left edge (`s_1 + j·w`, `w = (s_N − s_1)/N`).
    #[default]
    LeftEdge,
    /// Grid value = the bin's midpoint.
    Midpoint,
    /// Grid values are `N` points evenly spaced from `s_1` to `s_N` inclusive,
    /// bin `j` paired with point `j`.
    Linspace,
    /// Grid values are `N` points evenly spaced from `s_1` to `s_N` inclusive
    /// (spacing Δ) and bin `j` is `[s_j, s_j + Δ)`.
    LowerPoint,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinningOptions {
    pub statistics: GridStatistics,
    pub label: BinLabel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub m: usize,
    pub n: usize,
    /// `t_1..t_M`.
    pub time_points: Vec<f64>,
    /// `s_1..s_N`.
    pub price_points: Vec<f64>,
    /// `N + 1` histogram edges.
    pub bin_edges: Vec<f64>,
}

impl GridSpec {
    pub fn n_times(&self) -> usize {
        1 << self.m
    }

    pub fn n_prices(&self) -> usize {
        1 << self.n
    }

    /// Builds the grid from simulated paths (whose grid must include `t_1..t_M`).
    pub fn from_paths(paths: &PathMatrix, spec: &MarketSpec, m: usize, n: usize, opts: BinningOptions) -> Result<GridSpec> {
        let (s1, sn) = price_range(paths, spec, m, opts.statistics)?;
        Self::new(m, n, spec.maturity_years, s1, sn, opts.label)
    }

    pub fn new(m: usize, n: usize, maturity: f64, s1: f64, sn: f64, label: BinLabel) -> Result<GridSpec> {
        if n == 0 {
            return Err(Error::invalid("price register needs at least one qubit"));
        }
        if !(sn > s1) {
            return Err(Error::DegenerateGrid);
        }
        let big_n = 1usize << n;
        let w = (sn - s1) / big_n as f64;
        let spanning: Vec<f64> = (0..=big_n).map(|k| s1 + k as f64 * w).collect();
        let (price_points, bin_edges) = match label {
            BinLabel::LeftEdge => (spanning[..big_n].to_vec(), spanning),
            BinLabel::Midpoint => (spanning[..big_n].iter().map(|e| e + 0.5 * w).collect(), spanning),
            BinLabel::Linspace => (linspace(s1, sn, big_n), spanning),
            BinLabel::LowerPoint => {
                let pts = linspace(s1, sn, big_n);
                let delta = (sn - s1) / (big_n - 1) as f64;
                let edges = (0..=big_n).map(|k| s1 + k as f64 * delta).collect();
                (pts, edges)
            }
        };
        Ok(GridSpec { m, n, time_points: time_points(maturity, m), price_points, bin_edges })
    }
}

fn linspace(a: f64, b: f64, count: usize) -> Vec<f64> {
    (0..count).map(|j| a + (b - a) * j as f64 / (count - 1) as f64).collect()
}

/// `t_i = i·T/M`, `i = 1..M`.
pub fn time_points(maturity: f64, m: usize) -> Vec<f64> {
    let big_m = 1usize << m;
    (1..=big_m).map(|i| i as f64 * maturity / big_m as f64).collect()
}

/// `(s_1, s_N) = (max(μ̂−3σ̂, 0), μ̂+3σ̂)`.
pub fn price_range(paths: &PathMatrix, spec: &MarketSpec, m: usize, stats: GridStatistics) -> Result<(f64, f64)> {
    if paths.n_paths == 0 {
        return Err(Error::invalid("no paths"));
    }
    let samples: Vec<f64> = match stats {
        GridStatistics::Terminal => {
            let k = paths.column_of(spec.maturity_years)?;
            paths.column(k).collect()
        }
        GridStatistics::AllBinned => {
            let mut v = Vec::new();
            for t in time_points(spec.maturity_years, m) {
                let k = paths.column_of(t)?;
                v.extend(paths.column(k));
            }
            v
        }
    };
    let (mu, sd) = sample_moments(&samples);
    if !(sd > 0.0) {
        return Err(Error::DegenerateGrid);
    }
    Ok(((mu - 3.0 * sd).max(0.0), mu + 3.0 * sd))
}

/// The `N = 2^n` grid values for the given binning options.
pub fn price_grid(paths: &PathMatrix, spec: &MarketSpec, m: usize, n: usize, opts: BinningOptions) -> Result<Vec<f64>> {
    Ok(GridSpec::from_paths(paths, spec, m, n, opts)?.price_points)
}

/// Sample mean and (n−1)-normalised standard deviation.
pub fn sample_moments(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    pub grid: GridSpec,
    /// Row-major `M × N`; entry `i·N + j` is 𝒫(s_j, t_i).
    pub probs: Vec<f64>,
    /// Fraction of each row's samples that fell outside the bins.
    pub dropped_mass: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn prob(&self, i: usize, j: usize) -> f64 {
        self.probs[i * self.grid.n_prices() + j]
    }

    pub fn n_qubits(&self) -> usize {
        self.grid.m + self.grid.n
    }

    /// Draws `count` flattened indices (for sample-based training).
    pub fn sample_indices(&self, count: usize, seed: u64) -> Vec<usize> {
        use rand::Rng;
        let mut rng = market::path_rng(seed, u64::MAX);
        let cdf: Vec<f64> = self
            .probs
            .iter()
            .scan(0.0, |acc, p| {
                *acc += p;
                Some(*acc)
            })
            .collect();
        let total = *cdf.last().unwrap_or(&1.0);
        (0..count)
            .map(|_| {
                let u = rng.random::<f64>() * total;
                cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
            })
            .collect()
    }
}

/// Histograms each `t_i` column into the grid's bins, rows normalised to `1/M`.
pub fn build_joint(paths: &PathMatrix, grid: &GridSpec) -> Result<DiscreteDistribution> {
    let (big_m, big_n) = (grid.n_times(), grid.n_prices());
    let edges = &grid.bin_edges;
    let mut probs = vec![0.0; big_m * big_n];
    let mut dropped_mass = vec![0.0; big_m];
    for (i, &t) in grid.time_points.iter().enumerate() {
        let k = paths.column_of(t)?;
        let mut counts = vec![0u64; big_n];
        let mut kept = 0u64;
        for s in paths.column(k) {
            if s < edges[0] || s >= edges[big_n] {
                continue;
            }
            let j = (edges.partition_point(|&e| e <= s) - 1).min(big_n - 1);
            counts[j] += 1;
            kept += 1;
        }
        if kept == 0 {
            return Err(Error::invalid(format!("time row {} has no samples inside the price grid", i + 1)));
        }
        dropped_mass[i] = 1.0 - kept as f64 / paths.n_paths as f64;
        for j in 0..big_n {
            probs[i * big_n + j] = counts[j] as f64 / kept as f64 / big_m as f64;
        }
    }
    Ok(DiscreteDistribution { grid: grid.clone(), probs, dropped_mass })
}

/// Optional verbatim scaling constants (e.g. a published table).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScalingOverrides {
    pub c_v: Option<f64>,
    pub c_p: Option<f64>,
    pub c_q: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaledFunctions {
    /// Row-major `M × N`.
    pub v_tilde: Vec<f64>,
    pub p_tilde: Vec<f64>,
    pub q_tilde: Vec<f64>,
    pub c_v: f64,
    pub c_p: f64,
    pub c_q: f64,
    pub recovery: f64,
}

impl ScaledFunctions {
    /// `M(1−R)C_vC_pC_q`, the factor turning ⟨Π⟩ into a CVA value.
    pub fn prefactor(&self, m: usize) -> f64 {
        (1usize << m) as f64 * (1.0 - self.recovery) * self.c_v * self.c_p * self.c_q
    }

    /// ṽ flattened over the joint register (time high bits).
    pub fn v_table(&self) -> &[f64] {
        &self.v_tilde
    }
}

fn scale(values: &[f64], forced: Option<f64>, what: &str) -> Result<(f64, Vec<f64>)> {
    let max = values.iter().cloned().fold(0.0_f64, f64::max);
    let c = match forced {
        Some(c) => {
            if !(c > 0.0) {
                return Err(Error::invalid(format!("scaling constant for {what} must be positive")));
            }
            if max > c * (1.0 + 1e-12) {
                return Err(Error::invalid(format!("override C = {c} for {what} is below the tabulated maximum {max}")));
            }
            c
        }
        None if max > 0.0 => max,
        None => 1.0,
    };
    Ok((c, values.iter().map(|v| (v / c).min(1.0)).collect()))
}

/// Tabulates `v, p, q` on the grid and rescales them into `[0, 1]`.
pub fn scaled_functions(
    grid: &GridSpec,
    spec: &MarketSpec,
    curve: &DiscountCurve,
    hazard: &HazardCurve,
    overrides: ScalingOverrides,
) -> Result<ScaledFunctions> {
    let mut v = Vec::with_capacity(grid.n_times() * grid.n_prices());
    for &t in &grid.time_points {
        for &s in &grid.price_points {
            v.push(market::payoff(s, t, spec, curve)?);
        }
    }
    let p: Vec<f64> = grid.time_points.iter().map(|&t| curve.discount(t)).collect();
    let dt = spec.maturity_years / grid.n_times() as f64;
    let q: Vec<f64> = grid.time_points.iter().map(|&t| hazard.default_prob(t - dt, t)).collect();
    let (c_v, v_tilde) = scale(&v, overrides.c_v, "payoff")?;
    let (c_p, p_tilde) = scale(&p, overrides.c_p, "discount")?;
    let (c_q, q_tilde) = scale(&q, overrides.c_q, "default probability")?;
    Ok(ScaledFunctions { v_tilde, p_tilde, q_tilde, c_v, c_p, c_q, recovery: spec.cva_recovery })
}

/// `M(1−R)C_vC_pC_q Σ 𝒫 ṽ p̃ q̃`.
pub fn cva_discrete(dist: &DiscreteDistribution, f: &ScaledFunctions) -> Result<f64> {
    Ok(f.prefactor(dist.grid.m) * pi_expectation(dist, f)?)
}

/// `Σ 𝒫 ṽ p̃ q̃`, the ideal value of the final projector measurement.
pub fn pi_expectation(dist: &DiscreteDistribution, f: &ScaledFunctions) -> Result<f64> {
    let (big_m, big_n) = (dist.grid.n_times(), dist.grid.n_prices());
    if f.v_tilde.len() != big_m * big_n {
        return Err(Error::Dimension { expected: big_m * big_n, got: f.v_tilde.len() });
    }
    if f.p_tilde.len() != big_m || f.q_tilde.len() != big_m {
        return Err(Error::Dimension { expected: big_m, got: f.p_tilde.len().min(f.q_tilde.len()) });
    }
    let mut acc = 0.0;
    for i in 0..big_m {
        let row: f64 = (0..big_n).map(|j| dist.probs[i * big_n + j] * f.v_tilde[i * big_n + j]).sum();
        acc += row * f.p_tilde[i] * f.q_tilde[i];
    }
    Ok(acc)
}

/// Writes the `i,j,t_i,s_j,prob,v_tilde,p_tilde,q_tilde` CSV (indices 1-based).
pub fn write_dump<W: Write>(w: W, dist: &DiscreteDistribution, f: &ScaledFunctions) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["i", "j", "t_i", "s_j", "prob", "v_tilde", "p_tilde", "q_tilde"])?;
    let big_n = dist.grid.n_prices();
    for (i, t) in dist.grid.time_points.iter().enumerate() {
        for (j, s) in dist.grid.price_points.iter().enumerate() {
            wr.serialize((
                i + 1,
                j + 1,
                t,
                s,
                dist.probs[i * big_n + j],
                f.v_tilde[i * big_n + j],
                f.p_tilde[i],
                f.q_tilde[i],
            ))?;
        }
    }
    wr.flush().map_err(|source| Error::Io { path: "<dump>".into(), source })?;
    Ok(())
}

/// Everything needed to build discretised instances from one path set.
#[derive(Clone, Debug)]
pub struct Instance {
    pub spec: MarketSpec,
    pub curve: DiscountCurve,
    pub hazard: HazardCurve,
    pub paths: PathMatrix,
    pub opts: BinningOptions,
}

impl Instance {
    /// Simulates `n_paths` paths on `t_0..t_M` (same seed as the Monte Carlo benchmark).
    pub fn simulate(spec: &MarketSpec, curve: &DiscountCurve, m: usize, n_paths: usize, seed: u64, opts: BinningOptions) -> Result<Self> {
        let hazard = market::bootstrap_hazard(spec, curve)?;
        let times = market::time_grid(spec.maturity_years, 1 << m);
        let paths = market::gbm_paths(spec, &times, n_paths, seed)?;
        Ok(Instance { spec: spec.clone(), curve: curve.clone(), hazard, paths, opts })
    }

    pub fn m(&self) -> usize {
        (self.paths.n_times() - 1).trailing_zeros() as usize
    }

    pub fn discretize(&self, n: usize, overrides: ScalingOverrides) -> Result<(DiscreteDistribution, ScaledFunctions)> {
        let grid = GridSpec::from_paths(&self.paths, &self.spec, self.m(), n, self.opts)?;
        let dist = build_joint(&self.paths, &grid)?;
        let f = scaled_functions(&grid, &self.spec, &self.curve, &self.hazard, overrides)?;
        Ok((dist, f))
    }

    pub fn cva_mc(&self) -> Result<market::CvaEstimate> {
        market::cva_from_paths(&self.paths, &self.spec, &self.curve, &self.hazard)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergencePoint {
    pub n: usize,
    pub value: f64,
    pub dropped_mass: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub points: Vec<ConvergencePoint>,
    /// Richardson extrapolation of the two finest grids (the finest value
    /// itself when they are not consecutive).
    pub limit: f64,
    /// Monte Carlo standard error propagated to the limit.
    pub limit_stderr: f64,
}

/// CVA~(n) for each `n` on one shared path set.
pub fn convergence_study(inst: &Instance, ns: &[usize]) -> Result<ConvergenceStudy> {
    let mut points = Vec::with_capacity(ns.len());
    for &n in ns {
        let (dist, f) = inst.discretize(n, ScalingOverrides::default())?;
        let value = cva_discrete(&dist, &f)?;
        let dropped = dist.dropped_mass.iter().sum::<f64>() / dist.dropped_mass.len() as f64;
        points.push(ConvergencePoint { n, value, dropped_mass: dropped });
    }
    let last = points.last().ok_or_else(|| Error::invalid("empty n list"))?;
    // first-order grid error for edge/point labelling, second order for midpoints
    let order = if inst.opts.label == BinLabel::Midpoint { 2 } else { 1 };
    let limit = match points.iter().rev().nth(1) {
        Some(prev) if last.n == prev.n + 1 => last.value + (last.value - prev.value) / ((1 << order) as f64 - 1.0),
        _ => last.value,
    };
    // per-path contributions of the finest grid: each path contributes its
    // binned payoff; the spread of those contributions gives the stderr.
    let n_max = *ns.iter().max().expect("non-empty");
    let grid = GridSpec::from_paths(&inst.paths, &inst.spec, inst.m(), n_max, inst.opts)?;
    let f = scaled_functions(&grid, &inst.spec, &inst.curve, &inst.hazard, ScalingOverrides::default())?;
    let limit_stderr = binned_path_stderr(inst, &grid, &f)?;
    Ok(ConvergenceStudy { points, limit, limit_stderr })
}

fn binned_path_stderr(inst: &Instance, grid: &GridSpec, f: &ScaledFunctions) -> Result<f64> {
    let (big_m, big_n) = (grid.n_times(), grid.n_prices());
    let edges = &grid.bin_edges;
    let cols: Vec<usize> = grid.time_points.iter().map(|&t| inst.paths.column_of(t)).collect::<Result<_>>()?;
    let scale = (1.0 - f.recovery) * f.c_v * f.c_p * f.c_q;
    let contrib: Vec<f64> = (0..inst.paths.n_paths)
        .map(|p| {
            let row = inst.paths.path(p);
            (0..big_m)
                .map(|i| {
                    let s = row[cols[i]];
                    if s < edges[0] || s >= edges[big_n] {
                        return 0.0;
                    }
                    let j = (edges.partition_point(|&e| e <= s) - 1).min(big_n - 1);
                    scale * f.v_tilde[i * big_n + j] * f.p_tilde[i] * f.q_tilde[i]
                })
                .sum()
        })
        .collect();
    Ok(market::mean_stderr(&contrib).1)
}
