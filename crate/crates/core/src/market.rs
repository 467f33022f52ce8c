//! Classical CVA engine.
//!
//! The asset follows a geometric Brownian motion, the derivative pays
//! `v(s,t) = max(s − K·P(t,T), 0)`, discounting comes from a zero curve and
//! default probabilities from a piecewise-flat hazard curve bootstrapped from
//! CDS quotes. [`cva_mc`] combines them into the Monte Carlo benchmark
//!
//! ```text
//! CVA ≈ (1 − R) Σ_{i=1..M} E(t_i) p(t_i) q(t_i),   t_i = i·T/M,
//! ```
//!
//! with `q(t_i) = S(t_{i−1}) − S(t_i)` the default probability of bucket `i`.
//!
//! Year fractions are Actual/360 throughout, so the maturity of the reference
//! contract is `184/360`.

use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DayCount {
    Actual360,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BusinessDayConvention {
    Following,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DateGeneration {
    Imm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Frequency {
    Quarterly,
}

/// Contract and market parameters of the benchmark instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketSpec {
    pub initial_price: f64,
    pub strike: f64,
    pub volatility: f64,
    pub drift: f64,
    pub maturity_years: f64,
    pub start_date: NaiveDate,
    pub cva_recovery: f64,
    pub notional: f64,
    pub cds_recovery: f64,
    pub cds_spreads: Vec<f64>,
    pub cds_tenors: Vec<f64>,
    pub day_count: DayCount,
    pub bday_convention: BusinessDayConvention,
    pub date_generation: DateGeneration,
    pub frequency: Frequency,
    pub settlement_days: u32,
}

impl Default for MarketSpec {
    fn default() -> Self {
        MarketSpec {
            initial_price: 5.0,
            strike: 5.5,
            volatility: 0.25,
            drift: 0.02,
            maturity_years: 184.0 / 360.0,
            start_date: NaiveDate::from_ymd_opt(2020, 3, 5).expect("valid date"),
            cva_recovery: 0.415,
            notional: 1.0,
            cds_recovery: 0.4125,
            cds_spreads: vec![0.00093772, 0.00184451, 0.0032286, 0.0047065, 0.00574888, 0.00574888],
            cds_tenors: vec![1.0, 3.0, 5.0, 7.0, 10.0, 15.0],
            day_count: DayCount::Actual360,
            bday_convention: BusinessDayConvention::Following,
            date_generation: DateGeneration::Imm,
            frequency: Frequency::Quarterly,
            settlement_days: 0,
        }
    }
}

impl MarketSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.volatility > 0.0) {
            return Err(Error::invalid("volatility must be positive"));
        }
        for (name, r) in [("cva_recovery", self.cva_recovery), ("cds_recovery", self.cds_recovery)] {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::invalid(format!("{name} must lie in [0, 1)")));
            }
        }
        if self.cds_spreads.len() != self.cds_tenors.len() {
            return Err(Error::Dimension { expected: self.cds_tenors.len(), got: self.cds_spreads.len() });
        }
        if self.cds_spreads.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::invalid("CDS spreads must be non-negative"));
        }
        if !(self.maturity_years > 0.0) {
            return Err(Error::invalid("maturity must be positive"));
        }
        if !(self.initial_price > 0.0) {
            return Err(Error::invalid("initial price must be positive"));
        }
        Ok(())
    }

    /// Parses a `key = value` file; unknown keys are rejected, missing keys keep defaults.
    pub fn parse_kv(text: &str) -> Result<MarketSpec> {
        let mut spec = MarketSpec::default();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() || line.starts_with('[') {
                continue;
            }
            let err = |msg: String| Error::Parse { line: ln + 1, msg };
            let (key, value) = line.split_once('=').ok_or_else(|| err("expected key = value".into()))?;
            let (key, value) = (key.trim(), value.trim());
            let num = |v: &str| v.parse::<f64>().map_err(|_| err(format!("{key}: bad number `{v}`")));
            let list = |v: &str| -> Result<Vec<f64>> {
                v.trim_matches(|c| c == '[' || c == ']').split(',').map(|x| num(x.trim())).collect()
            };
            match key {
                "initial_price" => spec.initial_price = num(value)?,
                "strike" => spec.strike = num(value)?,
                "volatility" => spec.volatility = num(value)?,
                "drift" => spec.drift = num(value)?,
                "maturity_years" => {
                    spec.maturity_years = match value.split_once('/') {
                        Some((a, b)) => num(a.trim())? / num(b.trim())?,
                        None => num(value)?,
                    }
                }
                "start_date" => {
                    spec.start_date = NaiveDate::parse_from_str(value, "%Y-%m-%d")
                        .map_err(|_| err(format!("start_date: bad date `{value}`")))?
                }
                "cva_recovery" => spec.cva_recovery = num(value)?,
                "notional" => spec.notional = num(value)?,
                "cds_recovery" => spec.cds_recovery = num(value)?,
                "cds_spreads" => spec.cds_spreads = list(value)?,
                "cds_tenors" => spec.cds_tenors = list(value)?,
                "settlement_days" => spec.settlement_days = num(value)? as u32,
                "day_count" | "bday_convention" | "date_generation" | "frequency" => {
                    let ok = matches!(
                        value.to_ascii_lowercase().as_str(),
                        "actual/360" | "act/360" | "following" | "imm" | "quarterly"
                    );
                    if !ok {
                        return Err(err(format!("{key}: unsupported convention `{value}`")));
                    }
                }
                other => return Err(err(format!("unknown key `{other}`"))),
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: &Path) -> Result<MarketSpec> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.display().to_string(), source })?;
        Self::parse_kv(&text)
    }
}

/// Zero curve with log-linear interpolation of discount factors (`p(0) = 1`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscountCurve {
    pub pillar_times: Vec<f64>,
    pub zero_rates: Vec<f64>,
}

impl DiscountCurve {
    pub fn flat(rate: f64) -> Self {
        DiscountCurve { pillar_times: vec![1.0], zero_rates: vec![rate] }
    }

    pub fn new(pillar_times: Vec<f64>, zero_rates: Vec<f64>) -> Result<Self> {
        if pillar_times.is_empty() || pillar_times.len() != zero_rates.len() {
            return Err(Error::invalid("curve needs matching, non-empty pillar and rate columns"));
        }
        if pillar_times[0] <= 0.0 || pillar_times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("curve pillar times must be positive and strictly increasing"));
        }
        Ok(DiscountCurve { pillar_times, zero_rates })
    }

    /// Reads a `time_years,zero_rate` CSV.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|source| Error::Io { path: path.display().to_string(), source })?;
        Self::from_reader(file).map_err(|e| match e {
            Error::Csv(c) => Error::invalid(format!("{}: {c}", path.display())),
            Error::InvalidInput(m) => Error::invalid(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn from_reader<R: std::io::Read>(rdr: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            time_years: f64,
            zero_rate: f64,
        }
        let mut reader = csv::Reader::from_reader(rdr);
        let mut t = Vec::new();
        let mut r = Vec::new();
        for row in reader.deserialize::<Row>() {
            let row = row?;
            t.push(row.time_years);
            r.push(row.zero_rate);
        }
        Self::new(t, r)
    }

    fn log_df_at_pillar(&self, k: usize) -> f64 {
        -self.zero_rates[k] * self.pillar_times[k]
    }

    /// Discount factor `p(t)`.
    pub fn discount(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 1.0;
        }
        let ts = &self.pillar_times;
        let n = ts.len();
        let log_df = if t <= ts[0] {
            self.log_df_at_pillar(0) * t / ts[0]
        } else if t >= ts[n - 1] {
            if n == 1 {
                self.log_df_at_pillar(0) * t / ts[0]
            } else {
                // flat forward beyond the last pillar
                let slope = (self.log_df_at_pillar(n - 1) - self.log_df_at_pillar(n - 2)) / (ts[n - 1] - ts[n - 2]);
                self.log_df_at_pillar(n - 1) + slope * (t - ts[n - 1])
            }
        } else {
            let k = ts.partition_point(|&x| x < t);
            let (t0, t1) = (ts[k - 1], ts[k]);
            let w = (t - t0) / (t1 - t0);
            (1.0 - w) * self.log_df_at_pillar(k - 1) + w * self.log_df_at_pillar(k)
        };
        log_df.exp()
    }

    /// Continuously compounded zero rate to `t`.
    pub fn zero_rate(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return self.zero_rates[0];
        }
        -self.discount(t).ln() / t
    }

    /// Forward discount factor `P(t, T) = p(T)/p(t)`.
    pub fn forward_discount(&self, t: f64, maturity: f64) -> f64 {
        self.discount(maturity) / self.discount(t)
    }
}

/// Piecewise-constant hazard intensities; `hazards[k]` applies on
/// `(pillar_times[k−1], pillar_times[k]]` and beyond the last pillar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HazardCurve {
    pub pillar_times: Vec<f64>,
    pub hazards: Vec<f64>,
}

impl HazardCurve {
    pub fn flat(hazard: f64) -> Self {
        HazardCurve { pillar_times: vec![1.0], hazards: vec![hazard] }
    }

    fn integrated(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        let mut prev = 0.0;
        for (k, (&tp, &h)) in self.pillar_times.iter().zip(&self.hazards).enumerate() {
            let last = k + 1 == self.hazards.len();
            if t <= tp || last {
                return acc + h * (t - prev).max(0.0);
            }
            acc += h * (tp - prev);
            prev = tp;
        }
        acc
    }

    pub fn survival(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 1.0;
        }
        (-self.integrated(t)).exp()
    }

    /// Default probability between `t0` and `t1`.
    pub fn default_prob(&self, t0: f64, t1: f64) -> f64 {
        self.survival(t0) - self.survival(t1)
    }
}

/// Year fraction Actual/360.
pub fn act360(from: NaiveDate, to: NaiveDate) -> f64 {
    (to - from).num_days() as f64 / 360.0
}

/// Weekend-only Following adjustment.
pub fn following(d: NaiveDate) -> NaiveDate {
    let mut d = d;
    while matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
        d += Duration::days(1);
    }
    d
}

fn add_months(d: NaiveDate, months: i32) -> NaiveDate {
    let total = d.year() * 12 + d.month0() as i32 + months;
    let (y, m0) = (total.div_euclid(12), total.rem_euclid(12) as u32);
    let mut day = d.day();
    loop {
        if let Some(x) = NaiveDate::from_ymd_opt(y, m0 + 1, day) {
            return x;
        }
        day -= 1;
    }
}

/// First IMM date (20th of Mar/Jun/Sep/Dec) on or after `d`.
pub fn next_imm(d: NaiveDate) -> NaiveDate {
    let mut y = d.year();
    let mut m = d.month();
    loop {
        if m.is_multiple_of(3) {
            let cand = NaiveDate::from_ymd_opt(y, m, 20).expect("valid IMM date");
            if cand >= d {
                return cand;
            }
        }
        m += 1;
        if m > 12 {
            m = 1;
            y += 1;
        }
    }
}

/// Unadjusted quarterly IMM schedule `[start, imm_1, …, maturity]` of a CDS
/// with the given tenor in years.
pub fn cds_schedule(start: NaiveDate, tenor_years: f64) -> Vec<NaiveDate> {
    let months = (tenor_years * 12.0).round() as i32;
    let maturity = next_imm(add_months(start, months));
    let mut dates = vec![maturity];
    let mut d = maturity;
    loop {
        d = add_months(d, -3);
        if d <= start {
            break;
        }
        dates.push(d);
    }
    dates.push(start);
    dates.reverse();
    dates
}

/// Tenor-by-tenor bootstrap of flat hazard segments so that the premium leg
/// (quarterly, Act/360, Following, no accrued-on-default) equals the
/// protection leg (default settled at the end of each premium period).
pub fn bootstrap_hazard(spec: &MarketSpec, curve: &DiscountCurve) -> Result<HazardCurve> {
    spec.validate()?;
    if spec.cds_tenors.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("CDS tenors must be increasing"));
    }
    let start = spec.start_date;
    let mut curve_out = HazardCurve { pillar_times: Vec::new(), hazards: Vec::new() };
    for (&tenor, &spread) in spec.cds_tenors.iter().zip(&spec.cds_spreads) {
        let sched = cds_schedule(start, tenor);
        let maturity_t = act360(start, *sched.last().expect("non-empty schedule"));
        let periods: Vec<(f64, f64, f64)> = sched
            .windows(2)
            .map(|w| {
                let accrual_start = if w[0] == start { start } else { following(w[0]) };
                (act360(start, w[0]), act360(start, w[1]), act360(accrual_start, following(w[1])))
            })
            .collect();
        let mut trial = curve_out.clone();
        trial.pillar_times.push(maturity_t);
        trial.hazards.push(0.0);
        let last = trial.hazards.len() - 1;
        let mut objective = |h: f64| {
            trial.hazards[last] = h;
            let (mut premium, mut protection) = (0.0, 0.0);
            for &(t0, t1, accrual) in &periods {
                let df = curve.discount(t1);
                premium += spread * accrual * df * trial.survival(t1);
                protection += (1.0 - spec.cds_recovery) * df * trial.default_prob(t0, t1);
            }
            protection - premium
        };
        let hazard = if spread == 0.0 {
            0.0
        } else {
            let (mut lo, mut hi) = (0.0_f64, 10.0_f64);
            let (flo, fhi) = (objective(lo), objective(hi));
            if flo.signum() == fhi.signum() {
                return Err(Error::NoHazardRoot { tenor });
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if objective(mid).signum() == flo.signum() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        curve_out.pillar_times.push(maturity_t);
        curve_out.hazards.push(hazard);
    }
    Ok(curve_out)
}

/// Simulated price paths, row-major `n_paths × times.len()`.
#[derive(Clone, Debug, PartialEq)]
pub struct PathMatrix {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub n_paths: usize,
    pub seed: u64,
}

impl PathMatrix {
    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    pub fn path(&self, p: usize) -> &[f64] {
        let n = self.n_times();
        &self.values[p * n..(p + 1) * n]
    }

    pub fn column(&self, k: usize) -> impl Iterator<Item = f64> + '_ {
        let n = self.n_times();
        (0..self.n_paths).map(move |p| self.values[p * n + k])
    }

    pub fn column_of(&self, t: f64) -> Result<usize> {
        self.times.iter().position(|&x| (x - t).abs() <= 1e-12 * t.abs().max(1.0)).ok_or(Error::TimeNotOnGrid(t))
    }
}

/// GBM paths on `times` (which must start at 0); path `p` draws from its own
/// ChaCha stream, so results do not depend on evaluation order.
pub fn gbm_paths(spec: &MarketSpec, times: &[f64], n_paths: usize, seed: u64) -> Result<PathMatrix> {
    if n_paths == 0 {
        return Err(Error::invalid("n_paths must be at least 1"));
    }
    if times.is_empty() || times[0] != 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::BadTimeGrid);
    }
    let nt = times.len();
    let (sigma, mu) = (spec.volatility, spec.drift);
    let mut values = vec![0.0; n_paths * nt];
    for p in 0..n_paths {
        let mut rng = path_rng(seed, p as u64);
        let row = &mut values[p * nt..(p + 1) * nt];
        row[0] = spec.initial_price;
        let mut log_s = spec.initial_price.ln();
        for k in 1..nt {
            let dt = times[k] - times[k - 1];
            let xi: f64 = StandardNormal.sample(&mut rng);
            log_s += sigma * dt.sqrt() * xi + (mu - 0.5 * sigma * sigma) * dt;
            row[k] = log_s.exp();
        }
    }
    Ok(PathMatrix { times: times.to_vec(), values, n_paths, seed })
}

pub(crate) fn path_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `max(s − K·P(t,T), 0)`.
pub fn payoff(s: f64, t: f64, spec: &MarketSpec, curve: &DiscountCurve) -> Result<f64> {
    let maturity = spec.maturity_years;
    if t > maturity * (1.0 + 1e-12) || t < 0.0 {
        return Err(Error::TimeOutOfRange { t, maturity });
    }
    Ok((s - spec.strike * curve.forward_discount(t, maturity)).max(0.0) * spec.notional)
}

/// Sample mean and standard error of the payoff at grid time `t`.
pub fn expected_exposure(paths: &PathMatrix, spec: &MarketSpec, curve: &DiscountCurve, t: f64) -> Result<(f64, f64)> {
    let k = paths.column_of(t)?;
    let vals: Vec<f64> = paths.column(k).map(|s| payoff(s, t, spec, curve)).collect::<Result<_>>()?;
    Ok(mean_stderr(&vals))
}

pub(crate) fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// `t_i = i·T/M` for `i = 0..=M`.
pub fn time_grid(maturity: f64, m: usize) -> Vec<f64> {
    (0..=m).map(|i| i as f64 * maturity / m as f64).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvaEstimate {
    pub value: f64,
    pub stderr: f64,
    pub n_paths: usize,
    #[serde(rename = "M")]
    pub n_time_steps: usize,
    pub seed: u64,
}

/// Monte Carlo CVA on `M` equal buckets; the standard error is taken from
/// the per-path CVA contributions, so correlation across buckets is included.
pub fn cva_mc(
    spec: &MarketSpec,
    curve: &DiscountCurve,
    hazard: &HazardCurve,
    m: usize,
    n_paths: usize,
    seed: u64,
) -> Result<CvaEstimate> {
    if m == 0 {
        return Err(Error::invalid("M must be at least 1"));
    }
    let times = time_grid(spec.maturity_years, m);
    let paths = gbm_paths(spec, &times, n_paths, seed)?;
    cva_from_paths(&paths, spec, curve, hazard)
}

/// Same estimator on pre-simulated paths (grid must be `t_i = i·T/M`).
pub fn cva_from_paths(paths: &PathMatrix, spec: &MarketSpec, curve: &DiscountCurve, hazard: &HazardCurve) -> Result<CvaEstimate> {
    let times = &paths.times;
    let m = times.len() - 1;
    let weights: Vec<f64> = (1..=m)
        .map(|i| (1.0 - spec.cva_recovery) * curve.discount(times[i]) * hazard.default_prob(times[i - 1], times[i]))
        .collect();
    let mut contrib = Vec::with_capacity(paths.n_paths);
    for p in 0..paths.n_paths {
        let row = paths.path(p);
        let mut x = 0.0;
        for i in 1..=m {
            x += weights[i - 1] * payoff(row[i], times[i], spec, curve)?;
        }
        contrib.push(x);
    }
    let (value, stderr) = mean_stderr(&contrib);
    Ok(CvaEstimate { value, stderr, n_paths: paths.n_paths, n_time_steps: m, seed: paths.seed })
}

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Complementary error function: Maclaurin series below 2.5, Lentz continued
/// fraction above (double precision throughout).
pub fn erfc(x: f64) -> f64 {
    if x < 0.0 {
        return 2.0 - erfc(-x);
    }
    if x < 2.5 {
        // Maclaurin series of erf
        let mut sum = x;
        let mut term = x;
        let x2 = x * x;
        let mut n = 0.0;
        loop {
            n += 1.0;
            term *= -x2 / n;
            let add = term / (2.0 * n + 1.0);
            sum += add;
            if add.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        1.0 - 2.0 / std::f64::consts::PI.sqrt() * sum
    } else {
        // Lentz continued fraction
        let mut f;
        let tiny = 1e-300;
        let b0 = x;
        f = b0;
        let mut c = b0;
        let mut d = 0.0;
        for k in 1..300 {
            let a = k as f64 / 2.0;
            d = x + a * d;
            d = if d.abs() < tiny { tiny } else { d };
            c = x + a / c;
            c = if c.abs() < tiny { tiny } else { c };
            d = 1.0 / d;
            let delta = c * d;
            f *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        (-x * x).exp() / std::f64::consts::PI.sqrt() / f
    }
}

/// Closed-form `E[max(s_t − k, 0)]` under the GBM (undiscounted), used as an oracle.
pub fn gbm_call_expectation(spec: &MarketSpec, t: f64, k: f64) -> f64 {
    let s0 = spec.initial_price;
    if t <= 0.0 {
        return (s0 - k).max(0.0);
    }
    let vol = spec.volatility * t.sqrt();
    let fwd = s0 * (spec.drift * t).exp();
    if k <= 0.0 {
        return fwd - k;
    }
    let d1 = ((fwd / k).ln() + 0.5 * vol * vol) / vol;
    fwd * norm_cdf(d1) - k * norm_cdf(d1 - vol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn deterministic_drift_without_volatility() {
        let mut spec = MarketSpec { volatility: 1e-300, ..MarketSpec::default() };
        spec.initial_price = 5.0;
        let p = gbm_paths(&spec, &[0.0, 1.0], 3, 1).unwrap();
        for s in p.column(1) {
            assert_relative_eq!(s, 5.0 * 0.02_f64.exp(), max_relative = 1e-14);
        }
    }

    #[test]
    fn gbm_rejects_bad_grids() {
        let spec = MarketSpec::default();
        assert!(matches!(gbm_paths(&spec, &[0.0, 0.5, 0.5], 1, 0), Err(Error::BadTimeGrid)));
        assert!(matches!(gbm_paths(&spec, &[0.1, 0.5], 1, 0), Err(Error::BadTimeGrid)));
        assert!(gbm_paths(&spec, &[0.0, 0.5], 0, 0).is_err());
    }

    #[test]
    fn gbm_moments_match_lognormal() {
        let spec = MarketSpec::default();
        let t = spec.maturity_years;
        let paths = gbm_paths(&spec, &[0.0, t / 2.0, t], 100_000, 42).unwrap();
        let terminal: Vec<f64> = paths.column(2).collect();
        let (mean, se) = mean_stderr(&terminal);
        assert!((mean - spec.initial_price * (spec.drift * t).exp()).abs() < 3.0 * se);

        let logs: Vec<f64> = terminal.iter().map(|s| (s / spec.initial_price).ln()).collect();
        let n = logs.len() as f64;
        let m = logs.iter().sum::<f64>() / n;
        let var = logs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        let target = spec.volatility.powi(2) * t;
        // stderr of a sample variance of normal data: σ²·sqrt(2/(n−1))
        assert!((var - target).abs() < 3.0 * target * (2.0 / (n - 1.0)).sqrt());
    }

    #[test]
    fn payoff_examples() {
        let spec = MarketSpec::default();
        let curve = DiscountCurve::flat(0.01);
        let t = 0.2;
        let boundary = spec.strike * curve.forward_discount(t, spec.maturity_years);
        assert_eq!(payoff(boundary, t, &spec, &curve).unwrap(), 0.0);
        assert_eq!(payoff(0.0, t, &spec, &curve).unwrap(), 0.0);
        let flat = DiscountCurve::flat(0.0);
        assert_relative_eq!(payoff(6.0, spec.maturity_years, &spec, &flat).unwrap(), 0.5, max_relative = 1e-14);
        assert!(payoff(6.0, 1.0, &spec, &flat).is_err());
    }

    #[test]
    fn zero_spreads_give_zero_hazard() {
        let spec = MarketSpec { cds_spreads: vec![0.0; 6], ..MarketSpec::default() };
        let h = bootstrap_hazard(&spec, &DiscountCurve::flat(0.0)).unwrap();
        assert!(h.hazards.iter().all(|&x| x == 0.0));
        assert_eq!(h.survival(3.0), 1.0);
    }

    #[test]
    fn single_tenor_matches_credit_triangle() {
        let spec = MarketSpec {
            cds_spreads: vec![0.01],
            cds_tenors: vec![5.0],
            ..MarketSpec::default()
        };
        let h = bootstrap_hazard(&spec, &DiscountCurve::flat(0.0)).unwrap();
        let triangle = 0.01 / (1.0 - spec.cds_recovery);
        assert!((h.hazards[0] / triangle - 1.0).abs() < 0.05, "{} vs {triangle}", h.hazards[0]);
    }

    #[test]
    fn reference_quotes_give_positive_increasing_hazards() {
        let spec = MarketSpec::default();
        let h = bootstrap_hazard(&spec, &DiscountCurve::flat(0.0)).unwrap();
        assert!(h.hazards.iter().all(|&x| x > 0.0));
        // spreads increase up to 10y: the average intensity to each pillar follows
        let avg: Vec<f64> = h.pillar_times.iter().map(|&t| -h.survival(t).ln() / t).collect();
        for w in avg.windows(2).take(4) {
            assert!(w[1] > w[0]);
        }
        let mut prev = 1.0;
        for k in 0..200 {
            let s = h.survival(k as f64 * 0.1);
            assert!(s <= prev);
            prev = s;
        }
    }

    #[test]
    fn imm_schedule_shape() {
        let start = NaiveDate::from_ymd_opt(2020, 3, 5).unwrap();
        let s = cds_schedule(start, 1.0);
        assert_eq!(s.first(), Some(&start));
        assert_eq!(s.last(), Some(&NaiveDate::from_ymd_opt(2021, 3, 20).unwrap()));
        assert_eq!(s[1], NaiveDate::from_ymd_opt(2020, 3, 20).unwrap());
        assert_eq!(s.len(), 6);
        // 2020-06-20 is a Saturday
        assert_eq!(following(NaiveDate::from_ymd_opt(2020, 6, 20).unwrap()), NaiveDate::from_ymd_opt(2020, 6, 22).unwrap());
    }

    #[test]
    fn exposure_examples() {
        let spec = MarketSpec::default();
        let curve = DiscountCurve::flat(0.0);
        let paths = PathMatrix { times: vec![0.0, 0.5], values: vec![5.0, 1.0, 5.0, 2.0], n_paths: 2, seed: 0 };
        assert_eq!(expected_exposure(&paths, &spec, &curve, 0.5).unwrap().0, 0.0);
        let paths = PathMatrix { times: vec![0.0, 0.5], values: vec![5.0, 5.5, 5.0, 6.5], n_paths: 2, seed: 0 };
        let spec_t = MarketSpec { maturity_years: 0.5, ..spec.clone() };
        assert_relative_eq!(expected_exposure(&paths, &spec_t, &curve, 0.5).unwrap().0, 0.5, max_relative = 1e-14);
        assert!(matches!(expected_exposure(&paths, &spec_t, &curve, 0.25), Err(Error::TimeNotOnGrid(_))));
    }

    #[test]
    fn exposure_matches_lognormal_integral() {
        let spec = MarketSpec::default();
        let curve = DiscountCurve::flat(0.0);
        let t = spec.maturity_years;
        let paths = gbm_paths(&spec, &[0.0, t], 100_000, 9).unwrap();
        let (e, se) = expected_exposure(&paths, &spec, &curve, t).unwrap();
        // independent oracle: trapezoidal quadrature against the lognormal density
        let (s0, sig, mu) = (spec.initial_price, spec.volatility, spec.drift);
        let m = s0.ln() + (mu - 0.5 * sig * sig) * t;
        let v = sig * t.sqrt();
        let n = 200_000;
        let (lo, hi) = (spec.strike, 40.0);
        let h = (hi - lo) / n as f64;
        let f = |s: f64| (s - spec.strike) * (-(s.ln() - m).powi(2) / (2.0 * v * v)).exp() / (s * v * (2.0 * std::f64::consts::PI).sqrt());
        let quad = h * ((1..n).map(|k| f(lo + k as f64 * h)).sum::<f64>() + 0.5 * (f(lo) + f(hi)));
        assert!((e - quad).abs() < 3.0 * se, "{e} vs {quad} (se {se})");
        assert_relative_eq!(quad, gbm_call_expectation(&spec, t, spec.strike), max_relative = 1e-6);
    }

    #[test]
    fn cva_trivial_cases() {
        let spec = MarketSpec { cva_recovery: 0.999999999, ..MarketSpec::default() };
        let curve = DiscountCurve::flat(0.0);
        let hz = HazardCurve::flat(0.01);
        let est = cva_mc(&spec, &curve, &hz, 4, 1000, 1).unwrap();
        assert!(est.value.abs() < 1e-9);
        let est = cva_mc(&MarketSpec::default(), &curve, &HazardCurve::flat(0.0), 4, 1000, 1).unwrap();
        assert_eq!(est.value, 0.0);
    }

    #[test]
    fn cva_linear_in_loss_given_default_and_deterministic() {
        let spec = MarketSpec::default();
        let curve = DiscountCurve::flat(0.0);
        let hz = bootstrap_hazard(&spec, &curve).unwrap();
        let a = cva_mc(&spec, &curve, &hz, 4, 5000, 3).unwrap();
        let half = MarketSpec { cva_recovery: 1.0 - (1.0 - spec.cva_recovery) / 2.0, ..spec.clone() };
        let b = cva_mc(&half, &curve, &hz, 4, 5000, 3).unwrap();
        assert_relative_eq!(b.value * 2.0, a.value, max_relative = 1e-12);
        assert_eq!(a, cva_mc(&spec, &curve, &hz, 4, 5000, 3).unwrap());
    }

    #[test]
    fn curve_interpolation() {
        let c = DiscountCurve::new(vec![0.5, 1.0, 2.0], vec![0.01, 0.02, 0.02]).unwrap();
        assert_eq!(c.discount(0.0), 1.0);
        assert_relative_eq!(c.discount(1.0), (-0.02_f64).exp(), max_relative = 1e-14);
        let mid = c.discount(0.75);
        assert_relative_eq!(mid.ln(), 0.5 * (-0.005 - 0.02), max_relative = 1e-12);
        assert!(DiscountCurve::new(vec![1.0, 0.5], vec![0.0, 0.0]).is_err());
        let csv = "time_years,zero_rate\n0.25,-0.0045\n1.0,-0.005\n";
        let c = DiscountCurve::from_reader(csv.as_bytes()).unwrap();
        assert_eq!(c.pillar_times, vec![0.25, 1.0]);
    }

    #[test]
    fn erfc_reference_points() {
        assert_relative_eq!(erfc(0.5), 0.4795001221869535, max_relative = 1e-14);
        assert_relative_eq!(erfc(3.0), 2.209049699858544e-05, max_relative = 1e-12);
        assert_relative_eq!(norm_cdf(-1.0), 0.15865525393145707, max_relative = 1e-13);
    }

    #[test]
    fn kv_spec_round_trip() {
        let text = "initial_price = 5\nstrike = 5.5\nmaturity_years = 184/360\nstart_date = 2020-03-05\n\
                    cds_spreads = 0.001, 0.002\ncds_tenors = 1, 3\nday_count = Actual/360\n";
        let spec = MarketSpec::parse_kv(text).unwrap();
        assert_eq!(spec.cds_tenors, vec![1.0, 3.0]);
        assert_relative_eq!(spec.maturity_years, 184.0 / 360.0);
        assert!(MarketSpec::parse_kv("bogus = 1").is_err());
        assert!(MarketSpec::parse_kv("volatility = -1").is_err());
    }
}
