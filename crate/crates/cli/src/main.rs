//! `qcva` — batch front end for the CVA toolkit.
//!
//! Every subcommand writes its artifacts (JSON, CSV, model/circuit text) into
//! `--out-dir` and prints the JSON summary on stdout. Exit codes: 0 success,
//! 1 a computation flag was raised (bound violated, estimate not converged,
//! …), 2 input error.

mod config;

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use qcva::cva_circuit::{self, PipelineConfig, PipelineOutput};
use qcva::discretize::{self, BinningOptions, Instance, ScalingOverrides};
use qcva::elf::{self, ElfProblem, EstimateConfig, EstimateStatus, NoiseModel};
use qcva::market::{self, DiscountCurve, MarketSpec};
use qcva::mps::{self, Dataset, MpsModel, MpsTrainConfig};
use qcva::qcbm::{self, QcbmAnsatz, QcbmTrainConfig};
use qcva::reference::{self, Reference};
use qcva::resource::{self, ClassicalModel, HardwareModel, QuantumModel};
use qcva::rls::{self, McxConvention};
use qcva::simulator::Projector;
use qcva::crca::{self, CrcaAnsatz, CrcaTrainConfig, RotationTarget};

use config::RunConfig;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config, or input files (exit 2).
    Input(String),
    /// The computation ran but raised a flag (exit 1).
    Flag(String, Value),
    /// Any other failure inside the computation (exit 1).
    Compute(String),
}

impl From<qcva::Error> for CliError {
    fn from(e: qcva::Error) -> Self {
        use qcva::Error as E;
        match e {
            E::InvalidInput(_) | E::Parse { .. } | E::Io { .. } | E::Csv(_) | E::BadTimeGrid | E::TimeOutOfRange { .. } | E::OutOfUnitInterval(_) => {
                CliError::Input(e.to_string())
            }
            other => CliError::Compute(other.to_string()),
        }
    }
}

type CliResult = Result<Value, CliError>;

#[derive(Parser, Debug)]
#[command(name = "qcva", version, about = "Quantum-algorithm toolkit for credit valuation adjustment")]
struct Cli {
    /// TOML run configuration (sections: market, discretize, qcbm, mps, crca, rls, elf, resource).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Zero-curve CSV (`time_years,zero_rate`); overrides `market.curve`.
    #[arg(long, global = true)]
    curve: Option<PathBuf>,
    /// Print errors as JSON on stderr.
    #[arg(long, global = true)]
    json_errors: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Target {
    V,
    Q,
    P,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Monte Carlo CVA benchmark.
    ClassicalCva {
        #[arg(long)]
        paths: Option<usize>,
        /// Number of CVA buckets.
        #[arg(long, default_value_t = 4)]
        buckets: usize,
    },
    /// Binned joint distribution, scaled tables and CVA~(n).
    Discretize {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        m: Option<usize>,
        /// Also run the convergence study up to `discretize.convergence_max_n`.
        #[arg(long)]
        convergence: bool,
    },
    /// Trains the circuit Born machine on the discretised distribution.
    TrainQcbm {
        #[arg(long)]
        layers: Option<usize>,
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Trains an MPS on samples of the discretised distribution.
    TrainMps {
        #[arg(long)]
        bond: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Compiles an MPS (model file, or a random one) to a gate list.
    CompileMps {
        #[arg(long)]
        model: Option<PathBuf>,
        /// Random MPS with this many sites when no model is given.
        #[arg(long, default_value_t = 4)]
        qubits: usize,
        #[arg(long, default_value_t = 2)]
        bond: usize,
    },
    /// Trains one controlled-rotation ansatz.
    TrainCrca {
        #[arg(long, value_enum, default_value_t = Target::V)]
        target: Target,
        #[arg(long)]
        layers: Option<usize>,
    },
    /// Reversible-logic baseline cost for the three tables.
    SynthesizeRls {
        #[arg(long)]
        bits: Option<usize>,
    },
    /// Trains every component and assembles the full circuit with its error budget.
    Assemble {
        /// Number of random perturbations for the bound check.
        #[arg(long, default_value_t = 100)]
        perturbations: usize,
    },
    /// Bayesian amplitude estimation with engineered likelihoods.
    ElfEstimate {
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        noiseless: bool,
    },
    /// Fault-tolerant runtime table and classical crossover.
    ResourceEstimate {
        #[arg(long)]
        distance: Option<usize>,
        /// Calibrate the classical model on this machine.
        #[arg(long)]
        calibrate: bool,
    },
    /// Full pipeline with a comparison table against the published values.
    ReproducePaper,
}

struct Ctx {
    cfg: RunConfig,
    seed: u64,
    out_dir: PathBuf,
}

impl Ctx {
    fn market(&self) -> Result<(MarketSpec, DiscountCurve), CliError> {
        let spec = match &self.cfg.market.spec {
            Some(p) => MarketSpec::from_file(p)?,
            None => MarketSpec::default(),
        };
        let curve = match &self.cfg.market.curve {
            Some(p) => DiscountCurve::from_csv(p).map_err(|e| CliError::Input(format!("curve file {}: {e}", p.display())))?,
            None => DiscountCurve::flat(self.cfg.market.flat_rate),
        };
        Ok((spec, curve))
    }

    fn instance(&self, m: usize) -> Result<Instance, CliError> {
        let (spec, curve) = self.market()?;
        Ok(Instance::simulate(&spec, &curve, m, self.cfg.discretize.paths, self.seed, BinningOptions::default())?)
    }

    fn overrides(&self) -> ScalingOverrides {
        let d = &self.cfg.discretize;
        ScalingOverrides { c_v: d.c_v, c_p: d.c_p, c_q: d.c_q }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        let p = self.path(name);
        File::create(&p).map(BufWriter::new).map_err(|e| CliError::Input(format!("cannot write {}: {e}", p.display())))
    }

    fn write_text(&self, name: &str, text: &str) -> Result<(), CliError> {
        let p = self.path(name);
        std::fs::write(&p, text).map_err(|e| CliError::Input(format!("cannot write {}: {e}", p.display())))
    }

    fn write_json(&self, name: &str, v: &impl Serialize) -> Result<Value, CliError> {
        let value = serde_json::to_value(v).map_err(|e| CliError::Compute(e.to_string()))?;
        let text = serde_json::to_string_pretty(&value).map_err(|e| CliError::Compute(e.to_string()))?;
        self.write_text(name, &text)?;
        Ok(value)
    }

    fn pipeline_config(&self) -> PipelineConfig {
        let c = &self.cfg;
        PipelineConfig {
            n: c.discretize.n,
            qcbm_layers: c.qcbm.layers,
            qcbm: QcbmTrainConfig { iterations: c.qcbm.iterations, sigma0: c.qcbm.sigma0, shots: c.qcbm.shots, ..QcbmTrainConfig::default() },
            payoff_layers: c.crca.payoff_layers,
            time_layers: c.crca.time_layers,
            crca: self.crca_config(),
            overrides: self.overrides(),
            seed: self.seed,
        }
    }

    fn crca_config(&self) -> CrcaTrainConfig {
        let c = &self.cfg.crca;
        CrcaTrainConfig { sigma0: c.sigma0, max_iters: c.max_iters, restarts: c.restarts, seed: self.seed, ..CrcaTrainConfig::default() }
    }

    fn hardware(&self) -> HardwareModel {
        let r = &self.cfg.resource;
        HardwareModel { gate_error: r.gate_error, distance: r.distance, cycle_time: r.cycle_time }
    }
}

fn classical_cva(ctx: &Ctx, paths: Option<usize>, buckets: usize) -> CliResult {
    let (spec, curve) = ctx.market()?;
    let hazard = market::bootstrap_hazard(&spec, &curve)?;
    let est = market::cva_mc(&spec, &curve, &hazard, buckets, paths.unwrap_or(ctx.cfg.discretize.paths), ctx.seed)?;
    ctx.write_json("classical_cva.json", &est)
}

fn discretize_cmd(ctx: &Ctx, n: Option<usize>, m: Option<usize>, convergence: bool) -> CliResult {
    let m = m.unwrap_or(ctx.cfg.discretize.m);
    let n = n.unwrap_or(ctx.cfg.discretize.n);
    let inst = ctx.instance(m)?;
    let (dist, f) = inst.discretize(n, ctx.overrides())?;
    discretize::write_dump(ctx.create("discretized.csv")?, &dist, &f)?;
    let cva = discretize::cva_discrete(&dist, &f)?;
    let mut out = json!({
        "m": m, "n": n, "cva_discrete": cva, "pi": discretize::pi_expectation(&dist, &f)?,
        "c_v": f.c_v, "c_p": f.c_p, "c_q": f.c_q, "prefactor": f.prefactor(m),
        "cva_mc_same_paths": inst.cva_mc()?.value,
    });
    if convergence {
        let ns: Vec<usize> = (2..=ctx.cfg.discretize.convergence_max_n).collect();
        let study = discretize::convergence_study(&inst, &ns)?;
        let mut w = csv::Writer::from_writer(ctx.create("convergence.csv")?);
        for p in &study.points {
            w.serialize(p).map_err(|e| CliError::Compute(e.to_string()))?;
        }
        w.flush().map_err(|e| CliError::Compute(e.to_string()))?;
        out["convergence"] = serde_json::to_value(&study).map_err(|e| CliError::Compute(e.to_string()))?;
    }
    ctx.write_json("discretize.json", &out)
}

fn train_qcbm_cmd(ctx: &Ctx, layers: Option<usize>, iterations: Option<usize>) -> CliResult {
    let c = &ctx.cfg;
    let inst = ctx.instance(c.discretize.m)?;
    let (dist, _) = inst.discretize(c.discretize.n, ctx.overrides())?;
    let ansatz = QcbmAnsatz::new(dist.n_qubits(), layers.unwrap_or(c.qcbm.layers))?;
    let cfg = QcbmTrainConfig { iterations: iterations.unwrap_or(c.qcbm.iterations), sigma0: c.qcbm.sigma0, shots: c.qcbm.shots, seed: ctx.seed, ..QcbmTrainConfig::default() };
    let r = qcbm::train_qcbm(&ansatz, &dist.probs, &cfg)?;
    qcbm::write_trace(ctx.create("qcbm_trace.csv")?, &r.trace)?;
    ctx.write_text("qcbm_model.txt", &qcbm::model_to_text(&ansatz, &r.params))?;
    let (cnots, singles) = ansatz.gate_counts();
    ctx.write_json("qcbm.json", &json!({ "kl": r.kl, "iterations": r.n_iters, "evaluations": r.evaluations, "cnots": cnots, "single_qubit": singles }))
}

fn train_mps_cmd(ctx: &Ctx, bond: Option<usize>, samples: Option<usize>) -> CliResult {
    let c = &ctx.cfg;
    let inst = ctx.instance(c.discretize.m)?;
    let (dist, _) = inst.discretize(c.discretize.n, ctx.overrides())?;
    let draws = dist.sample_indices(samples.unwrap_or(c.mps.samples), ctx.seed);
    let data = Dataset::from_samples(dist.n_qubits(), &draws)?;
    let cfg = MpsTrainConfig { max_bond: bond.unwrap_or(c.mps.max_bond), max_sweeps: c.mps.max_sweeps, seed: ctx.seed, ..MpsTrainConfig::default() };
    let r = mps::train_mps(&data, &cfg)?;
    ctx.write_text("mps_model.txt", &mps::model_to_text(&r.model))?;
    let kl_true = qcbm::kl_divergence(&dist.probs, &r.model.probabilities()?)?;
    ctx.write_json(
        "mps.json",
        &json!({ "kl_training": r.kl, "kl_target": kl_true, "sweeps": r.n_iters, "stop": r.stop, "nll_trace": r.nll_trace, "bond_dims": r.model.bond_dims(), "seconds": r.seconds }),
    )
}

fn compile_mps_cmd(ctx: &Ctx, model: Option<PathBuf>, qubits: usize, bond: usize) -> CliResult {
    let model = match model.or_else(|| ctx.cfg.mps.model.clone()) {
        Some(p) => {
            let text = std::fs::read_to_string(&p).map_err(|e| CliError::Input(format!("model file {}: {e}", p.display())))?;
            mps::model_from_text(&text)?
        }
        None => MpsModel::random(qubits, bond, ctx.seed)?,
    };
    let c = mps::compile_mps(&model)?;
    ctx.write_text("mps_circuit.txt", &c.circuit.to_text())?;
    ctx.write_json(
        "compile_mps.json",
        &json!({ "qubits": model.n_sites(), "bond_dims": model.bond_dims(), "cnots": c.cnot_count, "single_qubit": c.single_qubit_count, "fidelity": c.fidelity_vs_mps, "blocks": c.blocks }),
    )
}

fn train_crca_cmd(ctx: &Ctx, target: Target, layers: Option<usize>) -> CliResult {
    let c = &ctx.cfg;
    let inst = ctx.instance(c.discretize.m)?;
    let (_, f) = inst.discretize(c.discretize.n, ctx.overrides())?;
    let (values, default_layers, name) = match target {
        Target::V => (f.v_tilde.clone(), c.crca.payoff_layers, "v"),
        Target::Q => (f.q_tilde.clone(), c.crca.time_layers, "q"),
        Target::P => (f.p_tilde.clone(), c.crca.time_layers, "p"),
    };
    let t = RotationTarget::new(values)?;
    let ansatz = CrcaAnsatz::new(t.width, layers.unwrap_or(default_layers))?;
    let model = crca::train_crca(&t, ansatz, &ctx.crca_config())?;
    ctx.write_text(&format!("crca_{name}.txt"), &crca::model_to_text(&model))?;
    let full = crca::full_operator_error(&model.ansatz, &model.params, &t)?;
    ctx.write_json(
        &format!("crca_{name}.json"),
        &json!({ "target": name, "cnots": model.ansatz.n_cnots(), "params": model.ansatz.n_params(), "error": model.error, "full_operator_error": full }),
    )
}

fn synthesize_rls_cmd(ctx: &Ctx, bits: Option<usize>) -> CliResult {
    let c = &ctx.cfg;
    let conv = match c.rls.convention.as_str() {
        "clean" => McxConvention::CleanAncillaChain,
        "dirty" => McxConvention::DirtyAncillaChain,
        other => return Err(CliError::Input(format!("config key rls.convention: unknown value {other:?} (clean|dirty)"))),
    };
    let inst = ctx.instance(c.discretize.m)?;
    let (_, f) = inst.discretize(c.discretize.n, ctx.overrides())?;
    let report = rls::cva_rls_report(&f.v_tilde, &f.p_tilde, &f.q_tilde, bits.unwrap_or(c.rls.bits), conv)?;
    ctx.write_json("rls.json", &report)
}

fn assemble_cmd(ctx: &Ctx, perturbations: usize) -> CliResult {
    let inst = ctx.instance(ctx.cfg.discretize.m)?;
    let out = cva_circuit::run_pipeline(&inst, &ctx.pipeline_config())?;
    ctx.write_text("assembled_circuit.txt", &out.assembled.circuit.to_text())?;
    let checks = cva_circuit::perturbation_sweep(
        out.assembled.n,
        out.assembled.constants,
        &out.ideal,
        [&out.rotations[0], &out.rotations[1], &out.rotations[2]],
        perturbations,
        0.05,
        ctx.seed,
    )?;
    let held = checks.iter().filter(|c| c.holds).count();
    let value = ctx.write_json("assemble.json", &json!({ "report": out.report, "cva_mc": out.cva_mc, "cva_discrete": out.cva_discrete, "perturbations": perturbations, "perturbations_within_bound": held }))?;
    if !out.report.bound_holds || held < perturbations {
        return Err(CliError::Flag("error bound violated".into(), value));
    }
    Ok(value)
}

fn elf_cmd(ctx: &Ctx, eta: Option<f64>, epsilon: Option<f64>, noiseless: bool) -> CliResult {
    let c = &ctx.cfg;
    let (problem, gates) = match eta.or(c.elf.eta) {
        Some(e) if (-1.0..=1.0).contains(&e) => (ElfProblem::Angle(e.acos()), None),
        Some(e) => return Err(CliError::Input(format!("eta {e} outside [-1, 1]"))),
        None => {
            let inst = ctx.instance(c.discretize.m)?;
            let out = cva_circuit::run_pipeline(&inst, &ctx.pipeline_config())?;
            let a = &out.assembled;
            let proj = Projector::all_ones(vec![a.payoff_ancilla(), a.default_ancilla(), a.discount_ancilla()]);
            let base = a.circuit.with_xx_decomposed().cnot_count();
            (ElfProblem::Circuit { circuit: a.circuit.clone(), projector: proj }, Some(resource::elf_footprint(a.n, a.m, base).two_qubit_per_layer))
        }
    };
    let noise = if noiseless || c.elf.noiseless {
        NoiseModel::noiseless()
    } else if let Some(l) = c.elf.lambda {
        NoiseModel { lambda: l, readout: 1.0 }
    } else {
        let o = resource::surface_overhead(&ctx.hardware())?;
        let fp = resource::elf_footprint(c.discretize.n, c.discretize.m, c.resource.base_two_qubit);
        NoiseModel { lambda: fp.lambda(o.f_2q), readout: o.readout }
    };
    let cfg = EstimateConfig { epsilon_target: epsilon.unwrap_or(c.elf.epsilon), max_shots: c.elf.max_shots, seed: ctx.seed, ..EstimateConfig::default() };
    let r = elf::estimate(&problem, &noise, &cfg, gates)?;
    elf::write_ledger(ctx.create("elf_ledger.csv")?, &r.history)?;
    let value = ctx.write_json(
        "elf.json",
        &json!({
            "eta_true": problem.eta()?, "eta_hat": r.eta_hat, "eta_sigma": r.eta_sigma, "theta_mu": r.theta_mu, "theta_sigma": r.theta_sigma,
            "shots": r.shots, "total_layers": r.total_layers, "total_queries": r.total_queries, "two_qubit_gates": r.two_qubit_gates,
            "status": r.status, "lambda": noise.lambda,
        }),
    )?;
    if r.status != EstimateStatus::Converged {
        return Err(CliError::Flag(format!("estimation stopped with status {:?}", r.status), value));
    }
    Ok(value)
}

/// `⟨Π⟩` of the reference instance: published CVA over the published prefactor.
fn reference_pi(spec: &MarketSpec, m: usize) -> f64 {
    let (c_v, c_q, c_p) = reference::SCALING_CONSTANTS;
    reference::CVA_MC.value / ((1usize << m) as f64 * (1.0 - spec.cva_recovery) * c_v * c_p * c_q)
}

fn resource_summary(ctx: &Ctx, distance: Option<usize>, calibrate: bool) -> Result<(Value, Vec<resource::RuntimeRow>), CliError> {
    let r = &ctx.cfg.resource;
    let (spec, curve) = ctx.market()?;
    let hw = HardwareModel { distance: distance.unwrap_or(r.distance), ..ctx.hardware() };
    let fp = resource::elf_footprint(ctx.cfg.discretize.n, ctx.cfg.discretize.m, r.base_two_qubit);
    let pi = reference_pi(&spec, ctx.cfg.discretize.m);
    let quantum = QuantumModel::new(&hw, fp, pi)?;
    let (classical, calibration) = if calibrate || r.calibrate {
        let hazard = market::bootstrap_hazard(&spec, &curve)?;
        let pts = resource::calibrate_classical(&spec, &curve, &hazard, 4, &[1_000, 3_000, 10_000, 30_000, 100_000], 5, ctx.seed)?;
        (resource::classical_runtime(&pts)?, Some(pts))
    } else {
        (ClassicalModel::anchored(r.classical_anchor_re, r.classical_anchor_seconds, r.classical_exponent), None)
    };
    let grid = resource::log_grid(r.re_max, r.re_min, r.re_points);
    let cross = resource::crossover(&quantum, &classical, &grid)?;
    let rows = resource::runtime_table(&hw, &r.distances, fp, pi, &classical, &grid)?;
    let q_slope = resource::loglog_slope(|e| quantum.seconds(e), 1e-4, 1e-2, 9)?;
    let c_slope = resource::loglog_slope(|e| Ok(classical.seconds(e)), 1e-4, 1e-2, 9)?;
    let (d_opt, t_opt) = resource::optimal_distance(&hw, &r.distances, fp, pi, reference::RUNTIME_RE)?;
    let summary = json!({
        "distance": hw.distance, "overhead": quantum.overhead, "footprint": fp, "lambda": fp.lambda(quantum.overhead.f_2q),
        "pi_expectation": pi, "quantum_seconds_at_reference_re": quantum.seconds(reference::RUNTIME_RE)?,
        "classical_seconds_at_reference_re": classical.seconds(reference::RUNTIME_RE), "classical_model": classical,
        "crossover": cross, "quantum_slope": q_slope, "classical_slope": c_slope,
        "optimal_distance_at_reference_re": d_opt, "optimal_seconds_at_reference_re": t_opt, "calibration": calibration,
    });
    Ok((summary, rows))
}

fn resource_cmd(ctx: &Ctx, distance: Option<usize>, calibrate: bool) -> CliResult {
    let (summary, rows) = resource_summary(ctx, distance, calibrate)?;
    resource::write_runtime_csv(ctx.create("runtime.csv")?, &rows)?;
    ctx.write_json("resource.json", &summary)
}

#[derive(Serialize)]
struct ReportRow {
    key: &'static str,
    description: &'static str,
    reference: f64,
    computed: f64,
    within_tolerance: bool,
}

fn row(r: Reference, computed: f64) -> ReportRow {
    ReportRow { key: r.key, description: r.description, reference: r.value, computed, within_tolerance: r.accepts(computed) }
}

fn reproduce_cmd(ctx: &Ctx) -> CliResult {
    let (spec, curve) = ctx.market()?;
    let mut rows = Vec::new();
    let flat = DiscountCurve::flat(0.0);
    let hz = market::bootstrap_hazard(&spec, &flat)?;
    rows.push(row(reference::CVA_MC_FLAT, market::cva_mc(&spec, &flat, &hz, 4, 100_000, ctx.seed)?.value));
    if ctx.cfg.market.curve.is_some() {
        let hz = market::bootstrap_hazard(&spec, &curve)?;
        rows.push(row(reference::CVA_MC, market::cva_mc(&spec, &curve, &hz, 4, 100_000, ctx.seed)?.value));
    }
    let inst = ctx.instance(2)?;
    let (dist, f) = inst.discretize(2, ctx.overrides())?;
    rows.push(row(reference::CVA_DISCRETE_2, discretize::cva_discrete(&dist, &f)?));
    let study = discretize::convergence_study(&inst, &(2..=ctx.cfg.discretize.convergence_max_n).collect::<Vec<_>>())?;
    rows.push(row(reference::CVA_DISCRETE_LIMIT, study.limit));
    let out: PipelineOutput = cva_circuit::run_pipeline(&inst, &PipelineConfig { n: 2, ..ctx.pipeline_config() })?;
    let r = &out.report;
    rows.push(row(reference::CVA_QUANTUM, r.cva_q));
    rows.push(row(reference::EPSILON_D, r.epsilon_d));
    rows.push(row(reference::EPSILON_Q, r.epsilon_q));
    rows.push(row(reference::EPSILON_PI, r.epsilon_pi));
    rows.push(row(reference::KL_STATE_PREP, r.kl_g_tg));
    rows.push(row(reference::EPSILON_CRCA_V, r.epsilon_crca_v));
    rows.push(row(reference::EPSILON_CRCA_Q, r.epsilon_crca_q));
    rows.push(row(reference::EPSILON_CRCA_P, r.epsilon_crca_p));
    let (res, runtime_rows) = resource_summary(ctx, Some(reference::RUNTIME_DISTANCE), false)?;
    resource::write_runtime_csv(ctx.create("runtime.csv")?, &runtime_rows)?;
    rows.push(row(reference::QUANTUM_RUNTIME, res["quantum_seconds_at_reference_re"].as_f64().unwrap_or(f64::NAN)));
    rows.push(row(reference::CROSSOVER_RE, res["crossover"]["relative_error"].as_f64().unwrap_or(f64::NAN)));
    let mut w = csv::Writer::from_writer(ctx.create("reproduction.csv")?);
    for r in &rows {
        w.serialize(r).map_err(|e| CliError::Compute(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::Compute(e.to_string()))?;
    ctx.write_json("reproduction.json", &json!({ "rows": rows, "pipeline_bound_holds": out.report.bound_holds, "resource": res }))
}

fn run(cli: Cli) -> CliResult {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(c) = cli.curve {
        cfg.market.curve = Some(c);
        cfg.check_files()?;
    }
    let out_dir = cli.out_dir.or_else(|| cfg.out_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&out_dir).map_err(|e| CliError::Input(format!("cannot create {}: {e}", out_dir.display())))?;
    let seed = cli.seed.or(cfg.seed).unwrap_or(1);
    let ctx = Ctx { cfg, seed, out_dir };
    match cli.command {
        Command::ClassicalCva { paths, buckets } => classical_cva(&ctx, paths, buckets),
        Command::Discretize { n, m, convergence } => discretize_cmd(&ctx, n, m, convergence),
        Command::TrainQcbm { layers, iterations } => train_qcbm_cmd(&ctx, layers, iterations),
        Command::TrainMps { bond, samples } => train_mps_cmd(&ctx, bond, samples),
        Command::CompileMps { model, qubits, bond } => compile_mps_cmd(&ctx, model, qubits, bond),
        Command::TrainCrca { target, layers } => train_crca_cmd(&ctx, target, layers),
        Command::SynthesizeRls { bits } => synthesize_rls_cmd(&ctx, bits),
        Command::Assemble { perturbations } => assemble_cmd(&ctx, perturbations),
        Command::ElfEstimate { eta, epsilon, noiseless } => elf_cmd(&ctx, eta, epsilon, noiseless),
        Command::ResourceEstimate { distance, calibrate } => resource_cmd(&ctx, distance, calibrate),
        Command::ReproducePaper => reproduce_cmd(&ctx),
    }
}

fn print_json(v: &Value) {
    println!("{}", serde_json::to_string_pretty(v).unwrap_or_else(|_| v.to_string()));
}

fn report_error(json_errors: bool, kind: &str, msg: &str) {
    if json_errors {
        eprintln!("{}", json!({ "error": msg, "kind": kind }));
    } else {
        eprintln!("error: {msg}");
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let json_errors = cli.json_errors;
    match run(cli) {
        Ok(v) => {
            print_json(&v);
            ExitCode::SUCCESS
        }
        Err(CliError::Flag(msg, v)) => {
            print_json(&v);
            report_error(json_errors, "flag", &msg);
            ExitCode::from(1)
        }
        Err(CliError::Compute(msg)) => {
            report_error(json_errors, "computation", &msg);
            ExitCode::from(1)
        }
        Err(CliError::Input(msg)) => {
            report_error(json_errors, "input", &msg);
            ExitCode::from(2)
        }
    }
}
