//! Run configuration: one TOML file, one section per module.
//!
//! Every key has a default, so an empty file (or no file) is a valid
//! configuration. Unknown keys are rejected with their path.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::CliError;

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub market: MarketSection,
    pub discretize: DiscretizeSection,
    pub qcbm: QcbmSection,
    pub mps: MpsSection,
    pub crca: CrcaSection,
    pub rls: RlsSection,
    pub elf: ElfSection,
    pub resource: ResourceSection,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarketSection {
    /// `key = value` market specification; built-in instance when absent.
    pub spec: Option<PathBuf>,
    /// `time_years,zero_rate` zero curve; flat curve when absent.
    pub curve: Option<PathBuf>,
    pub flat_rate: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscretizeSection {
    pub m: usize,
    pub n: usize,
    pub paths: usize,
    /// Largest `n` of the convergence study.
    pub convergence_max_n: usize,
    pub c_v: Option<f64>,
    pub c_p: Option<f64>,
    pub c_q: Option<f64>,
}

impl Default for DiscretizeSection {
    fn default() -> Self {
        DiscretizeSection { m: 2, n: 2, paths: 100_000, convergence_max_n: 10, c_v: None, c_p: None, c_q: None }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QcbmSection {
    pub layers: usize,
    pub iterations: usize,
    pub sigma0: f64,
    pub shots: Option<u64>,
}

impl Default for QcbmSection {
    fn default() -> Self {
        QcbmSection { layers: 2, iterations: 1500, sigma0: 0.5, shots: None }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpsSection {
    pub max_bond: usize,
    pub samples: usize,
    pub max_sweeps: usize,
    /// Model file for `compile-mps`.
    pub model: Option<PathBuf>,
}

impl Default for MpsSection {
    fn default() -> Self {
        MpsSection { max_bond: 2, samples: 100_000, max_sweeps: 50, model: None }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrcaSection {
    pub payoff_layers: usize,
    pub time_layers: usize,
    pub max_iters: usize,
    pub restarts: usize,
    pub sigma0: f64,
}

impl Default for CrcaSection {
    fn default() -> Self {
        CrcaSection { payoff_layers: 2, time_layers: 1, max_iters: 3000, restarts: 3, sigma0: 0.3 }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RlsSection {
    pub bits: usize,
    /// `clean` or `dirty` ancilla chain for multi-controlled NOTs.
    pub convention: String,
}

impl Default for RlsSection {
    fn default() -> Self {
        RlsSection { bits: 8, convention: "clean".into() }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ElfSection {
    pub epsilon: f64,
    pub max_shots: usize,
    /// Target `η`; taken from the assembled circuit when absent.
    pub eta: Option<f64>,
    /// Noise decay per ansatz application; derived from `resource` when absent.
    pub lambda: Option<f64>,
    pub noiseless: bool,
}

impl Default for ElfSection {
    fn default() -> Self {
        ElfSection { epsilon: 1e-3, max_shots: 100_000, eta: None, lambda: None, noiseless: false }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResourceSection {
    pub gate_error: f64,
    pub cycle_time: f64,
    pub distance: usize,
    pub distances: Vec<usize>,
    pub re_min: f64,
    pub re_max: f64,
    pub re_points: usize,
    /// Classical anchor: runtime (s) at `classical_anchor_re`.
    pub classical_anchor_seconds: f64,
    pub classical_anchor_re: f64,
    pub classical_exponent: f64,
    /// Two-qubit gates of one application of `A`.
    pub base_two_qubit: usize,
    /// Calibrate the classical model on this machine instead of the anchor.
    pub calibrate: bool,
}

impl Default for ResourceSection {
    fn default() -> Self {
        ResourceSection {
            gate_error: 1e-3,
            cycle_time: 1e-6,
            distance: 18,
            distances: (10..=26).collect(),
            re_min: 1e-7,
            re_max: 1e-1,
            re_points: 61,
            classical_anchor_seconds: 3.7e6,
            classical_anchor_re: 1e-5,
            classical_exponent: 2.0,
            base_two_qubit: qcva::resource::REFERENCE_BASE_TWO_QUBIT,
            calibrate: false,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<RunConfig, CliError> {
        let Some(path) = path else { return Ok(RunConfig::default()) };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("config {}: {e}", path.display())))?;
        let cfg: RunConfig = toml::from_str(&text).map_err(|e| CliError::Input(format!("config {}: {e}", path.display())))?;
        cfg.check_files()?;
        Ok(cfg)
    }

    /// Referenced files must exist; errors name the key path.
    pub fn check_files(&self) -> Result<(), CliError> {
        for (key, p) in [("market.spec", &self.market.spec), ("market.curve", &self.market.curve), ("mps.model", &self.mps.model)] {
            if let Some(p) = p {
                if !p.is_file() {
                    return Err(CliError::Input(format!("config key {key}: file not found: {}", p.display())));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg: RunConfig = toml::from_str("").unwrap();
        assert_eq!(cfg.discretize.n, 2);
        assert_eq!(cfg.resource.distance, 18);
        assert_eq!(cfg.resource.base_two_qubit, 42);
    }

    #[test]
    fn nested_unknown_key_is_named() {
        let err = toml::from_str::<RunConfig>("[elf]\nepsilon = 1e-3\nshots = 4\n").unwrap_err().to_string();
        assert!(err.contains("shots"), "{err}");
    }
}
