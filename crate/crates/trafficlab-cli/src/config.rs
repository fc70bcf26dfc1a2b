//! The on-disk configuration file shared by all subcommands.
//!
//! One TOML document; command-line flags override anything set here. Every
//! key is optional — subcommands report which required settings are still
//! missing after flags and file are merged.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use trafficlab::agent::TrialConfig;
use trafficlab::calibration::{GaConfig, ParamBounds};
use trafficlab::datasets::StateThresholds;
use trafficlab::llm::RetryPolicy;
use trafficlab::models::ModelFamily;
use trafficlab::{Error, Result};

/// Root of the TOML configuration file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    /// Model family: `idm`, `mobil`, or `lwr`.
    pub family: Option<String>,
    /// Native variant name (the baseline for `improve`).
    pub variant: Option<String>,
    /// Dataset CSV path.
    pub data: Option<PathBuf>,
    /// Default output path for the subcommand.
    pub out: Option<PathBuf>,
    /// Directory of prompt templates; defaults to the built-in set.
    pub prompts_dir: Option<PathBuf>,
    /// Directory of reference notes retrieved into idea prompts.
    pub corpus_dir: Option<PathBuf>,
    /// Share of the dataset used for calibration during a trial.
    pub split_fraction: Option<f64>,
    /// Seed for the calibration/validation split.
    pub split_seed: Option<u64>,
    /// Driving-state thresholds for car-following reports.
    pub thresholds: StateThresholds,
    /// Genetic-algorithm settings.
    pub ga: GaConfig,
    /// Calibration bound overrides: `name = [lower, upper]`.
    pub bounds: BTreeMap<String, [f64; 2]>,
    /// Improvement-trial settings.
    pub trial: TrialFileConfig,
    /// Chat-backend settings.
    pub backend: BackendFileConfig,
}

/// The `[trial]` table.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrialFileConfig {
    /// Chat model identifier passed through to the backend.
    pub model_name: Option<String>,
    /// Validation improvement rate (%) that ends the trial successfully.
    pub target_improvement_pct: Option<f64>,
    pub max_iterations: Option<u32>,
    /// Code-generation attempts per iteration.
    pub debug_max_attempts: Option<u32>,
    pub max_tokens: Option<u32>,
    pub idea_temperature: Option<f64>,
    pub code_temperature: Option<f64>,
    /// Corpus passages retrieved per idea prompt.
    pub retrieval_k: Option<usize>,
    /// The `[trial.retry]` table: backoff for transient chat failures.
    pub retry: Option<RetryPolicy>,
}

/// The `[backend]` table.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendFileConfig {
    /// Chat completions endpoint used by `--backend live`.
    pub endpoint: Option<String>,
}

impl FileConfig {
    /// Load a TOML config file; no path yields the all-defaults config.
    pub fn load(path: Option<&Path>) -> Result<FileConfig> {
        let Some(path) = path else { return Ok(FileConfig::default()) };
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text)
            .map_err(|e| Error::Config(format!("invalid config file {}: {e}", path.display())))
    }

    /// The family named in the file, parsed.
    pub fn family(&self) -> Result<Option<ModelFamily>> {
        self.family.as_deref().map(ModelFamily::parse).transpose()
    }

    /// Apply `[bounds]` overrides to a model's default calibration bounds.
    /// Names that match no parameter are reported as errors.
    pub fn apply_bounds(&self, mut bounds: ParamBounds) -> Result<ParamBounds> {
        let mut unmatched = Vec::new();
        for (name, range) in &self.bounds {
            match bounds.genes.iter_mut().find(|g| g.name == *name) {
                Some(gene) => {
                    gene.lower = range[0];
                    gene.upper = range[1];
                }
                None => unmatched.push(name.as_str()),
            }
        }
        if !unmatched.is_empty() {
            return Err(Error::Config(format!(
                "[bounds] overrides {} match no model parameter",
                unmatched.join(", ")
            )));
        }
        ParamBounds::new(bounds.genes)
    }

    /// Assemble the trial configuration for `improve`: file values layered
    /// over the family defaults.
    pub fn trial_config(&self, family: ModelFamily) -> TrialConfig {
        let mut config = TrialConfig::for_family(family);
        if let Some(v) = &self.variant {
            config.baseline_variant = v.clone();
        }
        if let Some(f) = self.split_fraction {
            config.calibration_fraction = f;
        }
        if let Some(s) = self.split_seed {
            config.split_seed = s;
        }
        config.thresholds = self.thresholds;
        config.ga = self.ga.clone();
        let trial = &self.trial;
        if let Some(m) = &trial.model_name {
            config.model_name = m.clone();
        }
        if let Some(p) = trial.target_improvement_pct {
            config.target_improvement_pct = p;
        }
        if let Some(n) = trial.max_iterations {
            config.max_iterations = n;
        }
        if let Some(n) = trial.debug_max_attempts {
            config.debug_max_attempts = n;
        }
        if let Some(n) = trial.max_tokens {
            config.max_tokens = n;
        }
        if let Some(t) = trial.idea_temperature {
            config.idea_temperature = t;
        }
        if let Some(t) = trial.code_temperature {
            config.code_temperature = t;
        }
        if let Some(k) = trial.retrieval_k {
            config.retrieval_k = k;
        }
        if let Some(r) = &trial.retry {
            config.retry = r.clone();
        }
        config
    }
}
