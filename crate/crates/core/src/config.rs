//! Declarative experiment configuration.
//!
//! One JSON document pins everything a run needs: environment, agent, truth
//! generator, horizon, seeds, and output. Defaults are materialized at load
//! time so the echoed config written next to results is complete.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agents::BaselineKind;
use crate::env::{AdversaryInfo, EnvKind, NoiseModel, Strategy};
use crate::error::{Error, Result};
use crate::estimator::EstimatorConfig;
use crate::norms::NormFamily;
use crate::truth::TruthConfig;

/// Environment variable that overrides the seed list (comma-separated) for
/// CI smoke runs.
pub const SEED_OVERRIDE_VAR: &str = "BANDIT_SIM_SEEDS";

/// Which algorithm the run executes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgoKind {
    Single,
    Multi,
    Random,
    Oracle,
    Unstructured,
}

impl AlgoKind {
    pub fn baseline(self) -> Option<BaselineKind> {
        match self {
            AlgoKind::Random => Some(BaselineKind::RandomPolicy),
            AlgoKind::Oracle => Some(BaselineKind::OracleGreedy),
            AlgoKind::Unstructured => Some(BaselineKind::UnstructuredGreedy),
            _ => None,
        }
    }
}

/// Warm-start length for the single-parameter algorithm: an explicit round
/// count, or `"auto"` for the width-based default.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TMin {
    Auto,
    Fixed(usize),
}

impl Default for TMin {
    fn default() -> Self {
        TMin::Auto
    }
}

impl Serialize for TMin {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            TMin::Auto => ser.serialize_str("auto"),
            TMin::Fixed(v) => ser.serialize_u64(*v as u64),
        }
    }
}

impl<'de> Deserialize<'de> for TMin {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(u64),
            Tag(String),
        }
        match Raw::deserialize(de)? {
            Raw::Count(v) => Ok(TMin::Fixed(v as usize)),
            Raw::Tag(s) if s == "auto" => Ok(TMin::Auto),
            Raw::Tag(s) => Err(serde::de::Error::custom(format!(
                "t_min must be an integer or \"auto\", got \"{s}\""
            ))),
        }
    }
}

fn default_strategy() -> Strategy {
    Strategy::Zero
}

/// Environment section of the experiment JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub kind: EnvKind,
    pub k: usize,
    pub p: usize,
    pub sigma: f64,
    #[serde(default = "default_strategy")]
    pub strategy: Strategy,
    pub noise: NoiseModel,
    #[serde(default)]
    pub adversary_info: AdversaryInfo,
}

/// Agent section of the experiment JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub algo: AlgoKind,
    #[serde(default)]
    pub t_min: TMin,
    /// T0 for the multi-parameter algorithm; must be a positive multiple of k.
    #[serde(default)]
    pub warm_start: usize,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    /// Debug mode: freeze the single-parameter estimate at the truth.
    #[serde(default)]
    pub oracle_init: bool,
    /// Store context batches in traces (memory-heavy at long horizons).
    #[serde(default)]
    pub record_batches: bool,
}

fn default_output_dir() -> String {
    "out".to_string()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
}

impl Default for OutputFormat {
    fn default() -> Self {
        OutputFormat::Csv
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: String,
    pub format: OutputFormat,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: default_output_dir(), format: OutputFormat::Csv }
    }
}

/// Full declarative description of one experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub environment: EnvConfig,
    pub agent: AgentConfig,
    pub truth: TruthConfig,
    pub horizon: usize,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    /// Cross-reference and range validation beyond what serde enforces.
    pub fn validate(&self) -> Result<()> {
        let env = &self.environment;
        if env.k < 1 || env.p < 1 {
            return Err(Error::config("environment.k and environment.p must be at least 1"));
        }
        if !env.sigma.is_finite() || env.sigma < 0.0 {
            return Err(Error::config(format!(
                "environment.sigma must be finite and nonnegative, got {}",
                env.sigma
            )));
        }
        if !env.noise.kappa.is_finite() || env.noise.kappa < 0.0 {
            return Err(Error::config(format!(
                "environment.noise.kappa must be finite and nonnegative, got {}",
                env.noise.kappa
            )));
        }
        if let Strategy::Constant { vector } = &env.strategy {
            if vector.len() != env.p {
                return Err(Error::config(format!(
                    "environment.strategy.vector has length {}, expected p = {}",
                    vector.len(),
                    env.p
                )));
            }
        }

        self.truth.validate()?;
        if self.truth.p != env.p {
            return Err(Error::config(format!(
                "truth.p = {} does not match environment.p = {}",
                self.truth.p, env.p
            )));
        }

        let mode = self.truth.mode;
        match self.agent.algo {
            AlgoKind::Single | AlgoKind::Unstructured => {
                if mode != crate::env::TruthMode::Single {
                    return Err(Error::config(format!(
                        "agent.algo {:?} requires truth.mode = single",
                        self.agent.algo
                    )));
                }
            }
            AlgoKind::Multi => {
                if mode != crate::env::TruthMode::Multi {
                    return Err(Error::config("agent.algo multi requires truth.mode = multi"));
                }
                if self.truth.k != env.k {
                    return Err(Error::config(format!(
                        "truth.k = {} does not match environment.k = {}",
                        self.truth.k, env.k
                    )));
                }
                if self.agent.warm_start == 0 || self.agent.warm_start % env.k != 0 {
                    return Err(Error::config(format!(
                        "agent.warm_start = {} must be a positive multiple of k = {}",
                        self.agent.warm_start, env.k
                    )));
                }
                if self.horizon <= self.agent.warm_start {
                    return Err(Error::config(format!(
                        "horizon = {} must exceed agent.warm_start = {}",
                        self.horizon, self.agent.warm_start
                    )));
                }
            }
            AlgoKind::Random | AlgoKind::Oracle => {
                if mode == crate::env::TruthMode::Multi && self.truth.k != env.k {
                    return Err(Error::config(format!(
                        "truth.k = {} does not match environment.k = {}",
                        self.truth.k, env.k
                    )));
                }
            }
        }
        if self.horizon < 1 {
            return Err(Error::config("horizon must be at least 1"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds must be nonempty"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(Error::config("seeds must be distinct"));
        }
        if !(self.agent.estimator.sv_tol > 0.0) {
            return Err(Error::config("agent.estimator.sv_tol must be positive"));
        }
        if !(self.agent.estimator.tol > 0.0) {
            return Err(Error::config("agent.estimator.tol must be positive"));
        }
        if self.agent.estimator.max_iters == 0 {
            return Err(Error::config("agent.estimator.max_iters must be at least 1"));
        }
        Ok(())
    }
}

/// Parse and validate an experiment configuration from a JSON file.
pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
    load_config_str(&text)
}

/// Parse and validate an experiment configuration from a JSON string.
pub fn load_config_str(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig =
        serde_json::from_str(text).map_err(|e| Error::config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Replace the seed list from `BANDIT_SIM_SEEDS` when set; returns the
/// replaced list when an override was applied.
pub fn apply_seed_override(cfg: &mut ExperimentConfig) -> Result<Option<Vec<u64>>> {
    match std::env::var(SEED_OVERRIDE_VAR) {
        Ok(raw) => {
            let seeds: std::result::Result<Vec<u64>, _> =
                raw.split(',').map(|s| s.trim().parse::<u64>()).collect();
            let seeds = seeds.map_err(|_| {
                Error::config(format!("{SEED_OVERRIDE_VAR} must be a comma-separated list of integers"))
            })?;
            if seeds.is_empty() {
                return Err(Error::config(format!("{SEED_OVERRIDE_VAR} must contain at least one seed")));
            }
            let old = std::mem::replace(&mut cfg.seeds, seeds);
            cfg.validate()?;
            Ok(Some(old))
        }
        Err(_) => Ok(None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::TruthMode;

    fn minimal_json() -> String {
        r#"{
            "environment": {"kind": "gaussian", "k": 3, "p": 8, "sigma": 0.3,
                            "noise": {"family": "gaussian", "kappa": 0.2}},
            "agent": {"algo": "single"},
            "truth": {"mode": "single", "p": 8, "family": "l2"},
            "horizon": 32,
            "seeds": [1, 2]
        }"#
        .to_string()
    }

    #[test]
    fn minimal_config_loads_with_defaults() {
        let cfg = load_config_str(&minimal_json()).unwrap();
        assert_eq!(cfg.agent.t_min, TMin::Auto);
        assert_eq!(cfg.agent.estimator, EstimatorConfig::default());
        assert!(cfg.agent.estimator.puffer);
        assert_eq!(cfg.output.dir, "out");
        assert_eq!(cfg.environment.strategy, Strategy::Zero);
        assert_eq!(cfg.environment.adversary_info, AdversaryInfo::Full);

        // The echo contains every materialized default.
        let echo = serde_json::to_value(&cfg).unwrap();
        assert_eq!(echo["agent"]["estimator"]["max_iters"], 2000);
        assert_eq!(echo["agent"]["t_min"], "auto");
        assert_eq!(echo["output"]["format"], "csv");
    }

    #[test]
    fn warm_start_divisibility_checked() {
        let json = r#"{
            "environment": {"kind": "gaussian", "k": 2, "p": 4, "sigma": 0.3,
                            "noise": {"family": "gaussian", "kappa": 0.2}},
            "agent": {"algo": "multi", "warm_start": 7},
            "truth": {"mode": "multi", "p": 4, "k": 2, "family": "l2"},
            "horizon": 64,
            "seeds": [1]
        }"#;
        let err = load_config_str(json).unwrap_err();
        assert!(err.to_string().contains("warm_start"), "{err}");
    }

    #[test]
    fn unknown_norm_family_names_the_value() {
        let json = minimal_json().replace("\"l2\"", "\"tv\"");
        let err = load_config_str(&json).unwrap_err();
        assert!(err.to_string().contains("tv"), "{err}");
    }

    #[test]
    fn cross_reference_mismatch_rejected() {
        let json = minimal_json().replace("\"p\": 8, \"family\"", "\"p\": 9, \"family\"");
        let err = load_config_str(&json).unwrap_err();
        assert!(err.to_string().contains("truth.p"), "{err}");
    }

    #[test]
    fn seeds_must_be_distinct_and_nonempty() {
        let dup = minimal_json().replace("[1, 2]", "[1, 1]");
        assert!(load_config_str(&dup).is_err());
        let empty = minimal_json().replace("[1, 2]", "[]");
        assert!(load_config_str(&empty).is_err());
    }

    #[test]
    fn unknown_field_rejected() {
        let json = minimal_json().replace("\"horizon\": 32,", "\"horizon\": 32, \"extra\": 1,");
        let err = load_config_str(&json).unwrap_err();
        assert!(err.to_string().contains("extra"), "{err}");
    }

    #[test]
    fn t_min_parses_auto_and_fixed() {
        let auto: TMin = serde_json::from_str("\"auto\"").unwrap();
        assert_eq!(auto, TMin::Auto);
        let fixed: TMin = serde_json::from_str("17").unwrap();
        assert_eq!(fixed, TMin::Fixed(17));
        assert!(serde_json::from_str::<TMin>("\"never\"").is_err());
    }

    #[test]
    fn multi_config_round_trips() {
        let json = r#"{
            "environment": {"kind": "smoothed", "k": 3, "p": 6, "sigma": 0.4,
                            "strategy": {"kind": "equal_means"},
                            "noise": {"family": "uniform_bounded", "kappa": 0.3},
                            "adversary_info": "rewards_only"},
            "agent": {"algo": "multi", "warm_start": 6,
                      "estimator": {"max_iters": 500, "tol": 1e-8, "sv_tol": 1e-9, "puffer": false}},
            "truth": {"mode": "multi", "p": 6, "k": 3, "family": "l1", "sparsity": 2},
            "horizon": 64,
            "seeds": [5, 6, 7],
            "output": {"dir": "results", "format": "csv"}
        }"#;
        let cfg = load_config_str(json).unwrap();
        assert_eq!(cfg.truth.mode, TruthMode::Multi);
        let round = serde_json::to_string(&cfg).unwrap();
        let back = load_config_str(&round).unwrap();
        assert_eq!(back, cfg);
    }
}
