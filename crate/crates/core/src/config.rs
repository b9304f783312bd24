//! Experiment configuration: a JSON document whose every field has a default,
//! so an empty file is a complete, valid configuration.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aoi::AoiFormula;
use crate::delay::DelayModelKind;
use crate::env::{EnvError, MdpKind, WorldConfig};
use crate::estimation::{HeadingConfig, ReplicaKind};
use crate::rl::{ArmSpec, DiscretizationConfig, RlError, TrainConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: field `{field}`: {message}")]
    Parse {
        path: PathBuf,
        field: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid config: `{field}` {reason}")]
    Invalid { field: String, reason: String },
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    AoiCheck,
    EstimatorBench,
    Train,
    #[default]
    Compare,
    #[serde(alias = "table1-ablation")]
    AblateDelay,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::AoiCheck => "aoi-check",
            ExperimentKind::EstimatorBench => "estimator-bench",
            ExperimentKind::Train => "train",
            ExperimentKind::Compare => "compare",
            ExperimentKind::AblateDelay => "ablate-delay",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Closed-form versus numerical-integration check on random timelines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AoiCheckConfig {
    pub timelines: usize,
    /// Updates per timeline are drawn from `1..=max_updates`.
    pub max_updates: usize,
    /// Integration step as a fraction of each timeline's horizon.
    pub dt_ratio: f64,
    pub tolerance: f64,
    pub formula: AoiFormula,
}

impl Default for AoiCheckConfig {
    fn default() -> Self {
        Self {
            timelines: 200,
            max_updates: 50,
            dt_ratio: 1e-6,
            tolerance: 1e-4,
            formula: AoiFormula::Exact,
        }
    }
}

/// Monte-Carlo sweep of the replica-correlation delay estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DelayBenchConfig {
    pub replica: ReplicaKind,
    pub record_length: usize,
    /// Per-sample SNRs; the noise variance is replica power over SNR.
    pub snrs: Vec<f64>,
    pub trials: usize,
}

impl Default for DelayBenchConfig {
    fn default() -> Self {
        Self {
            replica: ReplicaKind::default(),
            record_length: 512,
            snrs: vec![0.1, 0.3, 1.0, 10.0],
            trials: 1000,
        }
    }
}

/// Monte-Carlo sweep of the periodogram heading estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeadingBenchConfig {
    pub heading: HeadingConfig,
    /// Per-sample SNRs, `amplitude^2 / (2 sigma^2)`.
    pub snrs: Vec<f64>,
    pub trials: usize,
    /// True headings are drawn uniformly from this open interval, radians.
    pub heading_range: [f64; 2],
}

impl Default for HeadingBenchConfig {
    fn default() -> Self {
        Self {
            heading: HeadingConfig::default(),
            snrs: vec![0.1, 1.0, 10.0, 100.0],
            trials: 200,
            heading_range: [0.1, 1.4],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    pub arms: Vec<ArmSpec>,
    pub final_eval_episodes: usize,
    pub threads: usize,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            arms: vec![
                ArmSpec {
                    name: "aoi-mdp".into(),
                    kind: MdpKind::AoiMdp,
                    delay: None,
                },
                ArmSpec {
                    name: "standard-mdp".into(),
                    kind: MdpKind::Standard,
                    delay: None,
                },
            ],
            final_eval_episodes: 20,
            threads: 1,
        }
    }
}

/// Delay-model sweep with AoI-MDP agents and mean-matched parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    pub models: Vec<DelayModelKind>,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            models: vec![
                DelayModelKind::Sdm,
                DelayModelKind::Poisson,
                DelayModelKind::Exponential,
                DelayModelKind::Geometric,
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    /// Seed of single-run experiments.
    pub seed: u64,
    /// Matched seeds of `compare` and `ablate-delay`.
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    /// Train and evaluate on the standard MDP view (`train` only).
    pub mdp: MdpKind,
    /// Record a per-epoch trace of one greedy episode (`train` only).
    pub trace: bool,
    pub world: WorldConfig,
    pub discretization: DiscretizationConfig,
    pub train: TrainConfig,
    pub aoi_check: AoiCheckConfig,
    pub delay_bench: DelayBenchConfig,
    pub heading_bench: HeadingBenchConfig,
    pub compare: CompareConfig,
    pub ablation: AblationConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentKind::default(),
            seed: 1,
            seeds: (1..=5).collect(),
            out_dir: PathBuf::from("runs/latest"),
            mdp: MdpKind::AoiMdp,
            trace: true,
            world: WorldConfig::default(),
            discretization: DiscretizationConfig::default(),
            train: TrainConfig::default(),
            aoi_check: AoiCheckConfig::default(),
            delay_bench: DelayBenchConfig::default(),
            heading_bench: HeadingBenchConfig::default(),
            compare: CompareConfig::default(),
            ablation: AblationConfig::default(),
        }
    }
}

fn positive(field: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("must be positive, got {v}")))
    }
}

impl ExperimentConfig {
    /// Checks every invariant; the error names the offending field.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.world.validate().map_err(|e| match e {
            EnvError::InvalidConfig { field, reason } => invalid(format!("world.{field}"), reason),
            other => invalid("world", other.to_string()),
        })?;
        let rl = |section: &str, e: RlError| match e {
            RlError::InvalidConfig(reason) => invalid(section, reason),
            other => invalid(section, other.to_string()),
        };
        self.discretization.validate().map_err(|e| rl("discretization", e))?;
        self.train.validate().map_err(|e| rl("train", e))?;

        let c = &self.aoi_check;
        if c.timelines == 0 || c.max_updates == 0 {
            return Err(invalid("aoi_check", "needs at least one timeline with one update"));
        }
        positive("aoi_check.dt_ratio", c.dt_ratio)?;
        positive("aoi_check.tolerance", c.tolerance)?;

        let d = &self.delay_bench;
        if d.replica.length() == 0 || d.replica.length() > d.record_length {
            return Err(invalid(
                "delay_bench.record_length",
                format!("must be at least the replica length {}", d.replica.length()),
            ));
        }
        for &snr in &d.snrs {
            positive("delay_bench.snrs", snr)?;
        }
        let h = &self.heading_bench;
        h.heading
            .validate()
            .map_err(|e| invalid("heading_bench.heading", e.to_string()))?;
        for &snr in &h.snrs {
            positive("heading_bench.snrs", snr)?;
        }
        let [lo, hi] = h.heading_range;
        if !(lo > 0.0 && lo < hi && hi < std::f64::consts::FRAC_PI_2) {
            return Err(invalid("heading_bench.heading_range", "must satisfy 0 < lo < hi < pi/2"));
        }

        if self.seeds.is_empty() {
            return Err(invalid("seeds", "must list at least one seed"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(invalid("seeds", "must not repeat"));
        }
        let arms = &self.compare.arms;
        if arms.is_empty() {
            return Err(invalid("compare.arms", "must list at least one arm"));
        }
        for (i, arm) in arms.iter().enumerate() {
            if arms[..i].iter().any(|a| a.name == arm.name) {
                return Err(invalid("compare.arms", format!("duplicate arm name `{}`", arm.name)));
            }
            if let Some(model) = &arm.delay {
                model
                    .validate()
                    .map_err(|e| invalid(format!("compare.arms[{i}].delay"), e.to_string()))?;
            }
        }
        if self.compare.final_eval_episodes == 0 {
            return Err(invalid("compare.final_eval_episodes", "must be at least 1"));
        }
        if self.ablation.models.is_empty() {
            return Err(invalid("ablation.models", "must list at least one delay model"));
        }
        if self.out_dir.as_os_str().is_empty() {
            return Err(invalid("out_dir", "must not be empty"));
        }
        Ok(())
    }

    /// Parses a JSON document; blank text yields the defaults.
    pub fn from_json(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        let text = if text.trim().is_empty() { "{}" } else { text };
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            let inner = e.into_inner();
            ConfigError::Parse {
                path: origin.to_path_buf(),
                field,
                line: inner.line(),
                column: inner.column(),
                message: inner.to_string(),
            }
        })?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Delay-ablation arms: one AoI-MDP agent per model, mean-matched to the
    /// SDM link at the median reference distance.
    pub fn ablation_arms(&self) -> Result<Vec<ArmSpec>, ConfigError> {
        self.ablation
            .models
            .iter()
            .map(|&kind| {
                let model = self
                    .world
                    .calibrated_delay(kind)
                    .map_err(|e| invalid("ablation.models", e.to_string()))?;
                Ok(ArmSpec {
                    name: kind.name().to_string(),
                    kind: MdpKind::AoiMdp,
                    delay: Some(model),
                })
            })
            .collect()
    }
}

/// Reads, parses and validates a config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let cfg = ExperimentConfig::from_json(&text, path)?;
    cfg.validate()?;
    Ok(cfg)
}
