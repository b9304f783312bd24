//! CSV outputs and the run manifest.
//!
//! Every CSV has a fixed header given by the field order of its row type.
//! Each output directory carries `manifest.json`: the fully resolved config,
//! its content hash and the SHA-1 of every file written next to it.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha1::{Digest, Sha1};
use thiserror::Error;

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::env::EpisodeStats;
use crate::rl::{CurvePoint, StatsSummary};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("output directory {path} is not writable: {source}")]
    Unwritable {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },
}

/// Hex SHA-1 of `bytes`.
pub fn sha1_hex(bytes: &[u8]) -> String {
    Sha1::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-1 of `bytes` stored as a git blob (`"blob <len>\0"` prefix), so it
/// matches `git hash-object` on the same content.
pub fn git_blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha1::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of the configuration with `out_dir` cleared: two runs that differ
/// only in where they write share a hash.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let mut c = cfg.clone();
    c.out_dir = PathBuf::new();
    git_blob_hash(serde_json::to_string(&c).expect("config serializes").as_bytes())
}

pub fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>, OutputError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    w.into_inner().map_err(|e| OutputError::Io {
        path: PathBuf::from("<memory>"),
        source: e.into_error(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputFile {
    pub file: String,
    pub rows: usize,
    pub sha1: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub experiment: ExperimentKind,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub outputs: Vec<OutputFile>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self, OutputError> {
        let text = fs::read_to_string(path).map_err(|source| OutputError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| OutputError::Manifest {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

/// Collects the files of one run and writes the manifest last.
#[derive(Debug)]
pub struct RunWriter {
    dir: PathBuf,
    outputs: Vec<OutputFile>,
}

impl RunWriter {
    pub fn create(dir: &Path) -> Result<Self, OutputError> {
        fs::create_dir_all(dir).map_err(|source| OutputError::Unwritable {
            path: dir.to_path_buf(),
            source,
        })?;
        let probe = dir.join(".write-probe");
        fs::write(&probe, b"").map_err(|source| OutputError::Unwritable {
            path: dir.to_path_buf(),
            source,
        })?;
        let _ = fs::remove_file(&probe);
        Ok(Self {
            dir: dir.to_path_buf(),
            outputs: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write_csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<(), OutputError> {
        let bytes = csv_bytes(rows)?;
        let path = self.dir.join(name);
        fs::write(&path, &bytes).map_err(|source| OutputError::Io { path, source })?;
        self.outputs.push(OutputFile {
            file: name.to_string(),
            rows: rows.len(),
            sha1: sha1_hex(&bytes),
        });
        Ok(())
    }

    pub fn outputs(&self) -> &[OutputFile] {
        &self.outputs
    }

    pub fn finish(self, cfg: &ExperimentConfig) -> Result<Manifest, OutputError> {
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            experiment: cfg.experiment,
            config_hash: config_hash(cfg),
            config: cfg.clone(),
            outputs: self.outputs,
        };
        let path = self.dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        fs::write(&path, text).map_err(|source| OutputError::Io { path, source })?;
        Ok(manifest)
    }
}

/// `aoi_check.csv`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AoiCheckRow {
    pub timeline: usize,
    pub n_updates: usize,
    pub horizon: f64,
    pub closed_form: f64,
    pub integrated: f64,
    pub rel_gap: f64,
}

/// `estimator_delay.csv`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayBenchRow {
    pub snr: f64,
    pub noise_variance: f64,
    pub trials: usize,
    pub exact: usize,
    pub exact_rate: f64,
    pub mean_abs_error: f64,
}

/// `estimator_heading.csv`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadingBenchRow {
    pub snr: f64,
    pub noise_variance: f64,
    pub trials: usize,
    pub rmse: f64,
    pub max_abs_error: f64,
}

/// `curves.csv`: greedy evaluations during training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub arm: String,
    pub seed: u64,
    pub episode: usize,
    pub epsilon: f64,
    pub mean_return: f64,
    pub aoi_mean: f64,
    pub aoi_std: f64,
    pub ec_mean: f64,
    pub ec_std: f64,
    pub sir_mean: f64,
    pub sir_std: f64,
    pub reward_mean: f64,
    pub reward_std: f64,
}

impl CurveRow {
    pub fn new(arm: &str, seed: u64, p: &CurvePoint) -> Self {
        let (m, s) = (p.summary.mean, p.summary.std);
        Self {
            arm: arm.to_string(),
            seed,
            episode: p.episode,
            epsilon: p.epsilon,
            mean_return: p.mean_return,
            aoi_mean: m.time_avg_aoi,
            aoi_std: s.time_avg_aoi,
            ec_mean: m.energy_consumed,
            ec_std: s.energy_consumed,
            sir_mean: m.sum_info_rate,
            sir_std: s.sum_info_rate,
            reward_mean: m.cumulative_reward,
            reward_std: s.cumulative_reward,
        }
    }
}

/// `episodes.csv`: one row per final greedy evaluation episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub arm: String,
    pub seed: u64,
    pub episode: usize,
    pub time_avg_aoi: f64,
    pub energy_consumed: f64,
    pub sum_info_rate: f64,
    pub total_bits: u64,
    pub cumulative_reward: f64,
    pub agent_return: f64,
}

impl EpisodeRow {
    pub fn new(arm: &str, seed: u64, episode: usize, s: &EpisodeStats, agent_return: f64) -> Self {
        Self {
            arm: arm.to_string(),
            seed,
            episode,
            time_avg_aoi: s.time_avg_aoi,
            energy_consumed: s.energy_consumed,
            sum_info_rate: s.sum_info_rate,
            total_bits: s.total_bits,
            cumulative_reward: s.cumulative_reward,
            agent_return,
        }
    }
}

/// `per_seed.csv` (statistics over evaluation episodes) and `summary.csv`
/// (statistics over the per-seed means). `sir` is bits per step;
/// `bits` is bits per episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub arm: String,
    pub mdp: String,
    pub seed: String,
    pub n: usize,
    pub aoi_mean: f64,
    pub aoi_std: f64,
    pub ec_mean: f64,
    pub ec_std: f64,
    pub sir_mean: f64,
    pub sir_std: f64,
    pub bits_mean: u64,
    pub bits_std: u64,
    pub reward_mean: f64,
    pub reward_std: f64,
}

impl SummaryRow {
    pub fn new(arm: &str, mdp: &str, seed: String, s: &StatsSummary) -> Self {
        Self {
            arm: arm.to_string(),
            mdp: mdp.to_string(),
            seed,
            n: s.episodes,
            aoi_mean: s.mean.time_avg_aoi,
            aoi_std: s.std.time_avg_aoi,
            ec_mean: s.mean.energy_consumed,
            ec_std: s.std.energy_consumed,
            sir_mean: s.mean.sum_info_rate,
            sir_std: s.std.sum_info_rate,
            bits_mean: s.mean.total_bits,
            bits_std: s.std.total_bits,
            reward_mean: s.mean.cumulative_reward,
            reward_std: s.std.cumulative_reward,
        }
    }
}

/// `deltas.csv`: arm minus baseline, per seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub seed: u64,
    pub arm: String,
    pub baseline: String,
    pub d_aoi: f64,
    pub d_ec: f64,
    pub d_sir: f64,
    pub d_bits: i64,
    pub d_reward: f64,
}

pub const AOI_CHECK_HEADER: &str = "timeline,n_updates,horizon,closed_form,integrated,rel_gap";
pub const DELAY_BENCH_HEADER: &str = "snr,noise_variance,trials,exact,exact_rate,mean_abs_error";
pub const HEADING_BENCH_HEADER: &str = "snr,noise_variance,trials,rmse,max_abs_error";
pub const CURVE_HEADER: &str =
    "arm,seed,episode,epsilon,mean_return,aoi_mean,aoi_std,ec_mean,ec_std,sir_mean,sir_std,reward_mean,reward_std";
pub const EPISODE_HEADER: &str =
    "arm,seed,episode,time_avg_aoi,energy_consumed,sum_info_rate,total_bits,cumulative_reward,agent_return";
pub const SUMMARY_HEADER: &str =
    "arm,mdp,seed,n,aoi_mean,aoi_std,ec_mean,ec_std,sir_mean,sir_std,bits_mean,bits_std,reward_mean,reward_std";
pub const DELTA_HEADER: &str = "seed,arm,baseline,d_aoi,d_ec,d_sir,d_bits,d_reward";
pub const TRACE_HEADER: &str =
    "step,auv,x,y,heading,delay,wait,rate_bits,energy,aoi_increment,task_reward,reward,truncated";
