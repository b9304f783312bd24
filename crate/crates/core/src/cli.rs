//! Command-line front end.
//!
//! Exit codes: 0 success, 1 runtime failure or failed check, 2 usage or
//! configuration error.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use crate::config::{load_config, ExperimentConfig, ExperimentKind};
use crate::delay::DelayModelKind;
use crate::env::MdpKind;
use crate::experiment::{replay, run_experiment, ExperimentError, RunReport};

pub const LOG_ENV: &str = "AOI_MDP_LOG";

#[derive(Debug, Parser)]
#[command(name = "aoi-mdp", version, about = "Age-of-information MDP laboratory")]
pub struct Cli {
    /// Experiment config (JSON); defaults apply to every missing field.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Base seed. For multi-seed experiments the seed list becomes
    /// N, N+1, ... with its configured length.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form time-averaged AoI against numerical integration.
    AoiCheck {
        /// Number of random timelines.
        #[arg(long)]
        random: Option<usize>,
        /// Integration step as a fraction of the horizon.
        #[arg(long)]
        dt_ratio: Option<f64>,
        #[arg(long)]
        max_updates: Option<usize>,
        #[arg(long)]
        tolerance: Option<f64>,
        /// Check the formula as printed instead of the exact average.
        #[arg(long)]
        paper_literal_formula: bool,
    },
    /// Monte-Carlo accuracy of the delay and heading estimators.
    EstimatorBench {
        #[arg(long)]
        trials: Option<usize>,
        /// Comma-separated per-sample SNRs for both estimators.
        #[arg(long, value_delimiter = ',')]
        snr: Option<Vec<f64>>,
    },
    /// Train one agent and evaluate it.
    Train {
        #[command(flatten)]
        training: TrainingArgs,
        /// MDP interface: aoi-mdp or standard-mdp.
        #[arg(long, value_parser = parse_mdp)]
        mdp: Option<MdpKind>,
        /// Delay model, mean-matched to the SDM link.
        #[arg(long, value_parser = parse_model)]
        delay_model: Option<DelayModelKind>,
    },
    /// AoI-MDP against standard-MDP agents on matched seeds.
    Compare {
        #[command(flatten)]
        training: TrainingArgs,
    },
    /// AoI-MDP agents under mean-matched delay models.
    #[command(alias = "table1-ablation")]
    AblateDelay {
        #[command(flatten)]
        training: TrainingArgs,
        /// Comma-separated models: sdm, poisson, exponential, geometric, constant.
        #[arg(long, value_delimiter = ',', value_parser = parse_model)]
        models: Option<Vec<DelayModelKind>>,
    },
    /// Re-run the experiment recorded in a manifest.
    Replay {
        /// manifest.json or the directory holding it.
        manifest: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct TrainingArgs {
    /// Training episodes per seed.
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Number of matched seeds.
    #[arg(long)]
    pub n_seeds: Option<usize>,
    /// Greedy episodes in the final evaluation.
    #[arg(long)]
    pub eval_episodes: Option<usize>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
}

fn parse_model(s: &str) -> Result<DelayModelKind, String> {
    s.parse::<DelayModelKind>().map_err(|e| e.to_string())
}

fn parse_mdp(s: &str) -> Result<MdpKind, String> {
    match s {
        "aoi-mdp" | "aoi" => Ok(MdpKind::AoiMdp),
        "standard-mdp" | "standard" => Ok(MdpKind::Standard),
        other => Err(format!("unknown MDP `{other}` (expected aoi-mdp or standard-mdp)")),
    }
}

impl TrainingArgs {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(e) = self.episodes {
            cfg.train.episodes = e;
        }
        if let Some(n) = self.n_seeds {
            let first = cfg.seeds.first().copied().unwrap_or(cfg.seed);
            cfg.seeds = (first..first + n as u64).collect();
        }
        if let Some(n) = self.eval_episodes {
            cfg.compare.final_eval_episodes = n;
        }
        if let Some(t) = self.threads {
            cfg.compare.threads = t;
        }
    }
}

/// Loads the config (or defaults) and applies the command-line overrides.
pub fn resolve_config(cli: &Cli) -> Result<ExperimentConfig, ExperimentError> {
    let mut cfg = match &cli.config {
        Some(path) => load_config(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        let n = cfg.seeds.len() as u64;
        cfg.seeds = (seed..seed + n).collect();
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    match &cli.command {
        Command::AoiCheck {
            random,
            dt_ratio,
            max_updates,
            tolerance,
            paper_literal_formula,
        } => {
            cfg.experiment = ExperimentKind::AoiCheck;
            let c = &mut cfg.aoi_check;
            if let Some(v) = random {
                c.timelines = *v;
            }
            if let Some(v) = dt_ratio {
                c.dt_ratio = *v;
            }
            if let Some(v) = max_updates {
                c.max_updates = *v;
            }
            if let Some(v) = tolerance {
                c.tolerance = *v;
            }
            if *paper_literal_formula {
                c.formula = crate::aoi::AoiFormula::PaperLiteral;
            }
        }
        Command::EstimatorBench { trials, snr } => {
            cfg.experiment = ExperimentKind::EstimatorBench;
            if let Some(t) = trials {
                cfg.delay_bench.trials = *t;
                cfg.heading_bench.trials = *t;
            }
            if let Some(s) = snr {
                cfg.delay_bench.snrs = s.clone();
                cfg.heading_bench.snrs = s.clone();
            }
        }
        Command::Train {
            training,
            mdp,
            delay_model,
        } => {
            cfg.experiment = ExperimentKind::Train;
            training.apply(&mut cfg);
            if let Some(m) = mdp {
                cfg.mdp = *m;
            }
            if let Some(kind) = delay_model {
                cfg.world.delay = cfg
                    .world
                    .calibrated_delay(*kind)
                    .map_err(|e| crate::config::ConfigError::Invalid {
                        field: "world.delay".into(),
                        reason: e.to_string(),
                    })?;
            }
        }
        Command::Compare { training } => {
            cfg.experiment = ExperimentKind::Compare;
            training.apply(&mut cfg);
        }
        Command::AblateDelay { training, models } => {
            cfg.experiment = ExperimentKind::AblateDelay;
            training.apply(&mut cfg);
            if let Some(m) = models {
                cfg.ablation.models = m.clone();
            }
        }
        Command::Replay { .. } => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn exit_code(e: &ExperimentError) -> i32 {
    match e {
        ExperimentError::Config(_) => 2,
        _ => 1,
    }
}

fn print_report(report: &RunReport) {
    for line in &report.lines {
        println!("{line}");
    }
    println!("outputs written to {}", report.out_dir.display());
}

pub fn init_logging() {
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).try_init();
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match &cli.command {
        Command::Replay { manifest } => replay(manifest, cli.out.as_deref()),
        _ => resolve_config(&cli).and_then(|cfg| run_experiment(&cfg)),
    };
    match result {
        Ok(report) => {
            print_report(&report);
            if report.passed {
                0
            } else {
                1
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolve(args: &[&str]) -> ExperimentConfig {
        let cli = Cli::try_parse_from(std::iter::once("aoi-mdp").chain(args.iter().copied())).unwrap();
        resolve_config(&cli).unwrap()
    }

    #[test]
    fn global_flags_after_subcommand() {
        let cfg = resolve(&["aoi-check", "--random", "7", "--dt-ratio", "1e-3", "--seed", "4", "--out", "x"]);
        assert_eq!(cfg.experiment, ExperimentKind::AoiCheck);
        assert_eq!(cfg.aoi_check.timelines, 7);
        assert_eq!(cfg.aoi_check.dt_ratio, 1e-3);
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.seeds, vec![4, 5, 6, 7, 8]);
        assert_eq!(cfg.out_dir, PathBuf::from("x"));
    }

    #[test]
    fn ablation_models_parse() {
        let cfg = resolve(&["ablate-delay", "--models", "sdm,poisson,exponential,geometric", "--n-seeds", "2"]);
        assert_eq!(cfg.ablation.models.len(), 4);
        assert_eq!(cfg.seeds, vec![1, 2]);
        assert!(Cli::try_parse_from(["aoi-mdp", "ablate-delay", "--models", "gamma"]).is_err());
        assert_eq!(resolve(&["table1-ablation"]).experiment, ExperimentKind::AblateDelay);
    }

    #[test]
    fn missing_config_exits_2() {
        assert_eq!(run(["aoi-mdp", "--config", "/nonexistent/cfg.json", "aoi-check"]), 2);
    }

    #[test]
    fn unknown_subcommand_exits_2() {
        assert_eq!(run(["aoi-mdp", "table2"]), 2);
    }
}
