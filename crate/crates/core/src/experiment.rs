//! Runs one configured experiment and writes its CSVs and manifest.

use std::path::{Path, PathBuf};

use log::info;
use rand::Rng;
use thiserror::Error;

use crate::aoi::{AoiError, UpdateTimeline};
use crate::config::{ConfigError, ExperimentConfig, ExperimentKind};
use crate::env::{EnvError, EpisodeSeeds};
use crate::estimation::{
    estimate_delay, estimate_heading, synthesize_delayed_observation, synthesize_heading_signal, DelayEstConfig,
    EstimationError, HeadingConfig,
};
use crate::output::{
    AoiCheckRow, CurveRow, DelayBenchRow, DeltaRow, EpisodeRow, HeadingBenchRow, Manifest, OutputError, RunWriter,
    SummaryRow, MANIFEST_FILE,
};
use crate::rl::{
    final_eval_seed, run_comparison, run_episode, train_and_evaluate, ArmSpec, ComparisonConfig, ComparisonReport,
    RlError,
};
use crate::rng::{mix_seed, seeded, trial_seed};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Output(#[from] OutputError),
    #[error(transparent)]
    Rl(#[from] RlError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error(transparent)]
    Aoi(#[from] AoiError),
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub out_dir: PathBuf,
    pub manifest: Manifest,
    /// Human-readable result lines.
    pub lines: Vec<String>,
    /// False when a check experiment missed its tolerance.
    pub passed: bool,
}

/// Validates `cfg`, runs it and writes outputs into `cfg.out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport, ExperimentError> {
    cfg.validate()?;
    let mut out = RunWriter::create(&cfg.out_dir)?;
    info!("running {} into {}", cfg.experiment, cfg.out_dir.display());
    let (lines, passed) = match cfg.experiment {
        ExperimentKind::AoiCheck => aoi_check(cfg, &mut out)?,
        ExperimentKind::EstimatorBench => estimator_bench(cfg, &mut out)?,
        ExperimentKind::Train => train_single(cfg, &mut out)?,
        ExperimentKind::Compare => {
            let arms = cfg.compare.arms.clone();
            comparison(cfg, arms, &mut out)?
        }
        ExperimentKind::AblateDelay => {
            let arms = cfg.ablation_arms()?;
            comparison(cfg, arms, &mut out)?
        }
    };
    let manifest = out.finish(cfg)?;
    Ok(RunReport {
        out_dir: cfg.out_dir.clone(),
        manifest,
        lines,
        passed,
    })
}

/// Re-runs the experiment recorded in a manifest (a file or the directory
/// holding it), optionally into a different directory.
pub fn replay(manifest: &Path, out_dir: Option<&Path>) -> Result<RunReport, ExperimentError> {
    let path = if manifest.is_dir() {
        manifest.join(MANIFEST_FILE)
    } else {
        manifest.to_path_buf()
    };
    let mut cfg = Manifest::read(&path)?.config;
    if let Some(dir) = out_dir {
        cfg.out_dir = dir.to_path_buf();
    }
    run_experiment(&cfg)
}

/// A random timeline: up to `max_updates` updates with delays and waits
/// uniform on `(0, 10]` (the first wait is zero) and an initial age uniform
/// on `[0, 5)`.
pub fn random_timeline(seed: u64, max_updates: usize) -> Result<UpdateTimeline, AoiError> {
    let mut rng = seeded(seed);
    let n = rng.gen_range(1..=max_updates);
    let mut t = UpdateTimeline::new(rng.gen_range(0.0..5.0))?;
    for i in 0..n {
        let delay = 10.0 - rng.gen_range(0.0..10.0);
        let wait = if i == 0 { 0.0 } else { 10.0 - rng.gen_range(0.0..10.0) };
        t.append_update(delay, wait)?;
    }
    Ok(t)
}

fn aoi_check(cfg: &ExperimentConfig, out: &mut RunWriter) -> Result<(Vec<String>, bool), ExperimentError> {
    let c = &cfg.aoi_check;
    let mut rows = Vec::with_capacity(c.timelines);
    for i in 0..c.timelines {
        let t = random_timeline(trial_seed(cfg.seed, i as u64), c.max_updates)?;
        let closed = t.time_averaged_aoi_with(c.formula)?;
        let integrated = t.integrate_sawtooth(closed.horizon * c.dt_ratio)?;
        rows.push(AoiCheckRow {
            timeline: i,
            n_updates: t.len(),
            horizon: closed.horizon,
            closed_form: closed.time_avg_aoi,
            integrated,
            rel_gap: (closed.time_avg_aoi - integrated).abs() / integrated.abs(),
        });
    }
    out.write_csv("aoi_check.csv", &rows)?;
    let max_gap = rows.iter().map(|r| r.rel_gap).fold(0.0, f64::max);
    let passed = max_gap <= c.tolerance;
    Ok((
        vec![format!(
            "max relative gap {max_gap:.3e} over {} timelines (tolerance {:.1e}): {}",
            rows.len(),
            c.tolerance,
            if passed { "ok" } else { "FAILED" }
        )],
        passed,
    ))
}

/// Exact-recovery statistics of the delay estimator at one SNR.
pub fn delay_bench_point(
    base: &DelayEstConfig,
    snr: f64,
    trials: usize,
    seed: u64,
) -> Result<DelayBenchRow, EstimationError> {
    let noise_variance = base.variance_for_snr(snr);
    let cfg = base.with_noise_variance(noise_variance)?;
    let (mut exact, mut abs_err) = (0, 0.0);
    for k in 0..trials {
        let s = trial_seed(seed, k as u64);
        let truth = seeded(s).gen_range(0..=cfg.max_delay());
        let obs = synthesize_delayed_observation(&cfg, truth, mix_seed(s, 1))?;
        let est = estimate_delay(&cfg, &obs)?.estimate;
        exact += usize::from(est == truth);
        abs_err += est.abs_diff(truth) as f64;
    }
    Ok(DelayBenchRow {
        snr,
        noise_variance,
        trials,
        exact,
        exact_rate: exact as f64 / trials.max(1) as f64,
        mean_abs_error: abs_err / trials.max(1) as f64,
    })
}

/// Heading error statistics at one SNR.
pub fn heading_bench_point(
    base: &HeadingConfig,
    snr: f64,
    trials: usize,
    range: [f64; 2],
    seed: u64,
) -> Result<HeadingBenchRow, EstimationError> {
    let noise_variance = base.amplitude * base.amplitude / (2.0 * snr);
    let cfg = HeadingConfig {
        noise_variance,
        ..*base
    };
    let (mut sq, mut max_abs) = (0.0, 0.0f64);
    for k in 0..trials {
        let s = trial_seed(seed, k as u64);
        let truth = seeded(s).gen_range(range[0]..range[1]);
        let signal = synthesize_heading_signal(&cfg, truth, mix_seed(s, 1))?;
        let err = estimate_heading(&cfg, &signal)?.estimate - truth;
        sq += err * err;
        max_abs = max_abs.max(err.abs());
    }
    Ok(HeadingBenchRow {
        snr,
        noise_variance,
        trials,
        rmse: (sq / trials.max(1) as f64).sqrt(),
        max_abs_error: max_abs,
    })
}

fn estimator_bench(cfg: &ExperimentConfig, out: &mut RunWriter) -> Result<(Vec<String>, bool), ExperimentError> {
    let d = &cfg.delay_bench;
    let base = DelayEstConfig::new(d.replica.generate()?, d.record_length, 0.0)?;
    let mut lines = Vec::new();
    let delay_rows = d
        .snrs
        .iter()
        .enumerate()
        .map(|(i, &snr)| delay_bench_point(&base, snr, d.trials, mix_seed(cfg.seed, 0xD0 + i as u64)))
        .collect::<Result<Vec<_>, _>>()?;
    for r in &delay_rows {
        lines.push(format!(
            "delay   snr {:>8}: exact {:.3}, mean |error| {:.3} samples",
            r.snr, r.exact_rate, r.mean_abs_error
        ));
    }
    out.write_csv("estimator_delay.csv", &delay_rows)?;

    let h = &cfg.heading_bench;
    let heading_rows = h
        .snrs
        .iter()
        .enumerate()
        .map(|(i, &snr)| heading_bench_point(&h.heading, snr, h.trials, h.heading_range, mix_seed(cfg.seed, 0xE0 + i as u64)))
        .collect::<Result<Vec<_>, _>>()?;
    for r in &heading_rows {
        lines.push(format!(
            "heading snr {:>8}: rmse {:.3e} rad, max |error| {:.3e} rad",
            r.snr, r.rmse, r.max_abs_error
        ));
    }
    out.write_csv("estimator_heading.csv", &heading_rows)?;
    Ok((lines, true))
}

fn train_single(cfg: &ExperimentConfig, out: &mut RunWriter) -> Result<(Vec<String>, bool), ExperimentError> {
    let arm = ArmSpec {
        name: cfg.mdp.name().to_string(),
        kind: cfg.mdp,
        delay: None,
    };
    let mut trained = train_and_evaluate(
        &cfg.world,
        &cfg.discretization,
        &cfg.train,
        &arm,
        cfg.seed,
        cfg.compare.final_eval_episodes,
    )?;
    let r = &trained.result;
    let curve: Vec<CurveRow> = r.curve.iter().map(|p| CurveRow::new(&r.arm, r.seed, p)).collect();
    out.write_csv("curves.csv", &curve)?;
    out.write_csv("episodes.csv", &episode_rows(std::slice::from_ref(r)))?;
    let summary = vec![SummaryRow::new(&r.arm, cfg.mdp.name(), r.seed.to_string(), &r.evaluation.summary)];
    out.write_csv("summary.csv", &summary)?;
    if cfg.trace {
        let dynamics = final_eval_seed(cfg.seed);
        let seeds = EpisodeSeeds {
            layout: trained.layout_seed.unwrap_or(dynamics),
            dynamics,
        };
        trained.view.env_mut().set_tracing(true);
        let mut rng = seeded(dynamics);
        run_episode(&mut trained.view, &mut trained.policy, seeds, false, false, &mut rng)?;
        out.write_csv("trace.csv", trained.view.env().trace())?;
    }
    let m = r.evaluation.summary.mean;
    Ok((
        vec![format!(
            "{} seed {}: AoI {:.3}, EC {:.1} J, SIR {:.2} bits/step, reward {:.3} (checkpoint at episode {})",
            r.arm, r.seed, m.time_avg_aoi, m.energy_consumed, m.sum_info_rate, m.cumulative_reward, r.selected_episode
        )],
        true,
    ))
}

fn episode_rows(results: &[crate::rl::SeedResult]) -> Vec<EpisodeRow> {
    results
        .iter()
        .flat_map(|r| {
            r.evaluation
                .episodes
                .iter()
                .zip(&r.evaluation.returns)
                .enumerate()
                .map(|(k, (s, ret))| EpisodeRow::new(&r.arm, r.seed, k, s, *ret))
        })
        .collect()
}

/// Runs the arms on the configured seeds.
pub fn run_arms(cfg: &ExperimentConfig, arms: Vec<ArmSpec>) -> Result<ComparisonReport, RlError> {
    run_comparison(&ComparisonConfig {
        world: cfg.world.clone(),
        discretization: cfg.discretization.clone(),
        train: cfg.train.clone(),
        arms,
        seeds: cfg.seeds.clone(),
        final_eval_episodes: cfg.compare.final_eval_episodes,
        threads: cfg.compare.threads,
    })
}

fn comparison(
    cfg: &ExperimentConfig,
    arms: Vec<ArmSpec>,
    out: &mut RunWriter,
) -> Result<(Vec<String>, bool), ExperimentError> {
    let report = run_arms(cfg, arms)?;
    let curves: Vec<CurveRow> = report
        .per_seed
        .iter()
        .flat_map(|r| r.curve.iter().map(|p| CurveRow::new(&r.arm, r.seed, p)))
        .collect();
    out.write_csv("curves.csv", &curves)?;
    out.write_csv("episodes.csv", &episode_rows(&report.per_seed))?;
    let kind_of = |arm: &str| report.arm(arm).map_or("", |a| a.kind.name());
    let per_seed: Vec<SummaryRow> = report
        .per_seed
        .iter()
        .map(|r| SummaryRow::new(&r.arm, kind_of(&r.arm), r.seed.to_string(), &r.evaluation.summary))
        .collect();
    out.write_csv("per_seed.csv", &per_seed)?;
    let summary: Vec<SummaryRow> = report
        .arms
        .iter()
        .map(|a| SummaryRow::new(&a.arm, a.kind.name(), "all".into(), &a.summary))
        .collect();
    out.write_csv("summary.csv", &summary)?;
    let deltas: Vec<DeltaRow> = report
        .deltas
        .iter()
        .map(|d| DeltaRow {
            seed: d.seed,
            arm: d.arm.clone(),
            baseline: d.baseline.clone(),
            d_aoi: d.delta.time_avg_aoi,
            d_ec: d.delta.energy_consumed,
            d_sir: d.delta.sum_info_rate,
            d_bits: d.delta_bits,
            d_reward: d.delta.cumulative_reward,
        })
        .collect();
    out.write_csv("deltas.csv", &deltas)?;
    let lines = summary
        .iter()
        .map(|s| {
            format!(
                "{:<14} AoI {:.2}±{:.2}  EC {:.0}±{:.0}  SIR {:.1}±{:.1}  reward {:.2}±{:.2}",
                s.arm, s.aoi_mean, s.aoi_std, s.ec_mean, s.ec_std, s.sir_mean, s.sir_std, s.reward_mean, s.reward_std
            )
        })
        .collect();
    Ok((lines, true))
}
