//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! `ACCEPTANCE_REGENERATE=1` recomputes the delay-robustness golden figure
//! from the independent oracle below and rewrites the golden file.

mod common;

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;
use std::time::{Duration, Instant};

use aoi_mdp::config::{ExperimentConfig, ExperimentKind};
use aoi_mdp::env::{MdpKind, WorldConfig};
use aoi_mdp::estimation::{
    estimate_delay, estimate_heading, synthesize_delayed_observation, synthesize_heading_signal, DelayEstConfig,
    HeadingConfig, ReplicaKind,
};
use aoi_mdp::experiment::{delay_bench_point, run_arms, run_experiment};
use aoi_mdp::rl::micro::MicroConfig;
use aoi_mdp::rl::{ArmSpec, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

const GOLDEN_DELAY: &str = "tests/golden/delay_recovery_snr10.txt";
const ORACLE_TRIALS: usize = 1000;
const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn aoi_closed_form() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        experiment: ExperimentKind::AoiCheck,
        out_dir: dir.path().to_path_buf(),
        ..ExperimentConfig::default()
    };
    let c = &cfg.aoi_check;
    assert_eq!((c.timelines, c.max_updates, c.dt_ratio, c.tolerance), (200, 50, 1e-6, 1e-4));
    let t0 = Instant::now();
    let report = run_experiment(&cfg).unwrap();
    let elapsed = t0.elapsed();
    outcome(
        report.passed && within(elapsed, 10.0),
        format!("{} in {:.2} s (limit 10 s)", report.lines[0], elapsed.as_secs_f64()),
    )
}

fn delay_config() -> DelayEstConfig {
    let replica = ReplicaKind::PseudoRandom { length: 64, seed: 0x5d3 };
    DelayEstConfig::new(replica.generate().unwrap(), 512, 0.0).unwrap()
}

fn delay_exactness() -> Outcome {
    let cfg = delay_config();
    let t0 = Instant::now();
    let misses: Vec<usize> = (0..=cfg.max_delay())
        .filter(|&y| {
            let obs = synthesize_delayed_observation(&cfg, y, 0).unwrap();
            estimate_delay(&cfg, &obs).unwrap().estimate != y
        })
        .collect();
    let elapsed = t0.elapsed();
    outcome(
        misses.is_empty() && cfg.max_delay() == 448 && within(elapsed, 5.0),
        format!(
            "{} of {} noiseless delays missed in {:.2} s (limit 5 s)",
            misses.len(),
            cfg.max_delay() + 1,
            elapsed.as_secs_f64()
        ),
    )
}

/// Exact-recovery rate of replica correlation at per-sample SNR 10, computed
/// without the library: own replica, own Box-Muller noise, own argmax.
fn oracle_recovery_rate(trials: usize, seed: u64) -> f64 {
    let (m, n) = (64usize, 512usize);
    let sigma = (1.0f64 / 10.0).sqrt();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut hits = 0;
    for _ in 0..trials {
        let replica: Vec<f64> = (0..m).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect();
        let y = rng.gen_range(0..=n - m);
        let mut x = vec![0.0; n];
        x[y..y + m].copy_from_slice(&replica);
        for v in x.iter_mut() {
            let (u1, u2): (f64, f64) = (1.0 - rng.gen::<f64>(), rng.gen());
            *v += sigma * (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos();
        }
        let mut best = (0, f64::NEG_INFINITY);
        for lag in 0..=n - m {
            let j: f64 = (0..m).map(|k| x[lag + k] * replica[k]).sum();
            if j > best.1 {
                best = (lag, j);
            }
        }
        hits += usize::from(best.0 == y);
    }
    hits as f64 / trials as f64
}

fn delay_robustness(crate_dir: &Path) -> Outcome {
    let golden_path = crate_dir.join(GOLDEN_DELAY);
    if std::env::var_os("ACCEPTANCE_REGENERATE").is_some() {
        let rate = oracle_recovery_rate(ORACLE_TRIALS, 20_240_610);
        std::fs::write(&golden_path, format!("{rate:.4}\n")).unwrap();
    }
    let golden: f64 = std::fs::read_to_string(&golden_path).unwrap().trim().parse().unwrap();
    let base = delay_config();
    // per-sample SNR 10 is sigma^2 = energy / (10 M)
    let variance = base.known_sequence().energy() / (10.0 * base.replica_length() as f64);
    assert!((base.variance_for_snr(10.0) - variance).abs() < 1e-15);
    let row = delay_bench_point(&base, 10.0, 1000, 7).unwrap();
    outcome(
        row.exact_rate >= golden - 0.02,
        format!("exact-recovery rate {:.3} vs golden {golden:.3} - 0.02", row.exact_rate),
    )
}

fn heading_accuracy() -> Outcome {
    let cfg = HeadingConfig::default();
    assert_eq!(cfg.sample_count, 256);
    assert!((cfg.normalized_spacing() - 0.25).abs() < 1e-12);
    assert_eq!(cfg.grid_resolution, 1e-3);
    assert_eq!(cfg.noise_variance, 0.0);
    let t0 = Instant::now();
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let beta = 0.1 + (i as f64 + 0.5) * (1.4 - 0.1) / 20.0;
        let sig = synthesize_heading_signal(&cfg, beta, i).unwrap();
        let est = estimate_heading(&cfg, &sig).unwrap().estimate;
        assert!(est > 0.0 && est < FRAC_PI_2);
        worst = worst.max((est - beta).abs());
    }
    let elapsed = t0.elapsed();
    outcome(
        worst <= 1e-3 && within(elapsed, 5.0),
        format!("max |error| {worst:.2e} rad over 20 headings in {:.2} s (limit 5 s)", elapsed.as_secs_f64()),
    )
}

fn bookkeeping() -> Outcome {
    let base = WorldConfig::default();
    let mut worlds = vec![
        base.clone(),
        WorldConfig { n_auvs: 3, ..base.clone() },
        WorldConfig { n_auvs: 2, n_nodes: 12, arena: [400.0, 400.0], ..base.clone() },
        WorldConfig { n_nodes: 0, ..base.clone() },
    ];
    for kind in aoi_mdp::delay::DelayModelKind::ALL {
        worlds.push(WorldConfig { delay: base.calibrated_delay(kind).unwrap(), n_auvs: 2, ..base.clone() });
    }
    let mut episodes = 0;
    let mut deliveries = 0;
    for (w, world) in worlds.iter().enumerate() {
        for seed in 0..5 {
            match common::check_bookkeeping_episode(world, 100 * w as u64 + seed) {
                Ok(n) => deliveries += n,
                Err(e) => return outcome(false, format!("world {w} seed {seed}: {e}")),
            }
            episodes += 1;
        }
    }
    outcome(
        true,
        format!("{episodes} episodes, {deliveries} deliveries: AoI exact and data conserved"),
    )
}

fn micro_optimality() -> Outcome {
    let run = common::train_micro(&MicroConfig::default(), 5000, 11);
    let gap = (run.greedy - run.optimum).abs() / run.optimum.abs();
    outcome(
        gap <= 0.05 && within(run.elapsed, 60.0),
        format!(
            "greedy {:.3} vs optimum {:.3} (gap {:.2}%) after 5000 episodes in {:.2} s",
            run.greedy,
            run.optimum,
            100.0 * gap,
            run.elapsed.as_secs_f64()
        ),
    )
}

fn desk_config() -> ExperimentConfig {
    let cfg = ExperimentConfig { seeds: SEEDS.to_vec(), ..ExperimentConfig::default() };
    assert_eq!(cfg.world, WorldConfig::default());
    assert_eq!(cfg.train, TrainConfig::default());
    cfg
}

fn aoi_vs_standard() -> Outcome {
    let cfg = desk_config();
    let arms = vec![
        ArmSpec { name: "aoi".into(), kind: MdpKind::AoiMdp, delay: None },
        ArmSpec { name: "standard".into(), kind: MdpKind::Standard, delay: None },
    ];
    let report = run_arms(&cfg, arms).unwrap();
    let mut wins = 0;
    let mut cells = Vec::new();
    for &seed in &SEEDS {
        let a = report.seed_result("aoi", seed).unwrap().evaluation.summary.mean;
        let s = report.seed_result("standard", seed).unwrap().evaluation.summary.mean;
        let win = a.time_avg_aoi < s.time_avg_aoi && a.cumulative_reward >= s.cumulative_reward;
        wins += usize::from(win);
        cells.push(format!(
            "s{seed}: AoI {:.2}/{:.2} R {:.2}/{:.2}{}",
            a.time_avg_aoi,
            s.time_avg_aoi,
            a.cumulative_reward,
            s.cumulative_reward,
            if win { "" } else { " x" }
        ));
    }
    outcome(wins >= 4, format!("{wins}/5 seeds (need 4); aoi/standard {}", cells.join("; ")))
}

fn delay_model_ordering() -> Outcome {
    let cfg = desk_config();
    let arms = cfg.ablation_arms().unwrap();
    let names: Vec<String> = arms.iter().map(|a| a.name.clone()).collect();
    assert_eq!(names, ["sdm", "poisson", "exponential", "geometric"]);
    let report = run_arms(&cfg, arms).unwrap();
    let aoi: Vec<(String, f64)> = report
        .arms
        .iter()
        .map(|a| (a.arm.clone(), a.summary.mean.time_avg_aoi))
        .collect();
    let sdm = aoi[0].1;
    let lowest = aoi[1..].iter().all(|(_, v)| sdm < *v);
    let table = aoi.iter().map(|(n, v)| format!("{n} {v:.2}")).collect::<Vec<_>>().join(", ");
    outcome(lowest, format!("mean AoI over seeds 1-5: {table}"))
}

fn determinism() -> Outcome {
    let root = tempfile::tempdir().unwrap();
    let mut total = 0;
    for kind in [
        ExperimentKind::AoiCheck,
        ExperimentKind::EstimatorBench,
        ExperimentKind::Train,
        ExperimentKind::Compare,
        ExperimentKind::AblateDelay,
    ] {
        let mut cfg = ExperimentConfig {
            experiment: kind,
            seeds: vec![3, 4],
            train: TrainConfig { episodes: 200, eval_interval: 50, eval_episodes: 2, ..TrainConfig::default() },
            ..ExperimentConfig::default()
        };
        cfg.compare.final_eval_episodes = 3;
        cfg.aoi_check.timelines = 20;
        cfg.delay_bench.trials = 50;
        cfg.heading_bench.trials = 20;
        match common::replay_is_identical(&cfg, &root.path().join(kind.name())) {
            Ok(n) => total += n,
            Err(e) => return outcome(false, format!("{}: {e}", kind.name())),
        }
    }
    outcome(true, format!("{total} CSVs over 5 experiments byte-identical on replay"))
}

fn main() {
    let crate_dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("AoI closed form vs numerical integration", Box::new(aoi_closed_form)),
        ("delay estimator noiseless exactness", Box::new(delay_exactness)),
        ("delay estimator robustness at SNR 10", Box::new(move || delay_robustness(crate_dir))),
        ("heading estimator noiseless accuracy", Box::new(heading_accuracy)),
        ("environment AoI and data bookkeeping", Box::new(bookkeeping)),
        ("micro-world Q-learning optimality", Box::new(micro_optimality)),
        ("AoI-MDP vs standard MDP on matched seeds", Box::new(aoi_vs_standard)),
        ("SDM lowest AoI among delay models", Box::new(delay_model_ordering)),
        ("replay from manifest is byte-identical", Box::new(determinism)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(check))
            .unwrap_or_else(|_| outcome(false, "panicked"));
        failed += usize::from(!result.pass);
        println!(
            "criterion {}: {} - {name}: {} [{:.1} s]",
            i + 1,
            if result.pass { "PASS" } else { "FAIL" },
            result.detail,
            t0.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
