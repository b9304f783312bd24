#![allow(dead_code)]

use std::collections::HashMap;

use aoi_mdp::env::EpisodeSeeds;
use aoi_mdp::rl::micro::{micro_spaces, MicroConfig, MicroWorld};
use aoi_mdp::rl::{AgentEnv, ActionGrid};

/// Best undiscounted return from the start state, by depth-first enumeration
/// of every action sequence. States reached twice at the same epoch share
/// their subtree value.
pub fn micro_optimum(cfg: &MicroConfig) -> f64 {
    let (_, grid) = micro_spaces(cfg);
    let mut world = MicroWorld::new(cfg.clone());
    world.reset(EpisodeSeeds::from(0)).unwrap();
    let mut memo = HashMap::new();
    best_from(&world, 0, &grid, &mut memo)
}

fn best_from(world: &MicroWorld, depth: u32, grid: &ActionGrid, memo: &mut HashMap<(Vec<u64>, u32), f64>) -> f64 {
    if world.is_done() {
        return 0.0;
    }
    let key = (world.observation().iter().map(|v| v.to_bits()).collect::<Vec<_>>(), depth);
    if let Some(&v) = memo.get(&key) {
        return v;
    }
    let mut best = f64::NEG_INFINITY;
    for a in 0..grid.len() {
        let mut next = world.clone();
        let step = next.step(&[(0, grid.action(a))]).unwrap();
        let r = step.transitions[0].reward + best_from(&next, depth + 1, grid, memo);
        best = best.max(r);
    }
    memo.insert(key, best);
    best
}

/// Q-learning run used for the micro-world optimality check.
pub struct MicroRun {
    pub optimum: f64,
    pub greedy: f64,
    pub elapsed: std::time::Duration,
}

pub fn train_micro(cfg: &MicroConfig, episodes: usize, seed: u64) -> MicroRun {
    use aoi_mdp::rl::{evaluate, train, EpsilonSchedule, LearningRate, QPolicy, TrainConfig};
    let t0 = std::time::Instant::now();
    let optimum = micro_optimum(cfg);
    let (disc, grid) = micro_spaces(cfg);
    let train_cfg = TrainConfig {
        episodes,
        eval_interval: 500,
        eval_episodes: 1,
        learning_rate: LearningRate::Constant { alpha: 0.2 },
        gamma: 0.99,
        epsilon: EpsilonSchedule::default(),
        fixed_layout: true,
        keep_best: false,
    };
    let mut policy = QPolicy::new(disc, grid, train_cfg.learning_rate, train_cfg.gamma);
    let mut world = MicroWorld::new(cfg.clone());
    train(&mut world, &mut policy, &train_cfg, seed).unwrap();
    let greedy = evaluate(&mut world, &mut policy, 1, 3, None)
        .unwrap()
        .summary
        .mean
        .cumulative_reward;
    MicroRun {
        optimum,
        greedy,
        elapsed: t0.elapsed(),
    }
}

/// Independent exact area under the age curve of `timeline` up to its last
/// reception: the curve is linear between breakpoints, so one trapezoid per
/// piece is exact.
pub fn sawtooth_area(timeline: &aoi_mdp::aoi::UpdateTimeline) -> f64 {
    let ups = timeline.updates();
    let first = ups[0].transmit_time + ups[0].delay;
    let a0 = timeline.initial_age();
    let mut area = 0.5 * (a0 + a0 + first) * first;
    for w in ups.windows(2) {
        let (prev, next) = (w[0], w[1]);
        let start = prev.transmit_time + prev.delay;
        let end = next.transmit_time + next.delay;
        let age_start = start - prev.transmit_time;
        let age_end = end - prev.transmit_time;
        area += 0.5 * (age_start + age_end) * (end - start);
    }
    area
}

/// Drives `world` with seeded random (partly out-of-bounds) actions for one
/// episode and checks, after every step: node-data conservation, that each
/// delivered observation equals the world as it was `Y` steps earlier, and at
/// the end that the reported time-averaged AoI equals the closed form on the
/// recorded timelines. Returns the number of deliveries checked.
pub fn check_bookkeeping_episode(world: &aoi_mdp::env::WorldConfig, seed: u64) -> Result<usize, String> {
    use aoi_mdp::env::{ActionTuple, UnderwaterEnv, WorldSnapshot};
    use rand::Rng;

    let mut env = UnderwaterEnv::new(world.clone()).map_err(|e| e.to_string())?;
    let mut rng = aoi_mdp::rng::seeded(seed ^ 0xB00C);
    let mut history: HashMap<u64, WorldSnapshot> = HashMap::new();
    let record = |env: &UnderwaterEnv, history: &mut HashMap<u64, WorldSnapshot>, from: u64| {
        for t in from..=env.time() {
            if let Some(s) = env.archived_snapshot(t) {
                history.entry(t).or_insert_with(|| s.clone());
            }
        }
    };
    let conserve = |env: &UnderwaterEnv| -> Result<(), String> {
        let held: u64 = env.node_remaining().iter().sum();
        let got: u64 = env.collected_bits().iter().sum();
        if held + got != env.initial_total_bits() {
            return Err(format!("conservation broken at t={}: {held} + {got}", env.time()));
        }
        Ok(())
    };
    let check = |obs: &aoi_mdp::env::Observation, history: &HashMap<u64, WorldSnapshot>| -> Result<(), String> {
        let snap = history
            .get(&obs.snapshot_time)
            .ok_or_else(|| format!("no snapshot for t={}", obs.snapshot_time))?;
        if obs.received_at - obs.snapshot_time != obs.staleness || obs.staleness == 0 {
            return Err(format!("bad staleness {:?}", obs));
        }
        if snap.poses[obs.auv] != obs.pose || snap.node_remaining != obs.node_remaining {
            return Err(format!("observation differs from snapshot at t={}", obs.snapshot_time));
        }
        Ok(())
    };

    let mut ready = env.reset(seed).map_err(|e| e.to_string())?;
    record(&env, &mut history, 0);
    conserve(&env)?;
    let mut checked = 0;
    for o in &ready {
        check(o, &history)?;
        checked += 1;
    }
    let cfg = env.config().clone();
    let mut last = env.time();
    while !env.is_done() {
        let actions: Vec<(usize, ActionTuple)> = env
            .ready()
            .into_iter()
            .map(|i| {
                let a = ActionTuple::new(
                    rng.gen_range(-0.2..1.2) * cfg.max_speed,
                    rng.gen_range(-1.5..1.5) * cfg.max_turn,
                    rng.gen_range(0..=cfg.max_wait + 1),
                );
                (i, a)
            })
            .collect();
        let step = env.step(&actions).map_err(|e| e.to_string())?;
        record(&env, &mut history, last);
        last = env.time();
        conserve(&env)?;
        ready.clear();
        for d in &step.deliveries {
            if !d.truncated {
                if d.observation.received_at != env.time() {
                    return Err("delivery time differs from the clock".into());
                }
                check(&d.observation, &history)?;
                checked += 1;
            }
        }
    }
    let mut sum = 0.0;
    for i in 0..env.n_auvs() {
        sum += env.timeline(i).unwrap().time_averaged_aoi().map_err(|e| e.to_string())?.time_avg_aoi;
    }
    let expected = sum / env.n_auvs() as f64;
    let got = env.episode_stats().time_avg_aoi;
    if got.to_bits() != expected.to_bits() {
        return Err(format!("time-averaged AoI {got} differs from closed form {expected}"));
    }
    Ok(checked)
}

/// Runs `cfg` into `<root>/first`, replays it from the manifest into
/// `<root>/replay`, and compares every output byte for byte. Returns the
/// number of files compared.
pub fn replay_is_identical(cfg: &aoi_mdp::config::ExperimentConfig, root: &std::path::Path) -> Result<usize, String> {
    use aoi_mdp::experiment::{replay, run_experiment};
    let first_dir = root.join("first");
    let again_dir = root.join("replay");
    let cfg = aoi_mdp::config::ExperimentConfig { out_dir: first_dir.clone(), ..cfg.clone() };
    let first = run_experiment(&cfg).map_err(|e| e.to_string())?;
    let again = replay(&first_dir, Some(&again_dir)).map_err(|e| e.to_string())?;
    if first.manifest.config_hash != again.manifest.config_hash {
        return Err("config hash changed on replay".into());
    }
    if first.manifest.outputs.is_empty() {
        return Err("run wrote no outputs".into());
    }
    for f in &first.manifest.outputs {
        let a = std::fs::read(first_dir.join(&f.file)).map_err(|e| e.to_string())?;
        let b = std::fs::read(again_dir.join(&f.file)).map_err(|e| e.to_string())?;
        if a != b {
            return Err(format!("{} differs on replay", f.file));
        }
    }
    if first.manifest.outputs != again.manifest.outputs {
        return Err("output digests differ on replay".into());
    }
    Ok(first.manifest.outputs.len())
}
