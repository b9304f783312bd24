//! Tabular Q-learning over discretized environment views, greedy evaluation,
//! and the matched-seed comparison runner.

use std::f64::consts::TAU;
use std::thread;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::delay::DelayModel;
use crate::env::{
    ActionTuple, AgentTransition, EnvError, EpisodeSeeds, EpisodeStats, MdpKind, MdpView, UnderwaterEnv,
    ViewStep, WorldConfig,
};
use crate::rng::{mix_seed, seeded, SimRng};

pub mod micro;

const LAYOUT_TAG: u64 = 0x1A;
const TRAIN_TAG: u64 = 0x7A1;
const EXPLORE_TAG: u64 = 0xE9;
const EVAL_TAG: u64 = 0xE7A1;
const FINAL_EVAL_TAG: u64 = 0xF1A1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RlError {
    #[error("observation has {actual} features, the policy expects {expected}")]
    SpaceMismatch { expected: usize, actual: usize },
    #[error("the view cannot carry wait actions but the policy emits them")]
    WaitMismatch,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// What the training loop needs from an environment.
pub trait AgentEnv {
    fn observation_len(&self) -> usize;
    fn controls_wait(&self) -> bool;
    /// Starts an episode; returns the agents that are ready to act.
    fn reset(&mut self, seeds: EpisodeSeeds) -> Result<Vec<(usize, Vec<f64>)>, RlError>;
    fn step(&mut self, actions: &[(usize, ActionTuple)]) -> Result<ViewStep, RlError>;
    fn is_done(&self) -> bool;
    fn episode_stats(&self) -> EpisodeStats;
}

impl AgentEnv for MdpView {
    fn observation_len(&self) -> usize {
        MdpView::observation_len(self)
    }

    fn controls_wait(&self) -> bool {
        MdpView::controls_wait(self)
    }

    fn reset(&mut self, seeds: EpisodeSeeds) -> Result<Vec<(usize, Vec<f64>)>, RlError> {
        Ok(MdpView::reset(self, seeds)?)
    }

    fn step(&mut self, actions: &[(usize, ActionTuple)]) -> Result<ViewStep, RlError> {
        Ok(MdpView::step(self, actions)?)
    }

    fn is_done(&self) -> bool {
        self.env().is_done()
    }

    fn episode_stats(&self) -> EpisodeStats {
        self.env().episode_stats()
    }
}

/// Uniform bins over `[lo, hi)` for one observation feature; values outside
/// are clamped into the edge bins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureBins {
    pub feature: usize,
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
    /// Periodic feature: values are wrapped into `[lo, hi)` instead of clamped.
    #[serde(default)]
    pub wrap: bool,
}

impl FeatureBins {
    pub fn new(feature: usize, lo: f64, hi: f64, bins: usize) -> Self {
        Self { feature, lo, hi, bins, wrap: false }
    }

    pub fn bin(&self, value: f64) -> usize {
        if self.bins <= 1 || !value.is_finite() {
            return 0;
        }
        let span = self.hi - self.lo;
        let value = if self.wrap {
            self.lo + (value - self.lo).rem_euclid(span)
        } else {
            value
        };
        let u = (value - self.lo) / span;
        ((u * self.bins as f64).floor().max(0.0) as usize).min(self.bins - 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discretizer {
    pub observation_len: usize,
    pub features: Vec<FeatureBins>,
}

impl Discretizer {
    pub fn n_states(&self) -> usize {
        self.features.iter().map(|f| f.bins.max(1)).product()
    }

    pub fn state(&self, observation: &[f64]) -> Result<usize, RlError> {
        if observation.len() != self.observation_len {
            return Err(RlError::SpaceMismatch {
                expected: self.observation_len,
                actual: observation.len(),
            });
        }
        Ok(self
            .features
            .iter()
            .fold(0, |acc, f| acc * f.bins.max(1) + f.bin(observation[f.feature])))
    }
}

/// Cartesian product of speed, turn and wait levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionGrid {
    pub speeds: Vec<f64>,
    pub turns: Vec<f64>,
    pub waits: Vec<u32>,
}

impl ActionGrid {
    pub fn len(&self) -> usize {
        self.speeds.len() * self.turns.len() * self.waits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn action(&self, index: usize) -> ActionTuple {
        let w = index % self.waits.len();
        let t = (index / self.waits.len()) % self.turns.len();
        let s = index / (self.waits.len() * self.turns.len());
        ActionTuple::new(self.speeds[s], self.turns[t], self.waits[w])
    }

    pub fn index_of(&self, action: &ActionTuple) -> Option<usize> {
        let s = self.speeds.iter().position(|v| v.to_bits() == action.speed.to_bits())?;
        let t = self.turns.iter().position(|v| v.to_bits() == action.turn.to_bits())?;
        let w = self.waits.iter().position(|&v| v == action.wait)?;
        Some((s * self.turns.len() + t) * self.waits.len() + w)
    }
}

/// Discretization levels, relative to the world's bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscretizationConfig {
    pub position_bins: [usize; 2],
    pub heading_bins: usize,
    pub data_bins: usize,
    pub delay_bins: usize,
    /// Delays at or above this many steps share the top bin.
    pub delay_cap: f64,
    /// Fractions of the world's maximum speed.
    pub speed_levels: Vec<f64>,
    /// Fractions of the world's maximum turn.
    pub turn_levels: Vec<f64>,
    pub wait_levels: Vec<u32>,
}

impl Default for DiscretizationConfig {
    fn default() -> Self {
        Self {
            position_bins: [4, 4],
            heading_bins: 4,
            data_bins: 1,
            delay_bins: 4,
            delay_cap: 8.0,
            speed_levels: vec![0.0, 1.0],
            turn_levels: vec![-1.0, 0.0, 1.0],
            wait_levels: vec![0, 1, 2],
        }
    }
}

impl DiscretizationConfig {
    pub fn validate(&self) -> Result<(), RlError> {
        let bad = |m: &str| Err(RlError::InvalidConfig(m.to_string()));
        if self.position_bins.contains(&0) || self.heading_bins == 0 || self.data_bins == 0 || self.delay_bins == 0 {
            return bad("bin counts must be positive");
        }
        if !(self.delay_cap >= 1.0) {
            return bad("delay cap must be at least one step");
        }
        if self.speed_levels.is_empty() || self.turn_levels.is_empty() || self.wait_levels.is_empty() {
            return bad("every action dimension needs at least one level");
        }
        if self.speed_levels.iter().chain(&self.turn_levels).any(|v| !v.is_finite() || v.abs() > 1.0) {
            return bad("speed and turn levels are fractions in [-1, 1]");
        }
        Ok(())
    }

    pub fn discretizer(&self, world: &WorldConfig, kind: MdpKind) -> Discretizer {
        // heading bins are centred on multiples of 2 pi / bins
        let half = TAU / (2.0 * self.heading_bins as f64);
        let mut features = vec![
            FeatureBins::new(0, 0.0, world.arena[0], self.position_bins[0]),
            FeatureBins::new(1, 0.0, world.arena[1], self.position_bins[1]),
            FeatureBins { wrap: true, ..FeatureBins::new(2, -half, TAU - half, self.heading_bins) },
            FeatureBins::new(3, 0.0, 1.0 + 1e-9, self.data_bins),
        ];
        let observation_len = match kind {
            MdpKind::AoiMdp => {
                let width = self.delay_cap / self.delay_bins as f64;
                features.push(FeatureBins::new(4, 1.0, 1.0 + width * self.delay_bins as f64, self.delay_bins));
                5
            }
            MdpKind::Standard => 4,
        };
        Discretizer { observation_len, features }
    }

    pub fn action_grid(&self, world: &WorldConfig, kind: MdpKind) -> ActionGrid {
        ActionGrid {
            speeds: self.speed_levels.iter().map(|f| f * world.max_speed).collect(),
            turns: self.turn_levels.iter().map(|f| f * world.max_turn).collect(),
            waits: match kind {
                MdpKind::AoiMdp => self.wait_levels.clone(),
                MdpKind::Standard => vec![0],
            },
        }
    }
}

/// Step-size rule for Q updates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LearningRate {
    Constant { alpha: f64 },
    /// `alpha = 1 / (1 + visits(s, a))^power`.
    Visits { power: f64 },
}

impl LearningRate {
    fn alpha(&self, visits: u32) -> f64 {
        match *self {
            LearningRate::Constant { alpha } => alpha,
            LearningRate::Visits { power } => (1.0 + visits as f64).powf(-power),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    n_actions: usize,
    values: Vec<f64>,
    visits: Vec<u32>,
}

impl QTable {
    pub fn new(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_actions,
            values: vec![0.0; n_states * n_actions],
            visits: vec![0; n_states * n_actions],
        }
    }

    pub fn n_states(&self) -> usize {
        self.values.len() / self.n_actions
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.values[state * self.n_actions + action]
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.values[state * self.n_actions..(state + 1) * self.n_actions]
    }

    /// Greedy action; the lowest index wins ties.
    pub fn greedy(&self, state: usize) -> usize {
        let row = self.row(state);
        let mut best = 0;
        for (a, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = a;
            }
        }
        best
    }

    pub fn max_value(&self, state: usize) -> f64 {
        self.row(state)[self.greedy(state)]
    }

    /// One Q-learning backup; `next_state = None` marks a terminal transition.
    pub fn update(
        &mut self,
        state: usize,
        action: usize,
        reward: f64,
        next_state: Option<usize>,
        gamma: f64,
        rate: LearningRate,
    ) {
        let target = reward + next_state.map_or(0.0, |s| gamma * self.max_value(s));
        let i = state * self.n_actions + action;
        let alpha = rate.alpha(self.visits[i]);
        self.values[i] += alpha * (target - self.values[i]);
        self.visits[i] = self.visits[i].saturating_add(1);
    }
}

/// One agent transition as seen through an MDP view.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub observation: Vec<f64>,
    pub action: ActionTuple,
    pub reward: f64,
    pub next_observation: Vec<f64>,
    pub terminal: bool,
}

pub trait Policy {
    /// Chooses an action; deterministic when `explore` is false.
    fn act(&self, observation: &[f64], explore: bool, rng: &mut SimRng) -> Result<ActionTuple, RlError>;
    fn update(&mut self, batch: &[Transition]) -> Result<(), RlError>;
    /// Observation length the policy accepts.
    fn observation_len(&self) -> usize;
    fn emits_wait(&self) -> bool;
    /// Called once per training episode with the episode's exploration rate.
    fn begin_episode(&mut self, _epsilon: f64) {}
}

#[derive(Debug, Clone, PartialEq)]
pub struct QPolicy {
    pub discretizer: Discretizer,
    pub actions: ActionGrid,
    pub q: QTable,
    pub learning_rate: LearningRate,
    pub gamma: f64,
    pub epsilon: f64,
}

impl QPolicy {
    pub fn new(discretizer: Discretizer, actions: ActionGrid, learning_rate: LearningRate, gamma: f64) -> Self {
        let q = QTable::new(discretizer.n_states(), actions.len());
        Self {
            discretizer,
            actions,
            q,
            learning_rate,
            gamma,
            epsilon: 0.0,
        }
    }

    pub fn for_view(view: &MdpView, disc: &DiscretizationConfig, train: &TrainConfig) -> Self {
        let world = view.env().config();
        Self::new(
            disc.discretizer(world, view.kind()),
            disc.action_grid(world, view.kind()),
            train.learning_rate,
            train.gamma,
        )
    }
}

impl Policy for QPolicy {
    fn act(&self, observation: &[f64], explore: bool, rng: &mut SimRng) -> Result<ActionTuple, RlError> {
        let state = self.discretizer.state(observation)?;
        let index = if explore && rng.gen::<f64>() < self.epsilon {
            rng.gen_range(0..self.actions.len())
        } else {
            self.q.greedy(state)
        };
        Ok(self.actions.action(index))
    }

    fn update(&mut self, batch: &[Transition]) -> Result<(), RlError> {
        for t in batch {
            let s = self.discretizer.state(&t.observation)?;
            let a = self
                .actions
                .index_of(&t.action)
                .ok_or_else(|| RlError::InvalidConfig(format!("action {:?} is not on the grid", t.action)))?;
            let next = if t.terminal {
                None
            } else {
                Some(self.discretizer.state(&t.next_observation)?)
            };
            self.q.update(s, a, t.reward, next, self.gamma, self.learning_rate);
        }
        Ok(())
    }

    fn observation_len(&self) -> usize {
        self.discretizer.observation_len
    }

    fn emits_wait(&self) -> bool {
        self.actions.waits.iter().any(|&w| w != 0)
    }

    fn begin_episode(&mut self, epsilon: f64) {
        self.epsilon = epsilon;
    }
}

/// Uniform over an action grid; ignores observations.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomPolicy {
    pub actions: ActionGrid,
    pub observation_len: usize,
}

impl Policy for RandomPolicy {
    fn act(&self, observation: &[f64], _explore: bool, rng: &mut SimRng) -> Result<ActionTuple, RlError> {
        if observation.len() != self.observation_len {
            return Err(RlError::SpaceMismatch {
                expected: self.observation_len,
                actual: observation.len(),
            });
        }
        Ok(self.actions.action(rng.gen_range(0..self.actions.len())))
    }

    fn update(&mut self, _batch: &[Transition]) -> Result<(), RlError> {
        Ok(())
    }

    fn observation_len(&self) -> usize {
        self.observation_len
    }

    fn emits_wait(&self) -> bool {
        self.actions.waits.iter().any(|&w| w != 0)
    }
}

/// Linear decay from `start` to `end` over the first `decay_fraction` of
/// the episodes, then flat.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_fraction: f64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self {
            start: 1.0,
            end: 0.05,
            decay_fraction: 0.6,
        }
    }
}

impl EpsilonSchedule {
    pub fn value(&self, episode: usize, episodes: usize) -> f64 {
        let span = (self.decay_fraction * episodes as f64).max(1.0);
        let progress = (episode as f64 / span).min(1.0);
        self.start + (self.end - self.start) * progress
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub episodes: usize,
    /// Greedy evaluation every this many episodes (0 disables the curve).
    pub eval_interval: usize,
    pub eval_episodes: usize,
    pub learning_rate: LearningRate,
    pub gamma: f64,
    pub epsilon: EpsilonSchedule,
    /// Keep node and AUV placement fixed across the episodes of a run.
    pub fixed_layout: bool,
    /// Return the best evaluated checkpoint instead of the last policy.
    pub keep_best: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 10_000,
            eval_interval: 250,
            eval_episodes: 10,
            learning_rate: LearningRate::Constant { alpha: 0.1 },
            gamma: 0.95,
            epsilon: EpsilonSchedule::default(),
            fixed_layout: true,
            keep_best: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), RlError> {
        let bad = |m: String| Err(RlError::InvalidConfig(m));
        if self.episodes == 0 {
            return bad("episodes must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [0, 1), got {}", self.gamma));
        }
        let e = self.epsilon;
        if !((0.0..=1.0).contains(&e.start) && (0.0..=1.0).contains(&e.end)) {
            return bad("epsilon values must lie in [0, 1]".into());
        }
        if !(e.decay_fraction > 0.0 && e.decay_fraction <= 1.0) {
            return bad("epsilon decay fraction must lie in (0, 1]".into());
        }
        match self.learning_rate {
            LearningRate::Constant { alpha } if !(alpha > 0.0 && alpha <= 1.0) => {
                bad(format!("alpha must lie in (0, 1], got {alpha}"))
            }
            LearningRate::Visits { power } if !(power > 0.5 && power <= 1.0) => {
                bad(format!("visit-count power must lie in (0.5, 1], got {power}"))
            }
            _ => Ok(()),
        }
    }

    pub fn layout_seed(&self, seed: u64, episode: u64) -> u64 {
        if self.fixed_layout {
            mix_seed(seed, LAYOUT_TAG)
        } else {
            mix_seed(mix_seed(seed, LAYOUT_TAG), episode)
        }
    }
}

/// Mean and sample standard deviation of the four episode metrics.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StatsSummary {
    pub episodes: usize,
    pub mean: EpisodeStats,
    pub std: EpisodeStats,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

impl StatsSummary {
    pub fn from_episodes(stats: &[EpisodeStats]) -> Self {
        let col = |f: fn(&EpisodeStats) -> f64| mean_std(&stats.iter().map(f).collect::<Vec<_>>());
        let aoi = col(|s| s.time_avg_aoi);
        let ec = col(|s| s.energy_consumed);
        let sir = col(|s| s.sum_info_rate);
        let bits = col(|s| s.total_bits as f64);
        let reward = col(|s| s.cumulative_reward);
        Self {
            episodes: stats.len(),
            mean: EpisodeStats {
                time_avg_aoi: aoi.0,
                energy_consumed: ec.0,
                sum_info_rate: sir.0,
                total_bits: bits.0.round() as u64,
                cumulative_reward: reward.0,
            },
            std: EpisodeStats {
                time_avg_aoi: aoi.1,
                energy_consumed: ec.1,
                sum_info_rate: sir.1,
                total_bits: bits.1.round() as u64,
                cumulative_reward: reward.1,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub summary: StatsSummary,
    pub episodes: Vec<EpisodeStats>,
    /// Undiscounted return of each episode in the view's own reward.
    pub returns: Vec<f64>,
}

impl Evaluation {
    pub fn mean_return(&self) -> f64 {
        mean_std(&self.returns).0
    }
}

/// Environment statistics plus the undiscounted return the agent saw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeOutcome {
    pub stats: EpisodeStats,
    pub agent_return: f64,
}

fn check_spaces(view: &dyn AgentEnv, policy: &dyn Policy) -> Result<(), RlError> {
    if view.observation_len() != policy.observation_len() {
        return Err(RlError::SpaceMismatch {
            expected: policy.observation_len(),
            actual: view.observation_len(),
        });
    }
    if !view.controls_wait() && policy.emits_wait() {
        return Err(RlError::WaitMismatch);
    }
    Ok(())
}

/// Runs one episode. With `learn` set, transitions are fed back to the policy
/// as they complete.
pub fn run_episode(
    view: &mut dyn AgentEnv,
    policy: &mut dyn Policy,
    seeds: EpisodeSeeds,
    explore: bool,
    learn: bool,
    rng: &mut SimRng,
) -> Result<EpisodeOutcome, RlError> {
    let mut pending: Vec<Option<(Vec<f64>, ActionTuple)>> = Vec::new();
    let mut ready = view.reset(seeds)?;
    let mut agent_return = 0.0;
    if view.is_done() {
        return Ok(EpisodeOutcome { stats: view.episode_stats(), agent_return });
    }
    loop {
        let mut actions = Vec::with_capacity(ready.len());
        for (auv, obs) in ready.drain(..) {
            let action = policy.act(&obs, explore, rng)?;
            if !view.controls_wait() && action.wait != 0 {
                return Err(RlError::WaitMismatch);
            }
            actions.push((auv, action));
            if pending.len() <= auv {
                pending.resize(auv + 1, None);
            }
            pending[auv] = Some((obs, action));
        }
        let step = view.step(&actions)?;
        let mut batch = Vec::new();
        for t in step.transitions {
            let AgentTransition { auv, observation, reward, truncated } = t;
            let terminal = step.done || truncated;
            agent_return += reward;
            if let Some((obs, action)) = pending.get_mut(auv).and_then(Option::take) {
                batch.push(Transition {
                    observation: obs,
                    action,
                    reward,
                    next_observation: observation.clone(),
                    terminal,
                });
            }
            if !terminal {
                ready.push((auv, observation));
            }
        }
        if learn && !batch.is_empty() {
            policy.update(&batch)?;
        }
        if step.done {
            return Ok(EpisodeOutcome { stats: view.episode_stats(), agent_return });
        }
    }
}

/// Greedy rollouts of `policy` on `n_episodes` seeded episodes.
pub fn evaluate(
    view: &mut dyn AgentEnv,
    policy: &mut dyn Policy,
    n_episodes: usize,
    seed: u64,
    layout_seed: Option<u64>,
) -> Result<Evaluation, RlError> {
    check_spaces(view, policy)?;
    let mut rng = seeded(mix_seed(seed, EXPLORE_TAG));
    let outcomes = (0..n_episodes)
        .map(|k| {
            let dynamics = mix_seed(seed, k as u64);
            let seeds = EpisodeSeeds {
                layout: layout_seed.unwrap_or(dynamics),
                dynamics,
            };
            run_episode(view, policy, seeds, false, false, &mut rng)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let episodes: Vec<EpisodeStats> = outcomes.iter().map(|o| o.stats).collect();
    Ok(Evaluation {
        summary: StatsSummary::from_episodes(&episodes),
        episodes,
        returns: outcomes.iter().map(|o| o.agent_return).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub episode: usize,
    pub epsilon: f64,
    /// Mean greedy return in the view's own reward.
    pub mean_return: f64,
    pub summary: StatsSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainOutcome {
    pub curve: Vec<CurvePoint>,
    pub layout_seed: u64,
    /// Episode count of the checkpoint the policy was left at.
    pub selected_episode: usize,
}

/// Epsilon-greedy Q-learning of `policy` on `view`. With `keep_best` set,
/// the policy is left at the evaluated checkpoint with the highest mean
/// greedy return (earliest on ties).
pub fn train<P: Policy + Clone>(
    view: &mut dyn AgentEnv,
    policy: &mut P,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome, RlError> {
    cfg.validate()?;
    check_spaces(view, policy)?;
    let mut rng = seeded(mix_seed(seed, EXPLORE_TAG));
    let layout_seed = cfg.layout_seed(seed, 0);
    let eval_seed = mix_seed(seed, EVAL_TAG);
    let mut curve = Vec::new();
    let mut best: Option<(f64, usize, P)> = None;
    for episode in 0..cfg.episodes {
        let epsilon = cfg.epsilon.value(episode, cfg.episodes);
        policy.begin_episode(epsilon);
        let seeds = EpisodeSeeds {
            layout: cfg.layout_seed(seed, episode as u64),
            dynamics: mix_seed(mix_seed(seed, TRAIN_TAG), episode as u64),
        };
        run_episode(view, policy, seeds, true, true, &mut rng)?;
        let done = episode + 1;
        if cfg.eval_interval > 0 && (done % cfg.eval_interval == 0 || done == cfg.episodes) {
            let layout = cfg.fixed_layout.then_some(layout_seed);
            let eval = evaluate(view, policy, cfg.eval_episodes, eval_seed, layout)?;
            let mean_return = eval.mean_return();
            if cfg.keep_best && best.as_ref().map_or(true, |b| mean_return > b.0) {
                best = Some((mean_return, done, policy.clone()));
            }
            curve.push(CurvePoint {
                episode: done,
                epsilon,
                mean_return,
                summary: eval.summary,
            });
        }
    }
    let selected_episode = match best {
        Some((_, at, p)) => {
            *policy = p;
            at
        }
        None => cfg.episodes,
    };
    Ok(TrainOutcome {
        curve,
        layout_seed,
        selected_episode,
    })
}

/// One arm of a comparison: an MDP interface plus a delay model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSpec {
    pub name: String,
    pub kind: MdpKind,
    /// Overrides the world's delay model when set.
    pub delay: Option<DelayModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonConfig {
    pub world: WorldConfig,
    pub discretization: DiscretizationConfig,
    pub train: TrainConfig,
    pub arms: Vec<ArmSpec>,
    pub seeds: Vec<u64>,
    /// Greedy episodes per trained agent in the final evaluation.
    pub final_eval_episodes: usize,
    /// Worker threads; results do not depend on it.
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedResult {
    pub arm: String,
    pub seed: u64,
    pub selected_episode: usize,
    pub evaluation: Evaluation,
    pub curve: Vec<CurvePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArmSummary {
    pub arm: String,
    pub kind: MdpKind,
    /// Statistics over the per-seed means.
    pub summary: StatsSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairwiseDelta {
    pub seed: u64,
    pub arm: String,
    pub baseline: String,
    /// Arm minus baseline, per-seed means.
    pub delta: EpisodeStats,
    pub delta_bits: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub arms: Vec<ArmSummary>,
    pub per_seed: Vec<SeedResult>,
    pub deltas: Vec<PairwiseDelta>,
}

impl ComparisonReport {
    pub fn seed_result(&self, arm: &str, seed: u64) -> Option<&SeedResult> {
        self.per_seed.iter().find(|r| r.arm == arm && r.seed == seed)
    }

    pub fn arm(&self, arm: &str) -> Option<&ArmSummary> {
        self.arms.iter().find(|a| a.arm == arm)
    }
}

/// A trained agent and its final greedy evaluation.
#[derive(Debug, Clone)]
pub struct TrainedArm {
    pub result: SeedResult,
    pub policy: QPolicy,
    pub view: MdpView,
    pub layout_seed: Option<u64>,
}

/// Trains one arm on one seed and evaluates the greedy policy on
/// `final_eval_episodes` fresh episodes.
pub fn train_and_evaluate(
    world: &WorldConfig,
    disc: &DiscretizationConfig,
    train_cfg: &TrainConfig,
    arm: &ArmSpec,
    seed: u64,
    final_eval_episodes: usize,
) -> Result<TrainedArm, RlError> {
    let mut world = world.clone();
    if let Some(delay) = &arm.delay {
        world.delay = delay.clone();
    }
    let mut view = MdpView::new(UnderwaterEnv::new(world)?, arm.kind);
    let mut policy = QPolicy::for_view(&view, disc, train_cfg);
    let outcome = train(&mut view, &mut policy, train_cfg, seed)?;
    let layout_seed = train_cfg.fixed_layout.then_some(outcome.layout_seed);
    let evaluation = evaluate(
        &mut view,
        &mut policy,
        final_eval_episodes,
        final_eval_seed(seed),
        layout_seed,
    )?;
    Ok(TrainedArm {
        result: SeedResult {
            arm: arm.name.clone(),
            seed,
            selected_episode: outcome.selected_episode,
            evaluation,
            curve: outcome.curve,
        },
        policy,
        view,
        layout_seed,
    })
}

/// Seed of the final greedy evaluation after training under `seed`.
pub fn final_eval_seed(seed: u64) -> u64 {
    mix_seed(seed, FINAL_EVAL_TAG)
}

fn run_arm_seed(cfg: &ComparisonConfig, arm: &ArmSpec, seed: u64) -> Result<SeedResult, RlError> {
    train_and_evaluate(&cfg.world, &cfg.discretization, &cfg.train, arm, seed, cfg.final_eval_episodes)
        .map(|t| t.result)
}

/// Trains every arm on every seed (same world and seeds across arms) and
/// evaluates the greedy policies.
pub fn run_comparison(cfg: &ComparisonConfig) -> Result<ComparisonReport, RlError> {
    cfg.train.validate()?;
    cfg.discretization.validate()?;
    cfg.world.validate()?;
    if cfg.arms.is_empty() || cfg.seeds.is_empty() {
        return Err(RlError::InvalidConfig("a comparison needs at least one arm and one seed".into()));
    }
    let jobs: Vec<(usize, u64)> = (0..cfg.arms.len())
        .flat_map(|a| cfg.seeds.iter().map(move |&s| (a, s)))
        .collect();
    let threads = cfg.threads.max(1).min(jobs.len());
    let mut results: Vec<Option<Result<SeedResult, RlError>>> = vec![None; jobs.len()];
    thread::scope(|scope| {
        let handles: Vec<_> = (0..threads)
            .map(|w| {
                let jobs = &jobs;
                scope.spawn(move || {
                    jobs.iter()
                        .enumerate()
                        .skip(w)
                        .step_by(threads)
                        .map(|(i, &(a, s))| (i, run_arm_seed(cfg, &cfg.arms[a], s)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("comparison worker panicked") {
                results[i] = Some(r);
            }
        }
    });
    let per_seed = results
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect::<Result<Vec<_>, _>>()?;

    let arms = cfg
        .arms
        .iter()
        .map(|arm| {
            let means: Vec<EpisodeStats> = per_seed
                .iter()
                .filter(|r| r.arm == arm.name)
                .map(|r| r.evaluation.summary.mean)
                .collect();
            ArmSummary {
                arm: arm.name.clone(),
                kind: arm.kind,
                summary: StatsSummary::from_episodes(&means),
            }
        })
        .collect();

    let baseline = &cfg.arms[0].name;
    let mut deltas = Vec::new();
    for arm in &cfg.arms[1..] {
        for &seed in &cfg.seeds {
            let find = |name: &str| {
                per_seed
                    .iter()
                    .find(|r| r.arm == name && r.seed == seed)
                    .map(|r| r.evaluation.summary.mean)
                    .expect("result for every arm and seed")
            };
            let (a, b) = (find(&arm.name), find(baseline));
            deltas.push(PairwiseDelta {
                seed,
                arm: arm.name.clone(),
                baseline: baseline.clone(),
                delta: EpisodeStats {
                    time_avg_aoi: a.time_avg_aoi - b.time_avg_aoi,
                    energy_consumed: a.energy_consumed - b.energy_consumed,
                    sum_info_rate: a.sum_info_rate - b.sum_info_rate,
                    total_bits: 0,
                    cumulative_reward: a.cumulative_reward - b.cumulative_reward,
                },
                delta_bits: a.total_bits as i64 - b.total_bits as i64,
            });
        }
    }
    Ok(ComparisonReport { arms, per_seed, deltas })
}
