//! Multi-AUV underwater data-collection environment with delayed observations.
//!
//! Each AUV runs its own decision epochs. At the reception of observation
//! `k` (time `D_k`) the agent picks `(a', Z)`:
//!
//! 1. the AUV hovers for `Z` steps without requesting an observation;
//! 2. at `T_{k+1} = D_k + Z` it transmits a snapshot request, applies the
//!    turn of `a'` and moves at the commanded speed;
//! 3. the snapshot taken at `T_{k+1}` arrives after a delay `Y` drawn from
//!    the delay model, at `D_{k+1} = T_{k+1} + Y`, ending the epoch.
//!
//! The command is held until the next reception, so the agent always acts
//! on information that is `Y` steps old. AUVs with different `(Z, Y)` become
//! ready at different steps; [`UnderwaterEnv::step`] takes actions only for
//! the AUVs that are currently ready and advances the world until at least
//! one more AUV receives an observation.

use std::collections::VecDeque;
use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aoi::{AoiError, UpdateTimeline};
use crate::delay::{DelayContext, DelayError, DelayModel, DelayModelKind, DelaySampler, SdmDelay};
use crate::rng::{mix_seed, seeded, SimRng};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("invalid world config `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("environment must be reset before stepping")]
    NotReset,
    #[error("episode is over")]
    EpisodeDone,
    #[error("AUV {0} is not awaiting an action")]
    NotReady(usize),
    #[error("AUV {0} is awaiting an action but none was given")]
    MissingAction(usize),
    #[error("AUV {0} was given more than one action")]
    DuplicateAction(usize),
    #[error("the standard-MDP view has no wait action (AUV {auv} asked for {wait})")]
    WaitNotControllable { auv: usize, wait: u32 },
    #[error(transparent)]
    Delay(#[from] DelayError),
    #[error(transparent)]
    Aoi(#[from] AoiError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardWeights {
    pub rate: f64,
    pub energy: f64,
    pub aoi: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            rate: 1e-3,
            energy: 1e-2,
            aoi: 20.0,
        }
    }
}

/// How an epoch's reception is charged in the AoI reward term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AoiIncrement {
    /// The epoch's sawtooth area divided by the episode horizon: its
    /// contribution to the final time average over a full episode.
    #[default]
    HorizonArea,
    /// Change of the running time average `Δ̄` at this reception.
    RunningAverage,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    /// Radians in `[0, 2 pi)`.
    pub heading: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    /// Arena width and height, meters.
    pub arena: [f64; 2],
    pub n_auvs: usize,
    pub n_nodes: usize,
    /// Initial data held by every node, bits.
    pub node_data_bits: u64,
    pub comm_range: f64,
    /// Largest distance covered in one step, meters.
    pub max_speed: f64,
    /// Largest heading change per decision, radians.
    pub max_turn: f64,
    /// Largest wait, steps.
    pub max_wait: u32,
    /// Motion energy, J per meter.
    pub move_energy_per_meter: f64,
    /// Energy of one observation exchange, J.
    pub comms_energy_per_step: f64,
    /// Seconds per step.
    pub sample_period: f64,
    /// Observation-link propagation speed, m/s.
    pub propagation_speed: f64,
    /// Horizontal position of the observation reference station, meters.
    pub reference_position: [f64; 2],
    /// Vertical offset between the AUV plane and the reference, meters.
    pub reference_depth: f64,
    /// Data link: `rate = rate_max * log2(1 + snr_coefficient / d^2)`, bits/s.
    pub rate_max: f64,
    pub snr_coefficient: f64,
    /// Link distances below this are treated as this distance.
    pub min_link_distance: f64,
    /// Episode length, steps.
    pub horizon: u64,
    /// Delays are clamped to this many steps.
    pub max_delay: u64,
    pub initial_age: f64,
    pub reward: RewardWeights,
    pub aoi_increment: AoiIncrement,
    pub delay: DelayModel,
    /// Fixed AUV start poses; empty means seeded uniform placement.
    pub auv_starts: Vec<Pose>,
    /// Fixed node positions; empty means seeded uniform placement.
    pub node_positions: Vec<[f64; 2]>,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            arena: [1000.0, 1000.0],
            n_auvs: 1,
            n_nodes: 6,
            node_data_bits: 60_000,
            comm_range: 150.0,
            max_speed: 25.0,
            max_turn: std::f64::consts::FRAC_PI_2,
            max_wait: 2,
            move_energy_per_meter: 1.0,
            comms_energy_per_step: 5.0,
            sample_period: 1.0,
            propagation_speed: 150.0,
            reference_position: [0.0, 0.0],
            reference_depth: 100.0,
            rate_max: 1000.0,
            snr_coefficient: 22_500.0,
            min_link_distance: 10.0,
            horizon: 400,
            max_delay: 32,
            initial_age: 0.0,
            reward: RewardWeights::default(),
            aoi_increment: AoiIncrement::default(),
            delay: DelayModel::default(),
            auv_starts: Vec::new(),
            node_positions: Vec::new(),
        }
    }
}

fn invalid(field: &'static str, reason: impl Into<String>) -> EnvError {
    EnvError::InvalidConfig {
        field,
        reason: reason.into(),
    }
}

fn require_positive(field: &'static str, v: f64) -> Result<(), EnvError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("must be positive, got {v}")))
    }
}

fn require_non_negative(field: &'static str, v: f64) -> Result<(), EnvError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("must be non-negative, got {v}")))
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        require_positive("arena.width", self.arena[0])?;
        require_positive("arena.height", self.arena[1])?;
        if self.n_auvs == 0 {
            return Err(invalid("n_auvs", "at least one AUV is required"));
        }
        require_positive("comm_range", self.comm_range)?;
        require_non_negative("max_speed", self.max_speed)?;
        require_non_negative("max_turn", self.max_turn)?;
        require_non_negative("move_energy_per_meter", self.move_energy_per_meter)?;
        require_non_negative("comms_energy_per_step", self.comms_energy_per_step)?;
        require_positive("sample_period", self.sample_period)?;
        require_positive("propagation_speed", self.propagation_speed)?;
        require_non_negative("reference_depth", self.reference_depth)?;
        if !self.reference_position.iter().all(|v| v.is_finite()) {
            return Err(invalid("reference_position", "must be finite"));
        }
        require_non_negative("rate_max", self.rate_max)?;
        require_positive("snr_coefficient", self.snr_coefficient)?;
        require_positive("min_link_distance", self.min_link_distance)?;
        if self.horizon == 0 {
            return Err(invalid("horizon", "must be at least one step"));
        }
        if self.max_delay == 0 {
            return Err(invalid("max_delay", "must be at least one step"));
        }
        require_non_negative("initial_age", self.initial_age)?;
        require_non_negative("reward.rate", self.reward.rate)?;
        require_non_negative("reward.energy", self.reward.energy)?;
        require_non_negative("reward.aoi", self.reward.aoi)?;
        if !self.auv_starts.is_empty() && self.auv_starts.len() != self.n_auvs {
            return Err(invalid("auv_starts", format!("expected {} poses", self.n_auvs)));
        }
        if !self.node_positions.is_empty() && self.node_positions.len() != self.n_nodes {
            return Err(invalid("node_positions", format!("expected {} positions", self.n_nodes)));
        }
        let inside = |x: f64, y: f64| (0.0..=self.arena[0]).contains(&x) && (0.0..=self.arena[1]).contains(&y);
        if self.auv_starts.iter().any(|p| !inside(p.x, p.y) || !p.heading.is_finite()) {
            return Err(invalid("auv_starts", "poses must lie inside the arena"));
        }
        if self.node_positions.iter().any(|p| !inside(p[0], p[1])) {
            return Err(invalid("node_positions", "positions must lie inside the arena"));
        }
        self.resolved_delay_model().validate()?;
        Ok(())
    }

    /// The delay model with the SDM link's speed and sample period taken
    /// from the world.
    pub fn resolved_delay_model(&self) -> DelayModel {
        match &self.delay {
            DelayModel::Sdm(link) => DelayModel::Sdm(SdmDelay {
                propagation_speed: self.propagation_speed,
                sample_period: self.sample_period,
                ..link.clone()
            }),
            other => other.clone(),
        }
    }

    pub fn reference_distance(&self, x: f64, y: f64) -> f64 {
        let dx = x - self.reference_position[0];
        let dy = y - self.reference_position[1];
        (dx * dx + dy * dy + self.reference_depth * self.reference_depth).sqrt()
    }

    /// Median distance from a uniformly placed AUV to the reference,
    /// evaluated on a 256 x 256 midpoint grid.
    pub fn median_reference_distance(&self) -> f64 {
        const GRID: usize = 256;
        let mut d: Vec<f64> = (0..GRID * GRID)
            .map(|k| {
                let x = ((k % GRID) as f64 + 0.5) / GRID as f64 * self.arena[0];
                let y = ((k / GRID) as f64 + 0.5) / GRID as f64 * self.arena[1];
                self.reference_distance(x, y)
            })
            .collect();
        d.sort_by(f64::total_cmp);
        0.5 * (d[d.len() / 2 - 1] + d[d.len() / 2])
    }

    /// Propagation delay at the median reference distance, in steps.
    pub fn median_propagation_delay(&self) -> f64 {
        self.median_reference_distance() / self.propagation_speed / self.sample_period
    }

    /// A delay model of `kind` mean-matched to the SDM link at the median
    /// reference distance. The SDM link itself is taken from `self.delay`
    /// when it is an SDM model, and from defaults otherwise.
    pub fn calibrated_delay(&self, kind: DelayModelKind) -> Result<DelayModel, DelayError> {
        let link = match &self.delay {
            DelayModel::Sdm(link) => link.clone(),
            _ => SdmDelay::default(),
        };
        let link = SdmDelay {
            propagation_speed: self.propagation_speed,
            sample_period: self.sample_period,
            ..link
        };
        DelayModel::mean_matched(kind, self.median_propagation_delay(), &link)
    }

    /// Bits moved over a link of length `distance` in one step.
    pub fn bits_per_step(&self, distance: f64) -> u64 {
        let d = distance.max(self.min_link_distance);
        let rate = self.rate_max * (1.0 + self.snr_coefficient / (d * d)).log2() * self.sample_period;
        rate.floor() as u64
    }
}

/// `(a', Z)`: motion command plus wait time.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ActionTuple {
    /// Meters per step, in `[0, max_speed]`.
    pub speed: f64,
    /// Heading change applied at transmission, in `[-max_turn, max_turn]`.
    pub turn: f64,
    /// Steps to wait before the next observation request.
    pub wait: u32,
}

impl ActionTuple {
    pub fn new(speed: f64, turn: f64, wait: u32) -> Self {
        Self { speed, turn, wait }
    }

    fn clamped(self, cfg: &WorldConfig) -> (Self, bool) {
        let fix = |v: f64, lo: f64, hi: f64| if v.is_nan() { 0.0_f64.clamp(lo, hi) } else { v.clamp(lo, hi) };
        let out = Self {
            speed: fix(self.speed, 0.0, cfg.max_speed),
            turn: fix(self.turn, -cfg.max_turn, cfg.max_turn),
            wait: self.wait.min(cfg.max_wait),
        };
        let changed = out.speed.to_bits() != self.speed.to_bits()
            || out.turn.to_bits() != self.turn.to_bits()
            || out.wait != self.wait;
        (out, changed)
    }
}

/// `(r', -aoi)` for one decision epoch.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct RewardTuple {
    /// Bits collected during the epoch.
    pub rate: u64,
    /// Energy spent during the epoch, J.
    pub energy: f64,
    /// Change of the AUV's time-averaged AoI caused by this epoch's reception.
    pub aoi_increment: f64,
    pub scalarized: f64,
}

impl RewardTuple {
    fn new(rate: u64, energy: f64, aoi_increment: f64, w: &RewardWeights) -> Self {
        Self {
            rate,
            energy,
            aoi_increment,
            scalarized: w.rate * rate as f64 - w.energy * energy - w.aoi * aoi_increment,
        }
    }

    /// The task reward `r'` alone.
    pub fn task_reward(&self, w: &RewardWeights) -> f64 {
        w.rate * self.rate as f64 - w.energy * self.energy
    }
}

/// The world at one step, as archived for delayed delivery.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorldSnapshot {
    pub time: u64,
    pub poses: Vec<Pose>,
    pub node_remaining: Vec<u64>,
}

/// `s = (s', Y)` as received by one AUV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Observation {
    pub auv: usize,
    /// Step at which the snapshot was taken.
    pub snapshot_time: u64,
    /// Step at which it was received.
    pub received_at: u64,
    /// `Y`, steps.
    pub staleness: u64,
    pub pose: Pose,
    pub node_remaining: Vec<u64>,
}

impl Observation {
    /// Number of entries in [`features`](Self::features).
    pub const LEN: usize = 5;

    /// `[x, y, heading, fraction of data left, Y]`.
    pub fn features(&self, initial_total_bits: u64) -> Vec<f64> {
        let left: u64 = self.node_remaining.iter().sum();
        let fraction = if initial_total_bits == 0 {
            0.0
        } else {
            left as f64 / initial_total_bits as f64
        };
        vec![self.pose.x, self.pose.y, self.pose.heading, fraction, self.staleness as f64]
    }
}

/// One epoch outcome for one AUV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Delivery {
    pub observation: Observation,
    pub reward: RewardTuple,
    /// The episode ended before this epoch's observation arrived; the
    /// observation repeats the last one received and the AoI term is zero.
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepResult {
    pub deliveries: Vec<Delivery>,
    /// AUVs whose action was clamped into bounds.
    pub clamped: Vec<usize>,
    pub done: bool,
    pub time: u64,
}

/// Per-epoch trace row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub step: u64,
    pub auv: usize,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub delay: u64,
    pub wait: u32,
    pub rate_bits: u64,
    pub energy: f64,
    pub aoi_increment: f64,
    pub task_reward: f64,
    pub reward: f64,
    pub truncated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EpisodeStats {
    /// Mean over AUVs of each AUV's time-averaged AoI, steps.
    pub time_avg_aoi: f64,
    /// EC, J.
    pub energy_consumed: f64,
    /// SIR: bits collected per step, all AUVs.
    pub sum_info_rate: f64,
    /// Bits collected over the episode, all AUVs.
    pub total_bits: u64,
    pub cumulative_reward: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpisodeSeeds {
    pub layout: u64,
    pub dynamics: u64,
}

impl From<u64> for EpisodeSeeds {
    fn from(seed: u64) -> Self {
        Self {
            layout: seed,
            dynamics: seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Phase {
    Ready,
    Waiting { transmit_at: u64, command: ActionTuple },
    InFlight { sent_at: u64, delay: u64, speed: f64 },
    Finished,
}

#[derive(Debug, Clone)]
struct Auv {
    pose: Pose,
    phase: Phase,
    timeline: UpdateTimeline,
    last_avg: f64,
    last_area: f64,
    /// Wait chosen at the latest decision.
    wait: u32,
    epoch_bits: u64,
    epoch_energy: f64,
    collected_bits: u64,
    energy: f64,
    reward_sum: f64,
    last_observation: Option<Observation>,
}

#[derive(Debug, Clone)]
pub struct UnderwaterEnv {
    cfg: WorldConfig,
    sampler: DelaySampler,
    rng: SimRng,
    time: u64,
    auvs: Vec<Auv>,
    nodes: Vec<[f64; 2]>,
    node_remaining: Vec<u64>,
    initial_total_bits: u64,
    archive: VecDeque<WorldSnapshot>,
    done: bool,
    started: bool,
    trace: Option<Vec<TraceRow>>,
}

fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

impl UnderwaterEnv {
    pub fn new(cfg: WorldConfig) -> Result<Self, EnvError> {
        cfg.validate()?;
        let sampler = DelaySampler::new(&cfg.resolved_delay_model())?;
        Ok(Self {
            sampler,
            rng: seeded(0),
            time: 0,
            auvs: Vec::new(),
            nodes: Vec::new(),
            node_remaining: Vec::new(),
            initial_total_bits: 0,
            archive: VecDeque::with_capacity(cfg.max_delay as usize + 1),
            done: false,
            started: false,
            trace: None,
            cfg,
        })
    }

    pub fn config(&self) -> &WorldConfig {
        &self.cfg
    }

    /// Keep per-epoch trace rows from the next reset on.
    pub fn set_tracing(&mut self, on: bool) {
        self.trace = on.then(Vec::new);
    }

    pub fn trace(&self) -> &[TraceRow] {
        self.trace.as_deref().unwrap_or(&[])
    }

    pub fn time(&self) -> u64 {
        self.time
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn n_auvs(&self) -> usize {
        self.cfg.n_auvs
    }

    pub fn node_positions(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn node_remaining(&self) -> &[u64] {
        &self.node_remaining
    }

    pub fn initial_total_bits(&self) -> u64 {
        self.initial_total_bits
    }

    /// Bits collected so far, per AUV.
    pub fn collected_bits(&self) -> Vec<u64> {
        self.auvs.iter().map(|a| a.collected_bits).collect()
    }

    pub fn poses(&self) -> Vec<Pose> {
        self.auvs.iter().map(|a| a.pose).collect()
    }

    pub fn timeline(&self, auv: usize) -> Option<&UpdateTimeline> {
        self.auvs.get(auv).map(|a| &a.timeline)
    }

    pub fn ready(&self) -> Vec<usize> {
        self.auvs
            .iter()
            .enumerate()
            .filter(|(_, a)| a.phase == Phase::Ready)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn archived_snapshot(&self, time: u64) -> Option<&WorldSnapshot> {
        let first = self.archive.front()?.time;
        time.checked_sub(first)
            .and_then(|i| self.archive.get(i as usize))
    }

    /// Places nodes and AUVs and advances to the first observation
    /// reception(s). Returns the observations of the AUVs that are ready.
    pub fn reset(&mut self, seeds: impl Into<EpisodeSeeds>) -> Result<Vec<Observation>, EnvError> {
        let seeds = seeds.into();
        let cfg = self.cfg.clone();
        let mut layout_rng = seeded(mix_seed(seeds.layout, 1));
        let [w, h] = cfg.arena;
        self.nodes = if cfg.node_positions.is_empty() {
            (0..cfg.n_nodes)
                .map(|_| [layout_rng.gen::<f64>() * w, layout_rng.gen::<f64>() * h])
                .collect()
        } else {
            cfg.node_positions.clone()
        };
        let starts: Vec<Pose> = if cfg.auv_starts.is_empty() {
            (0..cfg.n_auvs)
                .map(|_| Pose {
                    x: layout_rng.gen::<f64>() * w,
                    y: layout_rng.gen::<f64>() * h,
                    heading: layout_rng.gen::<f64>() * TAU,
                })
                .collect()
        } else {
            cfg.auv_starts
                .iter()
                .map(|p| Pose { heading: wrap_angle(p.heading), ..*p })
                .collect()
        };
        self.node_remaining = vec![cfg.node_data_bits; cfg.n_nodes];
        self.initial_total_bits = cfg.node_data_bits * cfg.n_nodes as u64;
        self.rng = seeded(mix_seed(seeds.dynamics, 2));
        self.time = 0;
        self.done = false;
        self.started = true;
        if let Some(t) = self.trace.as_mut() {
            t.clear();
        }
        self.auvs = starts
            .into_iter()
            .map(|pose| {
                Ok(Auv {
                    pose,
                    phase: Phase::Ready,
                    timeline: UpdateTimeline::new(cfg.initial_age)?,
                    last_avg: 0.0,
                    last_area: 0.0,
                    wait: 0,
                    epoch_bits: 0,
                    epoch_energy: 0.0,
                    collected_bits: 0,
                    energy: 0.0,
                    reward_sum: 0.0,
                    last_observation: None,
                })
            })
            .collect::<Result<_, EnvError>>()?;
        self.archive.clear();
        self.archive_snapshot();
        for i in 0..self.auvs.len() {
            self.transmit(i, 0.0)?;
        }
        let result = self.run_until_delivery()?;
        Ok(result.into_iter().map(|d| d.observation).collect())
    }

    /// Applies one action to every ready AUV and advances the world until at
    /// least one AUV receives an observation or the horizon is reached.
    pub fn step(&mut self, actions: &[(usize, ActionTuple)]) -> Result<StepResult, EnvError> {
        if !self.started {
            return Err(EnvError::NotReset);
        }
        if self.done {
            return Err(EnvError::EpisodeDone);
        }
        let mut given = vec![false; self.auvs.len()];
        for &(auv, _) in actions {
            match self.auvs.get(auv) {
                Some(a) if a.phase == Phase::Ready => {}
                _ => return Err(EnvError::NotReady(auv)),
            }
            if std::mem::replace(&mut given[auv], true) {
                return Err(EnvError::DuplicateAction(auv));
            }
        }
        if let Some(auv) = self.ready().into_iter().find(|&i| !given[i]) {
            return Err(EnvError::MissingAction(auv));
        }

        let mut clamped = Vec::new();
        for &(auv, action) in actions {
            let (action, changed) = action.clamped(&self.cfg);
            if changed {
                clamped.push(auv);
            }
            self.auvs[auv].wait = action.wait;
            if action.wait == 0 {
                self.auvs[auv].pose.heading = wrap_angle(self.auvs[auv].pose.heading + action.turn);
                self.transmit(auv, action.speed)?;
            } else {
                self.auvs[auv].phase = Phase::Waiting {
                    transmit_at: self.time + action.wait as u64,
                    command: action,
                };
            }
        }
        let deliveries = self.run_until_delivery()?;
        Ok(StepResult {
            deliveries,
            clamped,
            done: self.done,
            time: self.time,
        })
    }

    pub fn episode_stats(&self) -> EpisodeStats {
        let mut aoi = 0.0;
        for a in &self.auvs {
            aoi += a
                .timeline
                .time_averaged_aoi()
                .map_or(0.0, |s| s.time_avg_aoi);
        }
        let total_bits: u64 = self.auvs.iter().map(|a| a.collected_bits).sum();
        EpisodeStats {
            time_avg_aoi: aoi / self.auvs.len().max(1) as f64,
            energy_consumed: self.auvs.iter().map(|a| a.energy).sum(),
            sum_info_rate: if self.time == 0 {
                0.0
            } else {
                total_bits as f64 / self.time as f64
            },
            total_bits,
            cumulative_reward: self.auvs.iter().map(|a| a.reward_sum).sum(),
        }
    }

    /// Per-AUV time-averaged AoI from the recorded timelines.
    pub fn per_auv_aoi(&self) -> Vec<f64> {
        self.auvs
            .iter()
            .map(|a| a.timeline.time_averaged_aoi().map_or(0.0, |s| s.time_avg_aoi))
            .collect()
    }

    fn archive_snapshot(&mut self) {
        if self.archive.len() == self.cfg.max_delay as usize + 1 {
            self.archive.pop_front();
        }
        self.archive.push_back(WorldSnapshot {
            time: self.time,
            poses: self.auvs.iter().map(|a| a.pose).collect(),
            node_remaining: self.node_remaining.clone(),
        });
    }

    fn transmit(&mut self, auv: usize, speed: f64) -> Result<(), EnvError> {
        let pose = self.auvs[auv].pose;
        let distance = self.cfg.reference_distance(pose.x, pose.y);
        let raw = self.sampler.sample(&mut self.rng, Some(DelayContext { distance }))?;
        let delay = (raw.round().max(1.0) as u64).min(self.cfg.max_delay);
        let a = &mut self.auvs[auv];
        a.energy += self.cfg.comms_energy_per_step;
        a.epoch_energy += self.cfg.comms_energy_per_step;
        a.phase = Phase::InFlight {
            sent_at: self.time,
            delay,
            speed,
        };
        Ok(())
    }

    fn tick(&mut self) {
        let [w, h] = self.cfg.arena;
        for a in &mut self.auvs {
            let speed = match a.phase {
                Phase::InFlight { speed, .. } => speed,
                _ => 0.0,
            };
            if speed > 0.0 {
                let (s, c) = a.pose.heading.sin_cos();
                let nx = (a.pose.x + speed * c).clamp(0.0, w);
                let ny = (a.pose.y + speed * s).clamp(0.0, h);
                let moved = (nx - a.pose.x).hypot(ny - a.pose.y);
                a.pose.x = nx;
                a.pose.y = ny;
                let e = moved * self.cfg.move_energy_per_meter;
                a.energy += e;
                a.epoch_energy += e;
            }
            for (node, remaining) in self.nodes.iter().zip(self.node_remaining.iter_mut()) {
                if *remaining == 0 {
                    continue;
                }
                let d = (node[0] - a.pose.x).hypot(node[1] - a.pose.y);
                if d <= self.cfg.comm_range {
                    let take = self.cfg.bits_per_step(d).min(*remaining);
                    *remaining -= take;
                    a.collected_bits += take;
                    a.epoch_bits += take;
                }
            }
        }
        self.time += 1;
        self.archive_snapshot();
    }

    fn deliver(&mut self, auv: usize, sent_at: u64, delay: u64) -> Result<Delivery, EnvError> {
        let snapshot = self
            .archived_snapshot(sent_at)
            .expect("archive holds max_delay + 1 steps");
        let observation = Observation {
            auv,
            snapshot_time: sent_at,
            received_at: self.time,
            staleness: delay,
            pose: snapshot.poses[auv],
            node_remaining: snapshot.node_remaining.clone(),
        };
        let weights = self.cfg.reward;
        let a = &mut self.auvs[auv];
        let first = a.timeline.is_empty();
        a.timeline.append_update(delay as f64, a.wait as f64)?;
        let summary = a.timeline.time_averaged_aoi()?;
        let increment = match (first, self.cfg.aoi_increment) {
            (true, _) => 0.0,
            (false, AoiIncrement::RunningAverage) => summary.time_avg_aoi - a.last_avg,
            (false, AoiIncrement::HorizonArea) => (summary.total_area - a.last_area) / self.cfg.horizon as f64,
        };
        a.last_avg = summary.time_avg_aoi;
        a.last_area = summary.total_area;
        let reward = RewardTuple::new(a.epoch_bits, a.epoch_energy, increment, &weights);
        a.epoch_bits = 0;
        a.epoch_energy = 0.0;
        a.phase = Phase::Ready;
        a.last_observation = Some(observation.clone());
        if !first {
            a.reward_sum += reward.scalarized;
        }
        if let Some(trace) = self.trace.as_mut() {
            trace.push(TraceRow {
                step: self.time,
                auv,
                x: a.pose.x,
                y: a.pose.y,
                heading: a.pose.heading,
                delay,
                wait: a.wait,
                rate_bits: reward.rate,
                energy: reward.energy,
                aoi_increment: reward.aoi_increment,
                task_reward: reward.task_reward(&weights),
                reward: reward.scalarized,
                truncated: false,
            });
        }
        Ok(Delivery {
            observation,
            reward,
            truncated: false,
        })
    }

    fn truncate(&mut self, auv: usize) -> Option<Delivery> {
        let weights = self.cfg.reward;
        let a = &mut self.auvs[auv];
        if matches!(a.phase, Phase::Ready | Phase::Finished) {
            a.phase = Phase::Finished;
            return None;
        }
        let reward = RewardTuple::new(a.epoch_bits, a.epoch_energy, 0.0, &weights);
        a.epoch_bits = 0;
        a.epoch_energy = 0.0;
        a.phase = Phase::Finished;
        a.reward_sum += reward.scalarized;
        if let Some(trace) = self.trace.as_mut() {
            trace.push(TraceRow {
                step: self.time,
                auv,
                x: a.pose.x,
                y: a.pose.y,
                heading: a.pose.heading,
                delay: 0,
                wait: a.wait,
                rate_bits: reward.rate,
                energy: reward.energy,
                aoi_increment: 0.0,
                task_reward: reward.task_reward(&weights),
                reward: reward.scalarized,
                truncated: true,
            });
        }
        let observation = a.last_observation.clone()?;
        Some(Delivery {
            observation,
            reward,
            truncated: true,
        })
    }

    fn run_until_delivery(&mut self) -> Result<Vec<Delivery>, EnvError> {
        let mut deliveries = Vec::new();
        loop {
            if self.time >= self.cfg.horizon {
                break;
            }
            self.tick();
            for i in 0..self.auvs.len() {
                if let Phase::Waiting { transmit_at, command } = self.auvs[i].phase {
                    if transmit_at == self.time {
                        self.auvs[i].pose.heading = wrap_angle(self.auvs[i].pose.heading + command.turn);
                        self.transmit(i, command.speed)?;
                    }
                }
            }
            for i in 0..self.auvs.len() {
                if let Phase::InFlight { sent_at, delay, .. } = self.auvs[i].phase {
                    if sent_at + delay == self.time {
                        deliveries.push(self.deliver(i, sent_at, delay)?);
                    }
                }
            }
            if !deliveries.is_empty() {
                break;
            }
        }
        if self.time >= self.cfg.horizon {
            self.done = true;
            for i in 0..self.auvs.len() {
                if let Some(d) = self.truncate(i) {
                    deliveries.push(d);
                }
            }
            for a in &mut self.auvs {
                a.phase = Phase::Finished;
            }
        }
        Ok(deliveries)
    }
}

/// Which MDP interface an agent sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MdpKind {
    /// Observation includes `Y`, the action includes `Z`, the reward includes
    /// the AoI term.
    AoiMdp,
    /// `Y` hidden, `Z` fixed to zero, task reward only.
    Standard,
}

impl MdpKind {
    pub fn name(&self) -> &'static str {
        match self {
            MdpKind::AoiMdp => "aoi_mdp",
            MdpKind::Standard => "standard_mdp",
        }
    }
}

/// What an agent sees after one epoch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentTransition {
    pub auv: usize,
    pub observation: Vec<f64>,
    pub reward: f64,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViewStep {
    pub transitions: Vec<AgentTransition>,
    pub done: bool,
}

/// The environment seen through either MDP interface. The world underneath
/// is the same: delayed delivery still happens under the standard view.
#[derive(Debug, Clone)]
pub struct MdpView {
    env: UnderwaterEnv,
    kind: MdpKind,
}

impl MdpView {
    pub fn new(env: UnderwaterEnv, kind: MdpKind) -> Self {
        Self { env, kind }
    }

    pub fn aoi_mdp(env: UnderwaterEnv) -> Self {
        Self::new(env, MdpKind::AoiMdp)
    }

    pub fn kind(&self) -> MdpKind {
        self.kind
    }

    pub fn env(&self) -> &UnderwaterEnv {
        &self.env
    }

    pub fn env_mut(&mut self) -> &mut UnderwaterEnv {
        &mut self.env
    }

    pub fn into_inner(self) -> UnderwaterEnv {
        self.env
    }

    pub fn controls_wait(&self) -> bool {
        self.kind == MdpKind::AoiMdp
    }

    pub fn observation_len(&self) -> usize {
        match self.kind {
            MdpKind::AoiMdp => Observation::LEN,
            MdpKind::Standard => Observation::LEN - 1,
        }
    }

    fn features(&self, obs: &Observation) -> Vec<f64> {
        let mut f = obs.features(self.env.initial_total_bits());
        if self.kind == MdpKind::Standard {
            f.pop();
        }
        f
    }

    pub fn reset(&mut self, seeds: impl Into<EpisodeSeeds>) -> Result<Vec<(usize, Vec<f64>)>, EnvError> {
        let obs = self.env.reset(seeds)?;
        Ok(obs.iter().map(|o| (o.auv, self.features(o))).collect())
    }

    pub fn step(&mut self, actions: &[(usize, ActionTuple)]) -> Result<ViewStep, EnvError> {
        if self.kind == MdpKind::Standard {
            if let Some(&(auv, a)) = actions.iter().find(|(_, a)| a.wait != 0) {
                return Err(EnvError::WaitNotControllable { auv, wait: a.wait });
            }
        }
        let result = self.env.step(actions)?;
        let weights = self.env.config().reward;
        let transitions = result
            .deliveries
            .iter()
            .map(|d| AgentTransition {
                auv: d.observation.auv,
                observation: self.features(&d.observation),
                reward: match self.kind {
                    MdpKind::AoiMdp => d.reward.scalarized,
                    MdpKind::Standard => d.reward.task_reward(&weights),
                },
                truncated: d.truncated,
            })
            .collect();
        Ok(ViewStep {
            transitions,
            done: result.done,
        })
    }
}

/// Hides `Y`, removes `Z` from the action space and drops the AoI reward.
pub fn make_standard_mdp_view(env: UnderwaterEnv) -> MdpView {
    MdpView::new(env, MdpKind::Standard)
}
