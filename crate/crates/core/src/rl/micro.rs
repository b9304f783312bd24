//! A 3×3 single-AUV, single-node world with deterministic, position-dependent
//! delay. Its state is exactly the observation vector, so optimal returns can
//! be computed by enumeration.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use super::{AgentEnv, RlError};
use crate::env::{ActionTuple, AgentTransition, EpisodeSeeds, EpisodeStats, ViewStep};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MicroConfig {
    pub start: [i32; 2],
    /// Heading at start, in quarter turns counter-clockwise from +x.
    pub start_heading: i32,
    pub node: [i32; 2],
    /// Units of data at the node; one unit is collected per step spent on it.
    pub node_data: u32,
    /// Decision epochs per episode.
    pub max_epochs: u32,
    pub unit_reward: f64,
    pub move_cost: f64,
    pub comms_cost: f64,
    /// Weight on the AoI area of each epoch.
    pub aoi_weight: f64,
}

impl Default for MicroConfig {
    fn default() -> Self {
        Self {
            start: [0, 0],
            start_heading: 0,
            node: [2, 2],
            node_data: 3,
            max_epochs: 12,
            unit_reward: 10.0,
            move_cost: 0.5,
            comms_cost: 0.2,
            aoi_weight: 0.1,
        }
    }
}

/// Observation: `[x, y, heading quarter turns, fraction of data left, Y]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MicroWorld {
    cfg: MicroConfig,
    pos: [i32; 2],
    heading: i32,
    data: u32,
    last_delay: u32,
    epoch: u32,
    time: u64,
    area: f64,
    collected: u32,
    energy: f64,
    reward_sum: f64,
    done: bool,
}

impl MicroWorld {
    pub const SIDE: i32 = 3;

    pub fn new(cfg: MicroConfig) -> Self {
        let mut w = Self {
            pos: cfg.start,
            heading: cfg.start_heading.rem_euclid(4),
            data: cfg.node_data,
            last_delay: 0,
            epoch: 0,
            time: 0,
            area: 0.0,
            collected: 0,
            energy: 0.0,
            reward_sum: 0.0,
            done: false,
            cfg,
        };
        w.restart();
        w
    }

    /// Delay of a transmission from `cell`: one step plus its Manhattan
    /// distance to the reference corner.
    pub fn delay_at(cell: [i32; 2]) -> u32 {
        1 + (cell[0] + cell[1]) as u32
    }

    fn restart(&mut self) {
        self.pos = self.cfg.start;
        self.heading = self.cfg.start_heading.rem_euclid(4);
        self.data = self.cfg.node_data;
        self.last_delay = Self::delay_at(self.pos);
        self.epoch = 0;
        self.time = self.last_delay as u64;
        self.area = 0.5 * (self.last_delay as f64).powi(2);
        self.collected = 0;
        self.energy = 0.0;
        self.reward_sum = 0.0;
        self.done = false;
    }

    pub fn observation(&self) -> Vec<f64> {
        let fraction = if self.cfg.node_data == 0 {
            0.0
        } else {
            self.data as f64 / self.cfg.node_data as f64
        };
        vec![
            self.pos[0] as f64,
            self.pos[1] as f64,
            self.heading as f64,
            fraction,
            self.last_delay as f64,
        ]
    }

    fn collect_step(&mut self) -> u32 {
        if self.pos == self.cfg.node && self.data > 0 {
            self.data -= 1;
            1
        } else {
            0
        }
    }

    /// Advances one decision epoch and returns its reward.
    fn epoch_step(&mut self, action: ActionTuple) -> f64 {
        let wait = action.wait.min(1);
        let quarter = (action.turn / FRAC_PI_2).round() as i32;
        let moving = action.speed > 0.0;
        let mut units = 0;
        for _ in 0..wait {
            units += self.collect_step();
        }
        self.heading = (self.heading + quarter.clamp(-1, 1)).rem_euclid(4);
        let delay = Self::delay_at(self.pos);
        let mut energy = self.cfg.comms_cost;
        if moving {
            let (dx, dy) = [(1, 0), (0, 1), (-1, 0), (0, -1)][self.heading as usize];
            let next = [
                (self.pos[0] + dx).clamp(0, Self::SIDE - 1),
                (self.pos[1] + dy).clamp(0, Self::SIDE - 1),
            ];
            if next != self.pos {
                energy += self.cfg.move_cost;
            }
            self.pos = next;
        }
        for _ in 0..delay {
            units += self.collect_step();
        }
        let span = (wait + delay) as f64;
        let area = 0.5 * (2.0 * self.last_delay as f64 + span) * span;
        self.area += area;
        self.time += (wait + delay) as u64;
        self.last_delay = delay;
        self.epoch += 1;
        self.collected += units;
        self.energy += energy;
        let reward = self.cfg.unit_reward * units as f64 - energy - self.cfg.aoi_weight * area;
        self.reward_sum += reward;
        self.done = self.data == 0 || self.epoch >= self.cfg.max_epochs;
        reward
    }
}

impl AgentEnv for MicroWorld {
    fn observation_len(&self) -> usize {
        5
    }

    fn controls_wait(&self) -> bool {
        true
    }

    fn reset(&mut self, _seeds: EpisodeSeeds) -> Result<Vec<(usize, Vec<f64>)>, RlError> {
        self.restart();
        Ok(vec![(0, self.observation())])
    }

    fn step(&mut self, actions: &[(usize, ActionTuple)]) -> Result<ViewStep, RlError> {
        if self.done {
            return Err(crate::env::EnvError::EpisodeDone.into());
        }
        let action = match actions {
            [(0, a)] => *a,
            [] => return Err(crate::env::EnvError::MissingAction(0).into()),
            [(i, _), ..] => return Err(crate::env::EnvError::NotReady(*i).into()),
        };
        let reward = self.epoch_step(action);
        Ok(ViewStep {
            transitions: vec![AgentTransition {
                auv: 0,
                observation: self.observation(),
                reward,
                truncated: false,
            }],
            done: self.done,
        })
    }

    fn is_done(&self) -> bool {
        self.done
    }

    fn episode_stats(&self) -> EpisodeStats {
        EpisodeStats {
            time_avg_aoi: if self.time == 0 { 0.0 } else { self.area / self.time as f64 },
            energy_consumed: self.energy,
            sum_info_rate: if self.time == 0 {
                0.0
            } else {
                self.collected as f64 / self.time as f64
            },
            total_bits: self.collected as u64,
            cumulative_reward: self.reward_sum,
        }
    }
}

/// Exact-state discretizer and the `2 speeds × 3 turns × Z ∈ {0, 1}` grid.
pub fn micro_spaces(cfg: &MicroConfig) -> (super::Discretizer, super::ActionGrid) {
    use super::FeatureBins;
    let side = MicroWorld::SIDE as f64;
    let data_bins = cfg.node_data as usize + 1;
    let max_delay = MicroWorld::delay_at([MicroWorld::SIDE - 1, MicroWorld::SIDE - 1]) as f64;
    let disc = super::Discretizer {
        observation_len: 5,
        features: vec![
            FeatureBins::new(0, -0.5, side - 0.5, MicroWorld::SIDE as usize),
            FeatureBins::new(1, -0.5, side - 0.5, MicroWorld::SIDE as usize),
            FeatureBins::new(2, -0.5, 3.5, 4),
            FeatureBins::new(
                3,
                -0.5 / cfg.node_data.max(1) as f64,
                1.0 + 0.5 / cfg.node_data.max(1) as f64,
                data_bins,
            ),
            FeatureBins::new(4, 0.5, max_delay + 0.5, max_delay as usize),
        ],
    };
    let grid = super::ActionGrid {
        speeds: vec![0.0, 1.0],
        turns: vec![-FRAC_PI_2, 0.0, FRAC_PI_2],
        waits: vec![0, 1],
    };
    (disc, grid)
}
