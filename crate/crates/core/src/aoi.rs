//! Age-of-information accounting over an update timeline.
//!
//! An update `i` is transmitted at `T_i` and received at `D_i = T_i + Y_i`.
//! The next transmission happens `Z_i` after the reception, so
//! `T_{i+1} = D_i + Z_i`. Between receptions the age grows with slope one and
//! drops to `Y_i` at every reception, giving the familiar sawtooth.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AoiError {
    #[error("time must be non-negative and finite, got {0}")]
    NegativeTime(f64),
    #[error("observation delay must be positive and finite, got {0}")]
    NonPositiveDelay(f64),
    #[error("wait time must be non-negative and finite, got {0}")]
    NegativeWait(f64),
    #[error("initial age must be non-negative and finite, got {0}")]
    NegativeInitialAge(f64),
    #[error("the first update is transmitted at t = 0; a leading wait of {0} is not representable")]
    LeadingWait(f64),
    #[error("timeline has no updates")]
    EmptyTimeline,
    #[error("timeline horizon is zero")]
    ZeroHorizon,
    #[error("integration step must be positive and finite, got {0}")]
    NonPositiveStep(f64),
}

/// One observation signal: transmitted at `transmit_time`, received `delay`
/// later, followed by `wait_after` before the next transmission.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateRecord {
    pub transmit_time: f64,
    pub delay: f64,
    pub wait_after: f64,
}

impl UpdateRecord {
    pub fn reception_time(&self) -> f64 {
        self.transmit_time + self.delay
    }
}

/// Which expression is used for the time-averaged age.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AoiFormula {
    /// Total sawtooth area divided by the horizon.
    #[default]
    Exact,
    /// `(sum of (2Y_{i-1} + Y_i + Z_{i-1})(Y_i + Z_{i-1}) + S0) / (2 * horizon)`
    /// exactly as printed, where `S0` already carries its own factor 0.5.
    PaperLiteral,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AoiSummary {
    #[serde(rename = "delta_bar")]
    pub time_avg_aoi: f64,
    pub total_area: f64,
    pub horizon: f64,
    /// Receptions after the initial one.
    #[serde(rename = "n_updates")]
    pub update_count: usize,
}

/// Ordered transmit/receive epochs plus the age at `t = 0`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct UpdateTimeline {
    initial_age: f64,
    updates: Vec<UpdateRecord>,
}

impl UpdateTimeline {
    pub fn new(initial_age: f64) -> Result<Self, AoiError> {
        if !(initial_age.is_finite() && initial_age >= 0.0) {
            return Err(AoiError::NegativeInitialAge(initial_age));
        }
        Ok(Self {
            initial_age,
            updates: Vec::new(),
        })
    }

    /// Builds a timeline from `(delay, wait_before)` pairs; the wait of the
    /// first pair must be zero.
    pub fn from_pairs(
        initial_age: f64,
        pairs: impl IntoIterator<Item = (f64, f64)>,
    ) -> Result<Self, AoiError> {
        let mut timeline = Self::new(initial_age)?;
        for (delay, wait_before) in pairs {
            timeline.append_update(delay, wait_before)?;
        }
        Ok(timeline)
    }

    pub fn initial_age(&self) -> f64 {
        self.initial_age
    }

    pub fn updates(&self) -> &[UpdateRecord] {
        &self.updates
    }

    pub fn len(&self) -> usize {
        self.updates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.updates.is_empty()
    }

    /// Time of the latest reception, or zero for an empty timeline.
    pub fn last_reception(&self) -> f64 {
        self.updates.last().map_or(0.0, UpdateRecord::reception_time)
    }

    /// Appends an update received `delay` after a transmission that happens
    /// `wait_before` after the previous reception.
    pub fn append_update(&mut self, delay: f64, wait_before: f64) -> Result<(), AoiError> {
        if !(delay.is_finite() && delay > 0.0) {
            return Err(AoiError::NonPositiveDelay(delay));
        }
        if !(wait_before.is_finite() && wait_before >= 0.0) {
            return Err(AoiError::NegativeWait(wait_before));
        }
        let transmit_time = match self.updates.last_mut() {
            Some(prev) => {
                prev.wait_after = wait_before;
                prev.reception_time() + wait_before
            }
            None if wait_before == 0.0 => 0.0,
            None => return Err(AoiError::LeadingWait(wait_before)),
        };
        self.updates.push(UpdateRecord {
            transmit_time,
            delay,
            wait_after: 0.0,
        });
        Ok(())
    }

    /// Consuming variant of [`append_update`](Self::append_update).
    pub fn with_update(mut self, delay: f64, wait_before: f64) -> Result<Self, AoiError> {
        self.append_update(delay, wait_before)?;
        Ok(self)
    }

    /// Age at time `t`: `t - T_i` for the latest reception `D_i <= t`, and
    /// `initial_age + t` before the first reception. Past the last reception
    /// the age keeps growing.
    pub fn instantaneous_aoi(&self, t: f64) -> Result<f64, AoiError> {
        if !(t.is_finite() && t >= 0.0) {
            return Err(AoiError::NegativeTime(t));
        }
        let received = self.updates.partition_point(|u| u.reception_time() <= t);
        Ok(match received {
            0 => self.initial_age + t,
            n => t - self.updates[n - 1].transmit_time,
        })
    }

    pub fn time_averaged_aoi(&self) -> Result<AoiSummary, AoiError> {
        self.time_averaged_aoi_with(AoiFormula::Exact)
    }

    pub fn time_averaged_aoi_with(&self, formula: AoiFormula) -> Result<AoiSummary, AoiError> {
        let mut acc = AoiAccumulator::new(self.initial_age)?;
        let mut prev_wait = 0.0;
        for u in &self.updates {
            acc.push(u.delay, prev_wait)?;
            prev_wait = u.wait_after;
        }
        acc.summary_with(formula)
    }

    /// Trapezoid-rule average of [`instantaneous_aoi`](Self::instantaneous_aoi)
    /// over `[0, last reception]`.
    pub fn integrate_sawtooth(&self, dt: f64) -> Result<f64, AoiError> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(AoiError::NonPositiveStep(dt));
        }
        if self.updates.is_empty() {
            return Err(AoiError::EmptyTimeline);
        }
        let horizon = self.last_reception();
        if horizon <= 0.0 {
            return Err(AoiError::ZeroHorizon);
        }
        let steps = (horizon / dt).ceil().max(1.0) as u64;
        let mut area = 0.0;
        let mut t0 = 0.0;
        let mut a0 = self.instantaneous_aoi(0.0)?;
        for k in 1..=steps {
            let t1 = if k == steps { horizon } else { k as f64 * dt };
            let a1 = self.instantaneous_aoi(t1)?;
            area += 0.5 * (a0 + a1) * (t1 - t0);
            t0 = t1;
            a0 = a1;
        }
        Ok(area / horizon)
    }
}

/// Running form of the closed-form time average. Pushing the timeline's
/// updates in order reproduces [`UpdateTimeline::time_averaged_aoi`]
/// bit-for-bit, which lets a simulator track the average incrementally.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AoiAccumulator {
    initial_age: f64,
    first_delay: Option<f64>,
    last_delay: f64,
    initial_area: f64,
    segment_area: f64,
    literal_segment_sum: f64,
    horizon: f64,
    updates: usize,
}

impl AoiAccumulator {
    pub fn new(initial_age: f64) -> Result<Self, AoiError> {
        if !(initial_age.is_finite() && initial_age >= 0.0) {
            return Err(AoiError::NegativeInitialAge(initial_age));
        }
        Ok(Self {
            initial_age,
            first_delay: None,
            last_delay: 0.0,
            initial_area: 0.0,
            segment_area: 0.0,
            literal_segment_sum: 0.0,
            horizon: 0.0,
            updates: 0,
        })
    }

    /// Adds a reception with delay `delay` whose transmission waited
    /// `wait_before` after the previous reception.
    pub fn push(&mut self, delay: f64, wait_before: f64) -> Result<(), AoiError> {
        if !(delay.is_finite() && delay > 0.0) {
            return Err(AoiError::NonPositiveDelay(delay));
        }
        if !(wait_before.is_finite() && wait_before >= 0.0) {
            return Err(AoiError::NegativeWait(wait_before));
        }
        match self.first_delay {
            None => {
                if wait_before != 0.0 {
                    return Err(AoiError::LeadingWait(wait_before));
                }
                self.first_delay = Some(delay);
                self.initial_area = 0.5 * (2.0 * self.initial_age + delay) * delay;
                self.horizon = delay;
            }
            Some(_) => {
                let span = delay + wait_before;
                let product = (2.0 * self.last_delay + delay + wait_before) * span;
                self.segment_area += 0.5 * product;
                self.literal_segment_sum += product;
                self.horizon += span;
                self.updates += 1;
            }
        }
        self.last_delay = delay;
        Ok(())
    }

    pub fn summary(&self) -> Result<AoiSummary, AoiError> {
        self.summary_with(AoiFormula::Exact)
    }

    pub fn summary_with(&self, formula: AoiFormula) -> Result<AoiSummary, AoiError> {
        if self.first_delay.is_none() {
            return Err(AoiError::EmptyTimeline);
        }
        if self.horizon <= 0.0 {
            return Err(AoiError::ZeroHorizon);
        }
        let (total_area, time_avg_aoi) = match formula {
            AoiFormula::Exact => {
                let area = self.segment_area + self.initial_area;
                (area, area / self.horizon)
            }
            AoiFormula::PaperLiteral => {
                let numerator = self.literal_segment_sum + self.initial_area;
                (0.5 * numerator, numerator / (2.0 * self.horizon))
            }
        };
        Ok(AoiSummary {
            time_avg_aoi,
            total_area,
            horizon: self.horizon,
            update_count: self.updates,
        })
    }
}
