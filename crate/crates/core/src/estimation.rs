//! Signal-level estimators used for statistical delay modeling.
//!
//! Delay: a known replica `s[k]`, `k < M`, arrives shifted by `Y` samples in
//! white Gaussian noise, `x[n] = s[n - Y] + w[n]` for `n < N`. The estimate is
//! the lag maximizing the replica correlation
//! `J[Y] = sum_{n=Y}^{Y+M-1} x[n] s[n - Y]` over `0 <= Y <= N - M`.
//!
//! Heading: a uniform line of sensors spaced `d` apart sees a tone of
//! frequency `F0` arriving at angle `beta`, which gives the spatial sinusoid
//! `x[n] = A cos(2 pi (F0 d / c) cos(beta) n + phi) + w[n]`. The heading is
//! the grid point in `(0, pi/2)` maximizing the spatial periodogram
//! `I(beta) = |sum_n x[n] exp(-j 2 pi (F0 d / c) cos(beta) n)|^2 / M`.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{seeded, SimRng};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimationError {
    #[error("signal must contain at least one sample")]
    EmptySignal,
    #[error("signal sample {index} is not finite ({value})")]
    NonFiniteSample { index: usize, value: f64 },
    #[error("replica length {replica} exceeds record length {record}")]
    ReplicaTooLong { replica: usize, record: usize },
    #[error("noise variance must be non-negative and finite, got {0}")]
    InvalidNoiseVariance(f64),
    #[error("true delay {delay} outside [0, {max}]")]
    DelayOutOfRange { delay: usize, max: usize },
    #[error("expected a signal of length {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("heading {0} rad is outside (0, pi/2)")]
    HeadingOutOfRange(f64),
    #[error("invalid heading configuration: {0}")]
    InvalidHeadingConfig(&'static str),
    #[error("periodogram is flat; no heading estimate")]
    NoEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct DiscreteSignal {
    samples: Vec<f64>,
}

impl DiscreteSignal {
    pub fn new(samples: Vec<f64>) -> Result<Self, EstimationError> {
        if samples.is_empty() {
            return Err(EstimationError::EmptySignal);
        }
        if let Some((index, &value)) = samples.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(EstimationError::NonFiniteSample { index, value });
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|v| v * v).sum()
    }

    /// Mean power per sample.
    pub fn power(&self) -> f64 {
        self.energy() / self.len() as f64
    }
}

impl TryFrom<Vec<f64>> for DiscreteSignal {
    type Error = EstimationError;

    fn try_from(samples: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(samples)
    }
}

impl From<DiscreteSignal> for Vec<f64> {
    fn from(signal: DiscreteSignal) -> Self {
        signal.samples
    }
}

/// Recipe for the known transmitted sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReplicaKind {
    /// Equiprobable +/-1 chips drawn from `seed`.
    PseudoRandom { length: usize, seed: u64 },
    /// Unit-amplitude linear chirp sweeping normalized frequency
    /// `start` to `end` (cycles/sample).
    Chirp { length: usize, start: f64, end: f64 },
}

impl ReplicaKind {
    pub fn length(&self) -> usize {
        match *self {
            ReplicaKind::PseudoRandom { length, .. } | ReplicaKind::Chirp { length, .. } => length,
        }
    }

    pub fn generate(&self) -> Result<DiscreteSignal, EstimationError> {
        match *self {
            ReplicaKind::PseudoRandom { length, seed } => pseudorandom_sequence(length, seed),
            ReplicaKind::Chirp { length, start, end } => chirp_sequence(length, start, end),
        }
    }
}

impl Default for ReplicaKind {
    fn default() -> Self {
        ReplicaKind::PseudoRandom { length: 64, seed: 0x5d3 }
    }
}

pub fn pseudorandom_sequence(length: usize, seed: u64) -> Result<DiscreteSignal, EstimationError> {
    let mut rng = seeded(seed);
    DiscreteSignal::new(
        (0..length)
            .map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 })
            .collect(),
    )
}

pub fn chirp_sequence(length: usize, start: f64, end: f64) -> Result<DiscreteSignal, EstimationError> {
    let sweep = if length > 1 { (end - start) / (length - 1) as f64 } else { 0.0 };
    DiscreteSignal::new(
        (0..length)
            .map(|n| {
                let n = n as f64;
                (2.0 * PI * (start * n + 0.5 * sweep * n * n)).cos()
            })
            .collect(),
    )
}

fn add_noise(samples: &mut [f64], variance: f64, rng: &mut SimRng) {
    if variance == 0.0 {
        return;
    }
    let normal = Normal::new(0.0, variance.sqrt()).expect("finite standard deviation");
    for s in samples {
        *s += normal.sample(rng);
    }
}

fn validate_variance(variance: f64) -> Result<(), EstimationError> {
    if variance.is_finite() && variance >= 0.0 {
        Ok(())
    } else {
        Err(EstimationError::InvalidNoiseVariance(variance))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayEstConfig {
    known_sequence: DiscreteSignal,
    record_length: usize,
    noise_variance: f64,
}

impl DelayEstConfig {
    pub fn new(
        known_sequence: DiscreteSignal,
        record_length: usize,
        noise_variance: f64,
    ) -> Result<Self, EstimationError> {
        if known_sequence.len() > record_length {
            return Err(EstimationError::ReplicaTooLong {
                replica: known_sequence.len(),
                record: record_length,
            });
        }
        validate_variance(noise_variance)?;
        Ok(Self {
            known_sequence,
            record_length,
            noise_variance,
        })
    }

    pub fn known_sequence(&self) -> &DiscreteSignal {
        &self.known_sequence
    }

    pub fn replica_length(&self) -> usize {
        self.known_sequence.len()
    }

    pub fn record_length(&self) -> usize {
        self.record_length
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    /// Largest admissible delay, `N - M`.
    pub fn max_delay(&self) -> usize {
        self.record_length - self.known_sequence.len()
    }

    pub fn with_noise_variance(&self, noise_variance: f64) -> Result<Self, EstimationError> {
        validate_variance(noise_variance)?;
        Ok(Self {
            noise_variance,
            ..self.clone()
        })
    }

    /// Noise variance giving per-sample SNR `snr` against the replica power.
    pub fn variance_for_snr(&self, snr: f64) -> f64 {
        self.known_sequence.power() / snr
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DelayEstimate {
    pub estimate: usize,
    pub statistic_curve: Vec<(usize, f64)>,
}

pub fn synthesize_delayed_observation(
    cfg: &DelayEstConfig,
    true_delay: usize,
    seed: u64,
) -> Result<DiscreteSignal, EstimationError> {
    if true_delay > cfg.max_delay() {
        return Err(EstimationError::DelayOutOfRange {
            delay: true_delay,
            max: cfg.max_delay(),
        });
    }
    let mut samples = vec![0.0; cfg.record_length];
    samples[true_delay..true_delay + cfg.replica_length()]
        .copy_from_slice(cfg.known_sequence.samples());
    add_noise(&mut samples, cfg.noise_variance, &mut seeded(seed));
    DiscreteSignal::new(samples)
}

pub fn correlation_statistic(
    cfg: &DelayEstConfig,
    observed: &DiscreteSignal,
) -> Result<Vec<(usize, f64)>, EstimationError> {
    if observed.len() != cfg.record_length {
        return Err(EstimationError::LengthMismatch {
            expected: cfg.record_length,
            actual: observed.len(),
        });
    }
    let replica = cfg.known_sequence.samples();
    Ok(observed
        .samples()
        .windows(replica.len())
        .enumerate()
        .map(|(lag, window)| {
            let score = window.iter().zip(replica).map(|(x, s)| x * s).sum();
            (lag, score)
        })
        .collect())
}

/// Lag of the correlation peak; the smallest lag wins ties.
pub fn estimate_delay(
    cfg: &DelayEstConfig,
    observed: &DiscreteSignal,
) -> Result<DelayEstimate, EstimationError> {
    let statistic_curve = correlation_statistic(cfg, observed)?;
    let mut best = statistic_curve[0];
    for &(lag, score) in &statistic_curve[1..] {
        if score > best.1 {
            best = (lag, score);
        }
    }
    Ok(DelayEstimate {
        estimate: best.0,
        statistic_curve,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeadingConfig {
    pub amplitude: f64,
    /// Carrier frequency `F0`, Hz.
    pub carrier_frequency: f64,
    /// Sensor spacing `d`, meters.
    pub sensor_spacing: f64,
    /// Propagation speed `c`, m/s.
    pub propagation_speed: f64,
    pub phase: f64,
    pub sample_count: usize,
    pub noise_variance: f64,
    /// Step of the heading grid, radians.
    pub grid_resolution: f64,
    /// Parabolic refinement around the grid peak.
    pub refine: bool,
}

impl Default for HeadingConfig {
    fn default() -> Self {
        // F0 d / c = 6 kHz * 0.0625 m / 1500 m/s = 0.25 cycles per sensor
        Self {
            amplitude: 1.0,
            carrier_frequency: 6000.0,
            sensor_spacing: 0.0625,
            propagation_speed: 1500.0,
            phase: 0.0,
            sample_count: 256,
            noise_variance: 0.0,
            grid_resolution: 1e-3,
            refine: true,
        }
    }
}

impl HeadingConfig {
    pub fn validate(&self) -> Result<(), EstimationError> {
        use EstimationError::InvalidHeadingConfig as Bad;
        if !(self.amplitude.is_finite() && self.amplitude > 0.0) {
            return Err(Bad("amplitude must be positive"));
        }
        if !(self.carrier_frequency > 0.0 && self.sensor_spacing > 0.0 && self.propagation_speed > 0.0) {
            return Err(Bad("carrier frequency, sensor spacing and propagation speed must be positive"));
        }
        if !self.phase.is_finite() {
            return Err(Bad("phase must be finite"));
        }
        if !(self.normalized_spacing() <= 0.5) {
            return Err(Bad("F0 d / c must not exceed 0.5 cycles per sensor"));
        }
        if self.sample_count == 0 {
            return Err(Bad("sample count must be positive"));
        }
        if !(self.grid_resolution > 0.0 && self.grid_resolution < FRAC_PI_2) {
            return Err(Bad("grid resolution must lie in (0, pi/2)"));
        }
        validate_variance(self.noise_variance)
    }

    /// `F0 d / c`, cycles per sensor at broadside-to-endfire projection one.
    pub fn normalized_spacing(&self) -> f64 {
        self.carrier_frequency * self.sensor_spacing / self.propagation_speed
    }

    pub fn spatial_frequency(&self, heading: f64) -> f64 {
        self.normalized_spacing() * heading.cos()
    }

    /// Interior grid `k * resolution`, `k >= 1`, strictly below pi/2.
    pub fn heading_grid(&self) -> Vec<f64> {
        (1..)
            .map(|k| k as f64 * self.grid_resolution)
            .take_while(|&b| b < FRAC_PI_2)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeadingEstimate {
    pub estimate: f64,
    /// Grid index of the periodogram maximum.
    pub peak_index: usize,
    pub statistic_curve: Vec<(f64, f64)>,
}

fn check_heading(heading: f64) -> Result<(), EstimationError> {
    if heading > 0.0 && heading < FRAC_PI_2 {
        Ok(())
    } else {
        Err(EstimationError::HeadingOutOfRange(heading))
    }
}

pub fn synthesize_heading_signal(
    cfg: &HeadingConfig,
    heading: f64,
    seed: u64,
) -> Result<DiscreteSignal, EstimationError> {
    cfg.validate()?;
    check_heading(heading)?;
    let f = cfg.spatial_frequency(heading);
    let mut samples: Vec<f64> = (0..cfg.sample_count)
        .map(|n| cfg.amplitude * (2.0 * PI * f * n as f64 + cfg.phase).cos())
        .collect();
    add_noise(&mut samples, cfg.noise_variance, &mut seeded(seed));
    DiscreteSignal::new(samples)
}

fn periodogram_at(samples: &[f64], frequency: f64) -> f64 {
    let (mut re, mut im) = (0.0, 0.0);
    for (n, x) in samples.iter().enumerate() {
        // reduce the phase to one cycle before taking sin/cos
        let (s, c) = (2.0 * PI * (frequency * n as f64).fract()).sin_cos();
        re += x * c;
        im -= x * s;
    }
    (re * re + im * im) / samples.len() as f64
}

pub fn spatial_periodogram(
    cfg: &HeadingConfig,
    signal: &DiscreteSignal,
) -> Result<Vec<(f64, f64)>, EstimationError> {
    cfg.validate()?;
    if signal.len() != cfg.sample_count {
        return Err(EstimationError::LengthMismatch {
            expected: cfg.sample_count,
            actual: signal.len(),
        });
    }
    Ok(cfg
        .heading_grid()
        .into_iter()
        .map(|b| (b, periodogram_at(signal.samples(), cfg.spatial_frequency(b))))
        .collect())
}

pub fn estimate_heading(
    cfg: &HeadingConfig,
    signal: &DiscreteSignal,
) -> Result<HeadingEstimate, EstimationError> {
    let statistic_curve = spatial_periodogram(cfg, signal)?;
    let mut peak_index = 0;
    for (i, &(_, v)) in statistic_curve.iter().enumerate() {
        if v > statistic_curve[peak_index].1 {
            peak_index = i;
        }
    }
    let peak = statistic_curve[peak_index].1;
    if !(peak > 0.0) || statistic_curve.iter().all(|&(_, v)| v == peak) {
        return Err(EstimationError::NoEstimate);
    }
    let mut estimate = statistic_curve[peak_index].0;
    if cfg.refine && peak_index > 0 && peak_index + 1 < statistic_curve.len() {
        let left = statistic_curve[peak_index - 1].1;
        let right = statistic_curve[peak_index + 1].1;
        let curvature = left - 2.0 * peak + right;
        if curvature < 0.0 {
            let offset = (0.5 * (left - right) / curvature).clamp(-0.5, 0.5);
            estimate += offset * cfg.grid_resolution;
        }
    }
    let estimate = estimate.clamp(f64::MIN_POSITIVE, FRAC_PI_2 - f64::EPSILON);
    Ok(HeadingEstimate {
        estimate,
        peak_index,
        statistic_curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn delay_cfg(m: usize, n: usize, variance: f64) -> DelayEstConfig {
        DelayEstConfig::new(pseudorandom_sequence(m, 11).unwrap(), n, variance).unwrap()
    }

    #[test]
    fn signal_validation() {
        assert_eq!(DiscreteSignal::new(vec![]), Err(EstimationError::EmptySignal));
        assert!(matches!(
            DiscreteSignal::new(vec![1.0, f64::NAN]),
            Err(EstimationError::NonFiniteSample { index: 1, .. })
        ));
    }

    #[test]
    fn replica_longer_than_record_is_rejected() {
        let r = DelayEstConfig::new(pseudorandom_sequence(8, 1).unwrap(), 4, 0.0);
        assert!(matches!(r, Err(EstimationError::ReplicaTooLong { .. })));
    }

    #[test]
    fn noiseless_placement() {
        let cfg = delay_cfg(16, 40, 0.0);
        let x = synthesize_delayed_observation(&cfg, 0, 1).unwrap();
        assert_eq!(&x.samples()[..16], cfg.known_sequence().samples());
        assert!(x.samples()[16..].iter().all(|&v| v == 0.0));

        let x = synthesize_delayed_observation(&cfg, 5, 1).unwrap();
        assert!(x.samples()[..5].iter().all(|&v| v == 0.0));
        assert_eq!(&x.samples()[5..21], cfg.known_sequence().samples());
    }

    #[test]
    fn delay_out_of_range_is_rejected() {
        let cfg = delay_cfg(16, 40, 0.0);
        assert_eq!(
            synthesize_delayed_observation(&cfg, 25, 0),
            Err(EstimationError::DelayOutOfRange { delay: 25, max: 24 })
        );
    }

    #[test]
    fn impulse_correlation() {
        let cfg = DelayEstConfig::new(DiscreteSignal::new(vec![1.0]).unwrap(), 12, 0.0).unwrap();
        let mut x = vec![0.0; 12];
        x[7] = 1.0;
        let curve = correlation_statistic(&cfg, &DiscreteSignal::new(x).unwrap()).unwrap();
        assert_eq!(curve.len(), 12);
        for (lag, score) in curve {
            assert_eq!(score, if lag == 7 { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn correlation_rejects_wrong_length() {
        let cfg = delay_cfg(4, 10, 0.0);
        let x = DiscreteSignal::new(vec![0.0; 9]).unwrap();
        assert_eq!(
            correlation_statistic(&cfg, &x),
            Err(EstimationError::LengthMismatch { expected: 10, actual: 9 })
        );
    }

    #[test]
    fn zero_replica_ties_break_to_zero_lag() {
        let cfg = DelayEstConfig::new(DiscreteSignal::new(vec![0.0; 8]).unwrap(), 32, 0.0).unwrap();
        let x = synthesize_delayed_observation(&cfg.with_noise_variance(1.0).unwrap(), 3, 9).unwrap();
        let est = estimate_delay(&cfg, &x).unwrap();
        assert_eq!(est.estimate, 0);
        assert!(est.statistic_curve.iter().all(|&(_, s)| s == 0.0));
    }

    #[test]
    fn chirp_replica_also_localizes() {
        let cfg = DelayEstConfig::new(chirp_sequence(64, 0.02, 0.45).unwrap(), 200, 0.0).unwrap();
        for y in [0, 17, 136] {
            let x = synthesize_delayed_observation(&cfg, y, 0).unwrap();
            assert_eq!(estimate_delay(&cfg, &x).unwrap().estimate, y);
        }
    }

    #[test]
    fn heading_near_endfire_is_nearly_constant() {
        let cfg = HeadingConfig { phase: 0.3, ..HeadingConfig::default() };
        let x = synthesize_heading_signal(&cfg, FRAC_PI_2 - 1e-9, 0).unwrap();
        let expected = cfg.amplitude * cfg.phase.cos();
        assert!(x.samples().iter().all(|v| (v - expected).abs() < 1e-6));
    }

    #[test]
    fn heading_samples_match_formula() {
        let cfg = HeadingConfig { amplitude: 2.5, phase: -0.7, sample_count: 64, ..HeadingConfig::default() };
        let beta = 0.9;
        let x = synthesize_heading_signal(&cfg, beta, 3).unwrap();
        let f = 6000.0 * 0.0625 / 1500.0 * beta.cos();
        for (n, v) in x.samples().iter().enumerate() {
            let direct = 2.5 * (2.0 * PI * f * n as f64 - 0.7).cos();
            assert!((v - direct).abs() <= 1e-15 * 2.5 * (n as f64 + 1.0));
        }
    }

    #[test]
    fn heading_signal_is_reproducible() {
        let cfg = HeadingConfig { noise_variance: 0.5, ..HeadingConfig::default() };
        let a = synthesize_heading_signal(&cfg, 0.4, 99).unwrap();
        let b = synthesize_heading_signal(&cfg, 0.4, 99).unwrap();
        let bits = |s: &DiscreteSignal| s.samples().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn heading_outside_open_interval_is_rejected() {
        let cfg = HeadingConfig::default();
        for b in [0.0, FRAC_PI_2, -0.1, 2.0] {
            assert_eq!(
                synthesize_heading_signal(&cfg, b, 0),
                Err(EstimationError::HeadingOutOfRange(b))
            );
        }
    }

    #[test]
    fn aliasing_configuration_is_rejected() {
        let cfg = HeadingConfig { sensor_spacing: 0.2, ..HeadingConfig::default() };
        assert!(matches!(cfg.validate(), Err(EstimationError::InvalidHeadingConfig(_))));
    }

    #[test]
    fn zero_signal_has_flat_periodogram_and_no_estimate() {
        let cfg = HeadingConfig::default();
        let x = DiscreteSignal::new(vec![0.0; cfg.sample_count]).unwrap();
        assert!(spatial_periodogram(&cfg, &x).unwrap().iter().all(|&(_, v)| v == 0.0));
        assert_eq!(estimate_heading(&cfg, &x), Err(EstimationError::NoEstimate));
    }

    #[test]
    fn grid_stays_inside_open_quadrant() {
        let grid = HeadingConfig::default().heading_grid();
        assert_eq!(grid.len(), 1570);
        assert!(grid[0] > 0.0 && *grid.last().unwrap() < FRAC_PI_2);
    }

    #[test]
    fn noiseless_quarter_pi() {
        let cfg = HeadingConfig::default();
        let beta = PI / 4.0;
        let x = synthesize_heading_signal(&cfg, beta, 0).unwrap();
        let est = estimate_heading(&cfg, &x).unwrap();
        assert!((est.estimate - beta).abs() <= cfg.grid_resolution);
        assert!(est.estimate > 0.0 && est.estimate < FRAC_PI_2);
    }
}
