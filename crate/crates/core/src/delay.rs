//! Observation-delay models.
//!
//! All delays are expressed in environment steps and are strictly positive.
//! The SDM variant derives the delay from a signal: the true propagation
//! delay of a replica over the AUV's link distance is quantized to samples,
//! buried in noise, and recovered with the replica-correlation estimator, so
//! estimator error becomes observation delay.

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Exp, Geometric, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimation::{
    estimate_delay, synthesize_delayed_observation, DelayEstConfig, EstimationError, ReplicaKind,
};
use crate::rng::{seeded, SimRng};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DelayError {
    #[error("invalid delay model parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
}

/// How the per-sample SNR of the SDM link is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SnrPolicy {
    Noiseless,
    /// Per-sample SNR independent of range.
    Fixed { snr: f64 },
    /// `snr = reference_snr * (reference_distance / distance)^2`.
    RangeDependent { reference_snr: f64, reference_distance: f64 },
}

impl SnrPolicy {
    pub fn snr_at(&self, distance: f64) -> Option<f64> {
        match *self {
            SnrPolicy::Noiseless => None,
            SnrPolicy::Fixed { snr } => Some(snr),
            SnrPolicy::RangeDependent {
                reference_snr,
                reference_distance,
            } => {
                let ratio = reference_distance / distance.max(f64::MIN_POSITIVE);
                Some(reference_snr * ratio * ratio)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SdmDelay {
    pub replica: ReplicaKind,
    /// Record length `N`; delays up to `N - M` samples are resolvable.
    pub record_length: usize,
    /// Link propagation speed, m/s.
    pub propagation_speed: f64,
    /// Seconds per sample. One sample is one environment step.
    pub sample_period: f64,
    pub snr: SnrPolicy,
    /// Distance used when no context is supplied, meters.
    pub nominal_distance: f64,
}

impl Default for SdmDelay {
    fn default() -> Self {
        Self {
            replica: ReplicaKind::default(),
            record_length: 96,
            propagation_speed: 150.0,
            sample_period: 1.0,
            snr: SnrPolicy::RangeDependent {
                reference_snr: 1.0,
                reference_distance: 500.0,
            },
            nominal_distance: 750.0,
        }
    }
}

impl SdmDelay {
    /// Propagation delay over `distance` in (fractional) samples.
    pub fn propagation_samples(&self, distance: f64) -> f64 {
        distance / self.propagation_speed / self.sample_period
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DelayModel {
    Sdm(SdmDelay),
    Exponential { rate: f64 },
    Poisson { mean: f64 },
    /// Number of Bernoulli trials up to and including the first success.
    Geometric { success: f64 },
    Constant { steps: f64 },
}

impl Default for DelayModel {
    fn default() -> Self {
        DelayModel::Sdm(SdmDelay::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayModelKind {
    Sdm,
    Poisson,
    Exponential,
    Geometric,
    Constant,
}

impl DelayModelKind {
    pub const ALL: [DelayModelKind; 5] = [
        DelayModelKind::Sdm,
        DelayModelKind::Poisson,
        DelayModelKind::Exponential,
        DelayModelKind::Geometric,
        DelayModelKind::Constant,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            DelayModelKind::Sdm => "sdm",
            DelayModelKind::Poisson => "poisson",
            DelayModelKind::Exponential => "exponential",
            DelayModelKind::Geometric => "geometric",
            DelayModelKind::Constant => "constant",
        }
    }
}

impl fmt::Display for DelayModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for DelayModelKind {
    type Err = DelayError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| DelayError::InvalidParameter(format!("unknown delay model `{s}`")))
    }
}

fn positive(name: &str, v: f64) -> Result<(), DelayError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(DelayError::InvalidParameter(format!("{name} must be positive, got {v}")))
    }
}

impl DelayModel {
    pub fn kind(&self) -> DelayModelKind {
        match self {
            DelayModel::Sdm(_) => DelayModelKind::Sdm,
            DelayModel::Exponential { .. } => DelayModelKind::Exponential,
            DelayModel::Poisson { .. } => DelayModelKind::Poisson,
            DelayModel::Geometric { .. } => DelayModelKind::Geometric,
            DelayModel::Constant { .. } => DelayModelKind::Constant,
        }
    }

    /// A parametric model of `kind` whose mean delay is `mean` steps. For
    /// `Sdm` the given SDM link is returned with its nominal distance set so
    /// that its propagation delay equals `mean`.
    pub fn mean_matched(kind: DelayModelKind, mean: f64, sdm: &SdmDelay) -> Result<Self, DelayError> {
        positive("mean delay", mean)?;
        let model = match kind {
            DelayModelKind::Sdm => DelayModel::Sdm(SdmDelay {
                nominal_distance: mean * sdm.propagation_speed * sdm.sample_period,
                ..sdm.clone()
            }),
            DelayModelKind::Exponential => DelayModel::Exponential { rate: 1.0 / mean },
            DelayModelKind::Poisson => DelayModel::Poisson { mean },
            DelayModelKind::Geometric => DelayModel::Geometric {
                success: (1.0 / mean).min(1.0),
            },
            DelayModelKind::Constant => DelayModel::Constant { steps: mean.max(1.0) },
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<(), DelayError> {
        match self {
            DelayModel::Sdm(s) => {
                positive("propagation speed", s.propagation_speed)?;
                positive("sample period", s.sample_period)?;
                positive("nominal distance", s.nominal_distance)?;
                if s.replica.length() == 0 || s.replica.length() > s.record_length {
                    return Err(DelayError::InvalidParameter(format!(
                        "replica length {} must be in [1, record length {}]",
                        s.replica.length(),
                        s.record_length
                    )));
                }
                match s.snr {
                    SnrPolicy::Noiseless => {}
                    SnrPolicy::Fixed { snr } => positive("snr", snr)?,
                    SnrPolicy::RangeDependent {
                        reference_snr,
                        reference_distance,
                    } => {
                        positive("reference snr", reference_snr)?;
                        positive("reference distance", reference_distance)?;
                    }
                }
                Ok(())
            }
            DelayModel::Exponential { rate } => positive("exponential rate", *rate),
            DelayModel::Poisson { mean } => positive("poisson mean", *mean),
            DelayModel::Geometric { success } => {
                if *success > 0.0 && *success <= 1.0 {
                    Ok(())
                } else {
                    Err(DelayError::InvalidParameter(format!(
                        "geometric success probability must be in (0, 1], got {success}"
                    )))
                }
            }
            DelayModel::Constant { steps } => {
                if steps.is_finite() && *steps >= 1.0 {
                    Ok(())
                } else {
                    Err(DelayError::InvalidParameter(format!(
                        "constant delay must be at least one step, got {steps}"
                    )))
                }
            }
        }
    }

    /// Analytic mean before the zero-to-one-step mapping; the SDM link
    /// reports the propagation delay at its nominal distance.
    pub fn mean_delay(&self) -> f64 {
        match self {
            DelayModel::Sdm(s) => s.propagation_samples(s.nominal_distance),
            DelayModel::Exponential { rate } => 1.0 / rate,
            DelayModel::Poisson { mean } => *mean,
            DelayModel::Geometric { success } => 1.0 / success,
            DelayModel::Constant { steps } => *steps,
        }
    }

    /// Mean of the delays actually drawn. Only the Poisson model differs
    /// from [`mean_delay`](Self::mean_delay): zero draws become one step,
    /// which adds `P(0) = exp(-mean)`.
    pub fn effective_mean_delay(&self) -> f64 {
        match self {
            DelayModel::Poisson { mean } => mean + (-mean).exp(),
            other => other.mean_delay(),
        }
    }
}

/// Side information for a draw.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DelayContext {
    /// Link distance, meters.
    pub distance: f64,
}

/// Validated, ready-to-sample delay model.
#[derive(Debug, Clone)]
pub struct DelaySampler {
    model: DelayModel,
    kernel: Kernel,
}

#[derive(Debug, Clone)]
enum Kernel {
    Sdm(DelayEstConfig),
    Exponential(Exp<f64>),
    Poisson(Poisson<f64>),
    Geometric(Geometric),
    Constant(f64),
}

impl DelaySampler {
    pub fn new(model: &DelayModel) -> Result<Self, DelayError> {
        model.validate()?;
        let bad = |e: &dyn fmt::Display| DelayError::InvalidParameter(e.to_string());
        let kernel = match model {
            DelayModel::Sdm(s) => {
                Kernel::Sdm(DelayEstConfig::new(s.replica.generate()?, s.record_length, 0.0)?)
            }
            DelayModel::Exponential { rate } => Kernel::Exponential(Exp::new(*rate).map_err(|e| bad(&e))?),
            DelayModel::Poisson { mean } => Kernel::Poisson(Poisson::new(*mean).map_err(|e| bad(&e))?),
            DelayModel::Geometric { success } => {
                Kernel::Geometric(Geometric::new(*success).map_err(|e| bad(&e))?)
            }
            DelayModel::Constant { steps } => Kernel::Constant(*steps),
        };
        Ok(Self {
            model: model.clone(),
            kernel,
        })
    }

    pub fn model(&self) -> &DelayModel {
        &self.model
    }

    /// Largest delay the model can emit, if bounded.
    pub fn max_delay(&self) -> Option<f64> {
        match &self.kernel {
            Kernel::Sdm(cfg) => Some(cfg.max_delay().max(1) as f64),
            Kernel::Constant(steps) => Some(*steps),
            _ => None,
        }
    }

    /// Draws one strictly positive delay in steps.
    pub fn sample(&self, rng: &mut SimRng, context: Option<DelayContext>) -> Result<f64, DelayError> {
        let delay = match &self.kernel {
            Kernel::Sdm(base) => {
                let DelayModel::Sdm(link) = &self.model else {
                    unreachable!("kernel built from model")
                };
                let distance = context.map_or(link.nominal_distance, |c| c.distance);
                let true_delay = (link.propagation_samples(distance).round() as usize).min(base.max_delay());
                let variance = link.snr.snr_at(distance).map_or(0.0, |snr| base.variance_for_snr(snr));
                let cfg = base.with_noise_variance(variance)?;
                let observed = synthesize_delayed_observation(&cfg, true_delay, rng.gen())?;
                estimate_delay(&cfg, &observed)?.estimate.max(1) as f64
            }
            Kernel::Exponential(d) => d.sample(rng).max(f64::MIN_POSITIVE),
            Kernel::Poisson(d) => d.sample(rng).max(1.0),
            Kernel::Geometric(d) => (d.sample(rng) + 1) as f64,
            Kernel::Constant(steps) => *steps,
        };
        Ok(delay)
    }

    pub fn sample_seeded(&self, seed: u64, context: Option<DelayContext>) -> Result<f64, DelayError> {
        self.sample(&mut seeded(seed), context)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_is_constant() {
        let s = DelaySampler::new(&DelayModel::Constant { steps: 3.0 }).unwrap();
        let mut rng = seeded(1);
        for _ in 0..100 {
            assert_eq!(s.sample(&mut rng, None).unwrap(), 3.0);
        }
    }

    #[test]
    fn exponential_mean() {
        let s = DelaySampler::new(&DelayModel::Exponential { rate: 1.0 }).unwrap();
        let mut rng = seeded(2024);
        let n = 100_000;
        let mean: f64 = (0..n).map(|_| s.sample(&mut rng, None).unwrap()).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.02, "{mean}");
    }

    #[test]
    fn noiseless_sdm_returns_rounded_propagation_delay() {
        let link = SdmDelay {
            snr: SnrPolicy::Noiseless,
            ..SdmDelay::default()
        };
        let s = DelaySampler::new(&DelayModel::Sdm(link.clone())).unwrap();
        let mut rng = seeded(0);
        for distance in [10.0, 160.0, 700.0, 1234.5, 3000.0, 4800.0] {
            let expected = (distance / link.propagation_speed / link.sample_period).round().max(1.0);
            let got = s.sample(&mut rng, Some(DelayContext { distance })).unwrap();
            assert_eq!(got, expected, "distance {distance}");
        }
        // beyond N - M samples the link saturates
        let far = s.sample(&mut rng, Some(DelayContext { distance: 9000.0 })).unwrap();
        assert_eq!(far, 32.0);
        assert_eq!(s.max_delay(), Some(32.0));
    }

    #[test]
    fn analytic_means() {
        assert_eq!(DelayModel::Geometric { success: 0.5 }.mean_delay(), 2.0);
        assert_eq!(DelayModel::Exponential { rate: 2.0 }.mean_delay(), 0.5);
        assert_eq!(DelayModel::Poisson { mean: 3.0 }.mean_delay(), 3.0);
        assert_eq!(DelayModel::Constant { steps: 4.0 }.mean_delay(), 4.0);
        let sdm = SdmDelay::default();
        assert_eq!(DelayModel::Sdm(sdm).mean_delay(), 5.0);
    }

    #[test]
    fn poisson_effective_mean_by_enumeration() {
        let lambda: f64 = 3.0;
        let mut pmf = (-lambda).exp();
        let mut mean = pmf; // the zero draw is reported as one step
        for k in 1..200 {
            pmf *= lambda / k as f64;
            mean += k as f64 * pmf;
        }
        let model = DelayModel::Poisson { mean: lambda };
        assert!((model.effective_mean_delay() - mean).abs() < 1e-12);
    }

    #[test]
    fn invalid_parameters() {
        for m in [
            DelayModel::Exponential { rate: 0.0 },
            DelayModel::Poisson { mean: -1.0 },
            DelayModel::Geometric { success: 0.0 },
            DelayModel::Geometric { success: 1.5 },
            DelayModel::Constant { steps: 0.5 },
            DelayModel::Sdm(SdmDelay {
                record_length: 10,
                ..SdmDelay::default()
            }),
        ] {
            assert!(matches!(DelaySampler::new(&m), Err(DelayError::InvalidParameter(_))), "{m:?}");
        }
    }

    #[test]
    fn mean_matching() {
        let sdm = SdmDelay::default();
        for kind in DelayModelKind::ALL {
            let m = DelayModel::mean_matched(kind, 4.0, &sdm).unwrap();
            assert_eq!(m.kind(), kind);
            assert!((m.mean_delay() - 4.0).abs() < 1e-12, "{kind}");
        }
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("Poisson".parse::<DelayModelKind>().unwrap(), DelayModelKind::Poisson);
        assert!("pareto".parse::<DelayModelKind>().is_err());
    }
}
