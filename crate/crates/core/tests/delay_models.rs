use aoi_mdp::delay::{DelayContext, DelayModel, DelaySampler, SdmDelay, SnrPolicy};
use aoi_mdp::rng::seeded;
use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, Geometric, Poisson};

const ALPHA: f64 = 0.01;

/// Pearson statistic over bins `1..=k` plus a tail bin, for a pmf on the
/// positive integers.
fn chi_square_p(draws: &[f64], pmf: impl Fn(u64) -> f64, k: u64) -> f64 {
    let n = draws.len() as f64;
    let mut counts = vec![0.0; k as usize + 1];
    for &d in draws {
        assert_eq!(d.fract(), 0.0);
        let v = d as u64;
        assert!(v >= 1);
        counts[(v.min(k + 1) - 1) as usize] += 1.0;
    }
    let mut probs: Vec<f64> = (1..=k).map(&pmf).collect();
    probs.push(1.0 - probs.iter().sum::<f64>());
    let stat: f64 = counts
        .iter()
        .zip(&probs)
        .map(|(o, p)| (o - n * p).powi(2) / (n * p))
        .sum();
    let dof = (probs.len() - 1) as f64;
    1.0 - ChiSquared::new(dof).unwrap().cdf(stat)
}

fn draws(model: &DelayModel, n: usize, seed: u64) -> Vec<f64> {
    let s = DelaySampler::new(model).unwrap();
    let mut rng = seeded(seed);
    (0..n).map(|_| s.sample(&mut rng, None).unwrap()).collect()
}

#[test]
fn poisson_fits_mapped_pmf() {
    let mean = 3.0;
    let d = draws(&DelayModel::Poisson { mean }, 100_000, 1);
    let p = Poisson::new(mean).unwrap();
    // zero draws are reported as one step
    let pmf = |k: u64| if k == 1 { p.pmf(0) + p.pmf(1) } else { p.pmf(k) };
    let pv = chi_square_p(&d, pmf, 10);
    assert!(pv > ALPHA, "p = {pv}");
}

#[test]
fn geometric_fits_pmf() {
    let success = 0.3;
    let d = draws(&DelayModel::Geometric { success }, 100_000, 2);
    // statrs counts trials up to and including the first success
    let g = Geometric::new(success).unwrap();
    let pv = chi_square_p(&d, |k| g.pmf(k), 15);
    assert!(pv > ALPHA, "p = {pv}");
}

#[test]
fn exponential_fits_cdf() {
    let rate = 0.4;
    let d = draws(&DelayModel::Exponential { rate }, 100_000, 3);
    let edges: Vec<f64> = (1..10).map(|q| -(1.0 - q as f64 / 10.0).ln() / rate).collect();
    let mut counts = [0.0; 10];
    for v in &d {
        counts[edges.partition_point(|e| e <= v)] += 1.0;
    }
    let expect = d.len() as f64 / 10.0;
    let stat: f64 = counts.iter().map(|o| (o - expect).powi(2) / expect).sum();
    let pv = 1.0 - ChiSquared::new(9.0).unwrap().cdf(stat);
    assert!(pv > ALPHA, "p = {pv}");
}

#[test]
fn exponential_unit_rate_mean() {
    let d = draws(&DelayModel::Exponential { rate: 1.0 }, 100_000, 4);
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    assert!((mean - 1.0).abs() <= 0.02, "{mean}");
}

#[test]
fn every_model_is_positive_over_a_million_draws() {
    let sdm = SdmDelay {
        snr: SnrPolicy::RangeDependent { reference_snr: 0.2, reference_distance: 300.0 },
        ..SdmDelay::default()
    };
    let models = [
        DelayModel::Exponential { rate: 5.0 },
        DelayModel::Poisson { mean: 0.5 },
        DelayModel::Geometric { success: 0.9 },
        DelayModel::Constant { steps: 1.0 },
        DelayModel::Sdm(sdm),
    ];
    for m in &models {
        let s = DelaySampler::new(m).unwrap();
        let mut rng = seeded(77);
        for i in 0..1_000_000u64 {
            // SDM draws sweep the link distance, including zero
            let ctx = Some(DelayContext { distance: (i % 1000) as f64 * 2.0 });
            let v = s.sample(&mut rng, ctx).unwrap();
            assert!(v > 0.0 && v.is_finite(), "{m:?} drew {v}");
        }
    }
}

#[test]
fn identical_seeds_give_identical_streams() {
    let model = DelayModel::Sdm(SdmDelay::default());
    assert_eq!(draws(&model, 500, 12), draws(&model, 500, 12));
    assert_ne!(draws(&model, 500, 12), draws(&model, 500, 13));
}
