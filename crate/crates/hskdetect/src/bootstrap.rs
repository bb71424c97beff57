//! Smooth residual bootstrap critical values.
//!
//! The bootstrap world satisfies the null hypothesis by construction:
//! residuals are pooled, centred, resampled with replacement and smoothed
//! with a small normal perturbation, so the resampled errors are
//! homoskedastic and have a continuous distribution. Each replication
//! recomputes the full statistic (weights re-estimated when the detection
//! function is the estimated scale).

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::empirical::StatPlan;
use crate::error::{Error, Result};
use crate::locpoly::SmootherFit;
use crate::rng::{stream, Purpose};

/// Scale of the normal smoothing perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothing {
    /// `a_n = s_resid * n^(-1/4)`.
    Auto,
    Value(f64),
}

/// What the resampling pool contains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualPool {
    /// Centred raw residuals. Under a heteroskedastic alternative this
    /// pool is a scale mixture with heavier tails than the error law,
    /// which inflates the bootstrap critical value and costs power.
    Raw,
    /// Residuals divided by the estimated scale, recentred and rescaled
    /// to the overall residual standard deviation, so the bootstrap
    /// error law tracks the shape of the true error distribution under
    /// null and alternative alike.
    Standardized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replications: usize,
    pub seed: u64,
    pub smoothing: Smoothing,
    pub pool: ResidualPool,
    /// Re-run bandwidth cross-validation inside every replication instead
    /// of replaying the originally resolved bandwidths.
    pub recv_bandwidths: bool,
}

impl BootstrapConfig {
    pub fn new(replications: usize, seed: u64) -> Self {
        BootstrapConfig {
            replications,
            seed,
            smoothing: Smoothing::Auto,
            pool: ResidualPool::Standardized,
            recv_bandwidths: false,
        }
    }
}

/// Empirical `ceil((1 - alpha)(B + 1))`-th order statistic of the
/// bootstrap statistics (clamped to the largest one), and the bootstrap
/// p-value `(1 + #{T* >= T_obs}) / (B + 1)`.
pub(crate) fn critical_from_stats(stats: &mut [f64], alpha: f64, observed: f64) -> (f64, f64) {
    stats.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let b = stats.len();
    let rank = ((1.0 - alpha) * (b + 1) as f64).ceil() as usize;
    let critical = stats[rank.clamp(1, b) - 1];
    let exceed = stats.iter().filter(|&&t| t >= observed).count();
    let p = (1 + exceed) as f64 / (b + 1) as f64;
    (critical, p)
}

/// Runs the smooth residual bootstrap on the rescaled complete-case
/// sample. Replications with singular smoother fits are redrawn from
/// fresh streams, up to five attempts each.
pub(crate) fn bootstrap_critical_value(
    scaled: &Dataset,
    response_fit: &SmootherFit,
    residuals: &[f64],
    sigma_hat: Option<&[f64]>,
    plan: &StatPlan,
    config: &BootstrapConfig,
    alpha: f64,
    observed_statistic: f64,
) -> Result<(f64, f64)> {
    if config.replications < 100 {
        return Err(Error::InvalidParameter(format!(
            "bootstrap needs at least 100 replications, got {}",
            config.replications
        )));
    }
    let n = scaled.n();
    let mean = residuals.iter().sum::<f64>() / n as f64;
    let mut centred: Vec<f64> = residuals.iter().map(|r| r - mean).collect();
    let s_resid = (centred.iter().map(|r| r * r).sum::<f64>() / n as f64).sqrt();
    if let (ResidualPool::Standardized, Some(sigma)) = (config.pool, sigma_hat) {
        if sigma.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: sigma.len() });
        }
        // Unit-scale residual shapes, recentred, then blown back up to
        // the pooled residual scale. The scale estimate is floored at a
        // tenth of its median: at small n the plug-in variance estimate
        // can touch zero, and dividing by it would plant huge outliers
        // in the pool.
        let mut sorted = sigma.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let floor = (0.1 * sorted[n / 2]).max(1e-10);
        let mut shapes: Vec<f64> =
            residuals.iter().zip(sigma).map(|(r, s)| r / s.max(floor)).collect();
        let shape_mean = shapes.iter().sum::<f64>() / n as f64;
        for v in &mut shapes {
            *v -= shape_mean;
        }
        let shape_sd = (shapes.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
        if shape_sd > 1e-10 {
            centred = shapes.iter().map(|v| v / shape_sd * s_resid).collect();
        }
    }
    let a_n = match config.smoothing {
        Smoothing::Auto => s_resid * (n as f64).powf(-0.25),
        Smoothing::Value(v) => v,
    };
    if !(a_n > 0.0) {
        return Err(Error::Bootstrap(format!("smoothing scale must be positive, got {a_n}")));
    }

    let fitted = response_fit.fitted();
    let b = config.replications as u64;
    let mut stats: Vec<f64> = (0..b)
        .into_par_iter()
        .map(|rep| -> Result<f64> {
            // Attempt k of replication `rep` draws from stream index
            // rep + k * B, so retries stay deterministic and disjoint.
            let mut last_err = None;
            for attempt in 0..5u64 {
                let idx = rep + attempt * b;
                let mut resample = stream(config.seed, idx, Purpose::BootstrapResample);
                let mut smooth = stream(config.seed, idx, Purpose::BootstrapSmoothing);
                let y_star: Vec<f64> = (0..n)
                    .map(|j| {
                        let pick = resample.gen_range(0..n);
                        let z: f64 = StandardNormal.sample(&mut smooth);
                        fitted[j] + centred[pick] + a_n * z
                    })
                    .collect();
                let data = Dataset::from_flat(
                    (0..n).flat_map(|j| scaled.row(j).iter().copied()).collect(),
                    scaled.dim(),
                    y_star,
                    None,
                )?;
                match plan.statistic(&data) {
                    Ok(t) => return Ok(t),
                    Err(e) => last_err = Some(e),
                }
            }
            Err(Error::Bootstrap(format!(
                "replication {rep} failed after 5 attempts: {}",
                last_err.unwrap()
            )))
        })
        .collect::<Result<Vec<f64>>>()?;

    Ok(critical_from_stats(&mut stats, alpha, observed_statistic))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::DetectionFunction;
    use crate::empirical::{run_test, QuantileSource, TestConfig};
    use crate::locpoly::{BandwidthRule, SmootherConfig};
    use crate::rng::{stream, Purpose};
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn order_statistic_of_constants_is_that_constant() {
        let mut stats = vec![0.7; 100];
        let (cv, _) = critical_from_stats(&mut stats, 0.05, 0.5);
        assert_eq!(cv, 0.7);
    }

    #[test]
    fn order_statistic_rank() {
        // B = 9, alpha = 0.5: rank ceil(0.5 * 10) = 5 -> the median.
        let mut stats = vec![9.0, 1.0, 8.0, 2.0, 7.0, 3.0, 6.0, 4.0, 5.0];
        let (cv, _) = critical_from_stats(&mut stats, 0.5, 0.0);
        assert_eq!(cv, 5.0);
    }

    #[test]
    fn p_value_counts_exceedances() {
        let mut stats: Vec<f64> = (1..=99).map(|i| i as f64).collect();
        let (_, p) = critical_from_stats(&mut stats, 0.05, 90.0);
        // 10 of 99 stats are >= 90.
        assert!((p - 11.0 / 100.0).abs() < 1e-12);
    }

    fn noisy_dataset(n: usize, seed: u64) -> Dataset {
        let mut xr = stream(seed, 0, Purpose::Covariates);
        let mut er = stream(seed, 0, Purpose::Errors);
        let xs: Vec<f64> = (0..n).map(|_| 2.0 * xr.gen::<f64>() - 1.0).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|&x| {
                let e: f64 = StandardNormal.sample(&mut er);
                2.0 * x + 3.0 * (std::f64::consts::PI * x).cos() + e
            })
            .collect();
        Dataset::new(xs.iter().map(|&x| vec![x]).collect(), ys, None).unwrap()
    }

    fn boot_cfg(seed: u64) -> TestConfig {
        let sm = SmootherConfig::new(1).with_bandwidth(BandwidthRule::Fixed(1.0));
        let mut cfg = TestConfig::new(sm, DetectionFunction::EstimatedScale);
        cfg.quantile_source = QuantileSource::Bootstrap(BootstrapConfig::new(150, seed));
        cfg
    }

    #[test]
    fn bootstrap_run_is_deterministic() {
        let data = noisy_dataset(50, 4);
        let a = run_test(&data, &boot_cfg(11)).unwrap();
        let b = run_test(&data, &boot_cfg(11)).unwrap();
        assert_eq!(a, b);
        let c = run_test(&data, &boot_cfg(12)).unwrap();
        assert_ne!(a.critical_value.to_bits(), c.critical_value.to_bits());
    }

    #[test]
    fn bootstrap_critical_value_positive_and_sane() {
        let data = noisy_dataset(60, 8);
        let out = run_test(&data, &boot_cfg(3)).unwrap();
        assert!(out.critical_value > 0.0);
        assert!(out.critical_value < 5.0);
        assert!(out.p_value > 0.0 && out.p_value <= 1.0);
    }

    #[test]
    fn too_few_replications_rejected() {
        let data = noisy_dataset(40, 8);
        let sm = SmootherConfig::new(1).with_bandwidth(BandwidthRule::Fixed(1.0));
        let mut cfg = TestConfig::new(sm, DetectionFunction::EstimatedScale);
        cfg.quantile_source = QuantileSource::Bootstrap(BootstrapConfig::new(50, 1));
        assert!(run_test(&data, &cfg).is_err());
    }

    #[test]
    fn centred_pool_has_mean_zero() {
        // The centring step itself: mean of (r - mean) is ~0.
        let res: Vec<f64> = (0..200).map(|i| (i as f64 * 0.37).sin() * 2.0 + 0.5).collect();
        let mean = res.iter().sum::<f64>() / res.len() as f64;
        let centred: Vec<f64> = res.iter().map(|r| r - mean).collect();
        let m2 = centred.iter().sum::<f64>() / res.len() as f64;
        assert!(m2.abs() < 1e-12);
    }
}
