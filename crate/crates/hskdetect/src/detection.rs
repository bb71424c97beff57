//! Standardized weight vectors that mark the residual empirical process.
//!
//! A detection function `omega` is any non-constant function of the
//! covariates; its sample values are centred and scaled to mean zero and
//! mean square one. High correlation between `omega` and the true scale
//! function is what gives the test power, and the estimated scale
//! `sigma_hat` is the adaptive choice.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::locpoly::{self, SmootherConfig};

/// How the raw `omega` values are obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionFunction {
    /// A named builtin, evaluated on the original covariate scale.
    Builtin(String),
    /// User-supplied per-row values, taken as-is.
    User(Vec<f64>),
    /// `sigma_hat` from the two-moment local polynomial fit.
    EstimatedScale,
}

impl DetectionFunction {
    /// Evaluates a builtin by name. `x` is a point on the original
    /// covariate scale.
    pub fn eval_builtin(name: &str, x: &[f64]) -> Result<f64> {
        match name {
            "omega1_ex2" => {
                require_dim(name, 2, x)?;
                Ok(0.5 + 5.0 * x[0] * x[0] + 5.0 * x[1] * x[1])
            }
            "omega2_ex2" => {
                require_dim(name, 2, x)?;
                Ok(1.0 + (std::f64::consts::FRAC_PI_2 * (x[0] + x[1])).cos())
            }
            "remark1" => {
                require_dim(name, 1, x)?;
                Ok(1.0 + (2.0 * std::f64::consts::PI * x[0]).cos())
            }
            other => Err(Error::InvalidParameter(format!("unknown detection function {other:?}"))),
        }
    }
}

fn require_dim(name: &str, expected: usize, x: &[f64]) -> Result<()> {
    if x.len() != expected {
        return Err(Error::DimensionMismatch { expected, got: x.len() });
    }
    let _ = name;
    Ok(())
}

/// Standardized weights: mean zero, mean square one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub values: Vec<f64>,
    pub provenance: DetectionFunction,
}

/// `W_j = (omega_j - mean) / sqrt(mean of squared deviations)`.
///
/// A numerically constant `omega` cannot detect heteroskedasticity and is
/// rejected; the threshold is relative so the check is unit-safe.
pub fn standardize_weights(omega: &[f64], provenance: DetectionFunction) -> Result<WeightVector> {
    let n = omega.len();
    if n < 2 {
        return Err(Error::SampleTooSmall { observed: n, required: 2 });
    }
    if let Some(j) = omega.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("omega value in row {}", j + 1)));
    }
    let mean = omega.iter().sum::<f64>() / n as f64;
    let var = omega.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    if var < 1e-14 * (1.0 + mean * mean) {
        return Err(Error::DegenerateDetection);
    }
    let scale = var.sqrt();
    let values = omega.iter().map(|v| (v - mean) / scale).collect();
    Ok(WeightVector { values, provenance })
}

/// Weights from the estimated scale function over the observed rows.
pub fn estimated_weights(dataset: &Dataset, config: &SmootherConfig) -> Result<WeightVector> {
    let est = locpoly::scale_estimate(dataset, config)?;
    standardize_weights(&est.sigma, DetectionFunction::EstimatedScale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::locpoly::BandwidthRule;
    use crate::rng::{stream, Purpose};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn standardize(v: &[f64]) -> Vec<f64> {
        standardize_weights(v, DetectionFunction::User(v.to_vec())).unwrap().values
    }

    #[test]
    fn two_point_example() {
        assert_eq!(standardize(&[0.0, 2.0]), vec![-1.0, 1.0]);
    }

    #[test]
    fn three_point_example() {
        let w = standardize(&[1.0, 2.0, 3.0]);
        let r = (1.5f64).sqrt();
        assert_relative_eq!(w[0], -r, epsilon = 1e-12);
        assert_relative_eq!(w[1], 0.0, epsilon = 1e-12);
        assert_relative_eq!(w[2], r, epsilon = 1e-12);
    }

    #[test]
    fn constant_omega_is_degenerate() {
        let err = standardize_weights(&[5.0, 5.0, 5.0], DetectionFunction::EstimatedScale);
        assert!(matches!(err, Err(Error::DegenerateDetection)));
    }

    #[test]
    fn estimated_weights_reduce_to_standardize() {
        // sigma values (0.5, 1.5) standardize to (-1, +1); checked through
        // the shared standardization path.
        let w = standardize(&[0.5, 1.5]);
        assert_eq!(w, vec![-1.0, 1.0]);
    }

    #[test]
    fn estimated_weights_track_heteroskedastic_scale() {
        // sigma_1(x) = 0.4 + 4 x^2 on U(-1, 1) covariates: the estimated
        // weights should correlate positively with the true scale shape.
        let mut xr = stream(5, 0, Purpose::Covariates);
        let mut er = stream(5, 0, Purpose::Errors);
        let n = 400;
        let xs: Vec<f64> = (0..n).map(|_| 2.0 * xr.gen::<f64>() - 1.0).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|&x| {
                let e: f64 = StandardNormal.sample(&mut er);
                2.0 * x + 3.0 * (std::f64::consts::PI * x).cos() + (0.4 + 4.0 * x * x) * e
            })
            .collect();
        let data = Dataset::new(xs.iter().map(|&x| vec![x]).collect(), ys, None).unwrap();
        let (scaled, _) = data.rescale_to_unit_cube().unwrap();
        let cfg = SmootherConfig::new(1).with_bandwidth(BandwidthRule::Fixed(1.0));
        let w = estimated_weights(&scaled, &cfg).unwrap();
        let omega: Vec<f64> = xs.iter().map(|&x| 0.4 + 4.0 * x * x).collect();
        let mw = w.values.iter().sum::<f64>() / n as f64;
        let mo = omega.iter().sum::<f64>() / n as f64;
        let mut cov = 0.0;
        let mut vw = 0.0;
        let mut vo = 0.0;
        for (a, b) in w.values.iter().zip(&omega) {
            cov += (a - mw) * (b - mo);
            vw += (a - mw) * (a - mw);
            vo += (b - mo) * (b - mo);
        }
        let corr = cov / (vw.sqrt() * vo.sqrt());
        assert!(corr > 0.5, "correlation {corr}");
    }

    #[test]
    fn exactly_constant_scale_is_degenerate() {
        // A constant response pins sigma_hat to the floor everywhere:
        // both the response and its square are fitted exactly, so the
        // estimated weights are constant and cannot be standardized.
        let xs: Vec<f64> = (0..40).map(|i| i as f64 / 39.0).collect();
        let ys: Vec<f64> = vec![3.0; xs.len()];
        let data = Dataset::new(xs.iter().map(|&x| vec![x]).collect(), ys, None).unwrap();
        let cfg = SmootherConfig::new(1).with_bandwidth(BandwidthRule::Fixed(1.5));
        let res = estimated_weights(&data, &cfg);
        assert!(matches!(res, Err(Error::DegenerateDetection)), "{res:?}");
    }

    proptest! {
        #[test]
        fn standardized_moments(v in proptest::collection::vec(-100.0f64..100.0, 2..64)) {
            prop_assume!(v.iter().any(|&a| (a - v[0]).abs() > 1e-3));
            let w = standardize(&v);
            let n = w.len() as f64;
            let mean = w.iter().sum::<f64>() / n;
            let msq = w.iter().map(|a| a * a).sum::<f64>() / n;
            prop_assert!(mean.abs() < 1e-10);
            prop_assert!((msq - 1.0).abs() < 1e-10);
        }

        #[test]
        fn affine_equivariance(
            v in proptest::collection::vec(-10.0f64..10.0, 2..32),
            a in prop_oneof![(-5.0f64..-0.1), (0.1f64..5.0)],
            b in -5.0f64..5.0,
        ) {
            prop_assume!(v.iter().any(|&x| (x - v[0]).abs() > 1e-3));
            let base = standardize(&v);
            let mapped: Vec<f64> = v.iter().map(|&x| a * x + b).collect();
            let transformed = standardize(&mapped);
            for (t, u) in transformed.iter().zip(&base) {
                prop_assert!((t - a.signum() * u).abs() < 1e-10);
            }
        }

        #[test]
        fn permutation_equivariance(v in proptest::collection::vec(-10.0f64..10.0, 3..32)) {
            prop_assume!(v.iter().any(|&x| (x - v[0]).abs() > 1e-3));
            let base = standardize(&v);
            let mut rev = v.clone();
            rev.reverse();
            let mut expected = base.clone();
            expected.reverse();
            let got = standardize(&rev);
            for (g, e) in got.iter().zip(&expected) {
                prop_assert!((g - e).abs() < 1e-12);
            }
        }
    }
}
