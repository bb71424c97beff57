//! The supremum statistic of the weighted residual empirical process and
//! the end-to-end test runner.
//!
//! The statistic is `sup_t | n^(-1/2) sum_j W_j 1[res_j <= t] |`. The
//! process is a right-continuous step function of `t` starting at 0, so
//! the supremum is attained at the jump points: sort the residuals, merge
//! exactly tied values into one jump, and take the largest absolute
//! prefix sum of the weights.
//!
//! With missingness indicators present the complete cases are extracted
//! first and the identical downstream code runs on the reduced sample
//! with `N` in place of `n`; the limiting law is unchanged, so the same
//! quantiles apply.

use serde::{Deserialize, Serialize};

use crate::bootstrap::{self, BootstrapConfig};
use crate::data::Dataset;
use crate::detection::{self, DetectionFunction, WeightVector};
use crate::error::{Error, Result};
use crate::locpoly::{self, FitTarget, MultiIndexSet, SmootherConfig};
use crate::nulldist::{self, SeriesPolicy};

/// Where the critical value comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantileSource {
    /// Quantile of the limiting law `sup |B0|`.
    Asymptotic,
    /// Smooth residual bootstrap.
    Bootstrap(BootstrapConfig),
    /// A caller-supplied critical value, e.g. a published table entry.
    FixedCritical(f64),
}

/// Complete-case handling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarMode {
    /// Complete-case path exactly when some indicator is 0.
    Auto,
    /// Demand fully observed data.
    Full,
    /// Force the complete-case path.
    CompleteCase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    pub smoother: SmootherConfig,
    pub detection: DetectionFunction,
    pub alpha: f64,
    pub quantile_source: QuantileSource,
    pub mar_mode: MarMode,
    /// Bandwidth policy for the second-moment fit behind the estimated
    /// scale; defaults to the same policy as `smoother`.
    pub scale_smoother: Option<SmootherConfig>,
}

impl TestConfig {
    pub fn new(smoother: SmootherConfig, detection: DetectionFunction) -> Self {
        TestConfig {
            smoother,
            detection,
            alpha: 0.05,
            quantile_source: QuantileSource::Asymptotic,
            mar_mode: MarMode::Auto,
            scale_smoother: None,
        }
    }

    fn scale_config(&self) -> SmootherConfig {
        self.scale_smoother.clone().unwrap_or_else(|| self.smoother.clone())
    }
}

/// Bandwidths and provenance recorded alongside the decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Resolved proportionality constant and bandwidth for the response fit.
    pub bandwidth_constant: f64,
    pub bandwidth: f64,
    /// Same for the second-moment fit when the scale was estimated.
    pub scale_bandwidth_constant: Option<f64>,
    pub scale_bandwidth: Option<f64>,
    pub weights: String,
    pub quantile_source: String,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub schema_version: u32,
    pub statistic: f64,
    pub critical_value: f64,
    pub p_value: f64,
    pub reject: bool,
    pub n_used: usize,
    pub diagnostics: Diagnostics,
}

/// Supremum of the weighted empirical step process.
///
/// Exactly tied residuals form a single jump whose height is the sum of
/// their weights; the prefix after the last group is included (for
/// centred weights it is ~0).
pub fn sup_weighted_ecdf(weights: &[f64], residuals: &[f64]) -> Result<f64> {
    let n = residuals.len();
    if weights.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: weights.len() });
    }
    if n < 2 {
        return Err(Error::SampleTooSmall { observed: n, required: 2 });
    }
    if residuals.iter().chain(weights).any(|v| v.is_nan()) {
        return Err(Error::NonFinite("residual or weight is NaN".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| residuals[a].partial_cmp(&residuals[b]).unwrap());
    let mut sup = 0.0f64;
    let mut cum = 0.0f64;
    let mut i = 0;
    while i < n {
        let t = residuals[order[i]];
        while i < n && residuals[order[i]] == t {
            cum += weights[order[i]];
            i += 1;
        }
        sup = sup.max(cum.abs());
    }
    Ok(sup / (n as f64).sqrt())
}

/// Raw (unstandardized) detection values on the original covariate scale.
fn omega_raw(data: &Dataset, detection: &DetectionFunction) -> Result<Option<Vec<f64>>> {
    match detection {
        DetectionFunction::Builtin(name) => {
            let vals = (0..data.n())
                .map(|j| DetectionFunction::eval_builtin(name, data.row(j)))
                .collect::<Result<Vec<f64>>>()?;
            Ok(Some(vals))
        }
        DetectionFunction::User(vals) => Ok(Some(vals.clone())),
        DetectionFunction::EstimatedScale => Ok(None),
    }
}

/// The statistic pipeline on a rescaled complete-case sample, with fully
/// resolved configuration. Reused verbatim by the bootstrap so every
/// replication mirrors the original computation.
#[derive(Debug, Clone)]
pub(crate) struct StatPlan {
    pub smoother: SmootherConfig,
    pub scale_smoother: SmootherConfig,
    /// Raw omega values per row (builtin or user detection), or `None`
    /// for the estimated scale, which is recomputed from each sample.
    pub omega: Option<Vec<f64>>,
    pub provenance: DetectionFunction,
}

impl StatPlan {
    pub fn statistic(&self, scaled: &Dataset) -> Result<f64> {
        let fit = locpoly::fit(scaled, FitTarget::Response, &self.smoother)?;
        let residuals: Vec<f64> =
            scaled.response().iter().zip(fit.fitted()).map(|(y, r)| y - r).collect();
        let weights = self.weights(scaled, &fit)?;
        sup_weighted_ecdf(&weights.values, &residuals)
    }

    pub fn weights(&self, scaled: &Dataset, response_fit: &locpoly::SmootherFit) -> Result<WeightVector> {
        match &self.omega {
            Some(vals) => detection::standardize_weights(vals, self.provenance.clone()),
            None => {
                let r2 = locpoly::fit(scaled, FitTarget::ResponseSquared, &self.scale_smoother)?;
                let sigma: Vec<f64> = response_fit
                    .fitted()
                    .iter()
                    .zip(r2.fitted())
                    .map(|(r, v)| (v - r * r).max(1e-10).sqrt())
                    .collect();
                detection::standardize_weights(&sigma, DetectionFunction::EstimatedScale)
            }
        }
    }
}

/// The shared front half of the test pipeline: complete-case filtering,
/// rescaling, the response fit, residuals and standardized weights.
struct Prepared {
    working: Dataset,
    scaled: Dataset,
    response_fit: locpoly::SmootherFit,
    residuals: Vec<f64>,
    weights: WeightVector,
    omega: Option<Vec<f64>>,
    detection: DetectionFunction,
    scale_fit_info: Option<(f64, f64)>,
    sigma_hat: Option<Vec<f64>>,
}

impl Prepared {
    /// Computes the estimated scale on demand; the standardized bootstrap
    /// pool needs it even when the detection function does not.
    fn ensure_sigma(&mut self, config: &TestConfig) -> Result<()> {
        if self.sigma_hat.is_some() {
            return Ok(());
        }
        let scale_cfg = config.scale_config();
        let r2 = locpoly::fit(&self.scaled, FitTarget::ResponseSquared, &scale_cfg)?;
        self.scale_fit_info = Some((r2.constant(), r2.bandwidth()));
        let sigma: Vec<f64> = self
            .response_fit
            .fitted()
            .iter()
            .zip(r2.fitted())
            .map(|(r, v)| (v - r * r).max(1e-10).sqrt())
            .collect();
        self.sigma_hat = Some(sigma);
        Ok(())
    }
}

fn prepare(dataset: &Dataset, config: &TestConfig) -> Result<Prepared> {
    // Complete-case resolution.
    let working = match (dataset.delta().is_some(), config.mar_mode) {
        (true, MarMode::Full) => {
            if dataset.has_missing() {
                return Err(Error::MissingResponsesInFullMode);
            }
            dataset.complete_cases()?
        }
        (true, _) => dataset.complete_cases()?,
        (false, _) => dataset.clone(),
    };
    // User-supplied omega tables align with the original rows and are
    // filtered by the same mask.
    let detection = match &config.detection {
        DetectionFunction::User(vals) => {
            if vals.len() != dataset.n() {
                return Err(Error::DimensionMismatch { expected: dataset.n(), got: vals.len() });
            }
            let filtered: Vec<f64> = match dataset.delta() {
                Some(d) => vals
                    .iter()
                    .zip(d)
                    .filter_map(|(&v, &di)| (di == 1).then_some(v))
                    .collect(),
                None => vals.clone(),
            };
            DetectionFunction::User(filtered)
        }
        other => other.clone(),
    };

    let n_used = working.n();
    let basis = MultiIndexSet::new(config.smoother.degree, working.dim());
    if n_used < basis.len() + 2 {
        return Err(Error::SampleTooSmall { observed: n_used, required: basis.len() + 2 });
    }

    // Builtins read the original covariate scale, before rescaling.
    let omega = omega_raw(&working, &detection)?;
    let (scaled, _map) = working.rescale_to_unit_cube()?;

    let response_fit = locpoly::fit(&scaled, FitTarget::Response, &config.smoother)?;
    let residuals: Vec<f64> =
        scaled.response().iter().zip(response_fit.fitted()).map(|(y, r)| y - r).collect();

    let mut prepared = Prepared {
        working,
        scaled,
        response_fit,
        residuals,
        weights: WeightVector { values: Vec::new(), provenance: detection.clone() },
        omega,
        detection,
        scale_fit_info: None,
        sigma_hat: None,
    };
    prepared.weights = match &prepared.omega {
        Some(vals) => detection::standardize_weights(vals, prepared.detection.clone())?,
        None => {
            prepared.ensure_sigma(config)?;
            detection::standardize_weights(
                prepared.sigma_hat.as_ref().unwrap(),
                DetectionFunction::EstimatedScale,
            )?
        }
    };
    Ok(prepared)
}

/// Per-row fit detail on the original covariate scale, for residual
/// inspection and external plotting. Rows are the complete cases in file
/// order; `weights` are the standardized detection weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDetail {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub fitted: Vec<f64>,
    pub residuals: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Runs the front half of the pipeline and returns the per-row detail
/// that [`run_test`] reduces to a single statistic.
pub fn fit_detail(dataset: &Dataset, config: &TestConfig) -> Result<FitDetail> {
    let p = prepare(dataset, config)?;
    Ok(FitDetail {
        x: (0..p.working.n()).map(|j| p.working.row(j).to_vec()).collect(),
        y: p.working.response().to_vec(),
        fitted: p.response_fit.fitted().to_vec(),
        residuals: p.residuals,
        weights: p.weights.values,
    })
}

/// Runs the full test: complete-case filtering, rescaling, smoothing,
/// weight construction, the supremum statistic, and the critical value.
pub fn run_test(dataset: &Dataset, config: &TestConfig) -> Result<TestOutcome> {
    if !(0.0 < config.alpha && config.alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha must be in (0, 1), got {}",
            config.alpha
        )));
    }
    let mut p = prepare(dataset, config)?;
    let statistic = sup_weighted_ecdf(&p.weights.values, &p.residuals)?;

    let policy = SeriesPolicy::default();
    let (critical_value, p_value, source_label) = match &config.quantile_source {
        QuantileSource::Asymptotic => {
            let b = nulldist::quantile_sup_bridge(config.alpha, policy)?;
            let p = 1.0 - nulldist::cdf_sup_bridge(statistic, policy);
            (b, p, "asymptotic".to_string())
        }
        QuantileSource::FixedCritical(b) => {
            if *b <= 0.0 {
                return Err(Error::InvalidParameter("fixed critical value must be > 0".into()));
            }
            let p = 1.0 - nulldist::cdf_sup_bridge(statistic, policy);
            (*b, p, format!("fixed({b})"))
        }
        QuantileSource::Bootstrap(boot) => {
            // The standardized pool needs the scale estimate even when the
            // detection function does not.
            if matches!(boot.pool, bootstrap::ResidualPool::Standardized) {
                p.ensure_sigma(config)?;
            }
            // Replications replay the originally resolved bandwidths
            // unless re-cross-validation is requested.
            let plan = if boot.recv_bandwidths {
                StatPlan {
                    smoother: config.smoother.clone(),
                    scale_smoother: config.scale_config(),
                    omega: p.omega.clone(),
                    provenance: p.detection.clone(),
                }
            } else {
                let mut sm = config.smoother.clone();
                sm.bandwidth = locpoly::BandwidthRule::Fixed(p.response_fit.constant());
                let mut sc = config.scale_config();
                if let Some((c2, _)) = p.scale_fit_info {
                    sc.bandwidth = locpoly::BandwidthRule::Fixed(c2);
                }
                StatPlan {
                    smoother: sm,
                    scale_smoother: sc,
                    omega: p.omega.clone(),
                    provenance: p.detection.clone(),
                }
            };
            let (cv, pv) = bootstrap::bootstrap_critical_value(
                &p.scaled,
                &p.response_fit,
                &p.residuals,
                p.sigma_hat.as_deref(),
                &plan,
                boot,
                config.alpha,
                statistic,
            )?;
            (cv, pv, format!("bootstrap(B={}, seed={})", boot.replications, boot.seed))
        }
    };

    Ok(TestOutcome {
        schema_version: 1,
        statistic,
        critical_value,
        p_value,
        reject: statistic > critical_value,
        n_used: p.working.n(),
        diagnostics: Diagnostics {
            bandwidth_constant: p.response_fit.constant(),
            bandwidth: p.response_fit.bandwidth(),
            scale_bandwidth_constant: p.scale_fit_info.map(|(c, _)| c),
            scale_bandwidth: p.scale_fit_info.map(|(_, b)| b),
            weights: match &p.detection {
                DetectionFunction::Builtin(name) => format!("builtin:{name}"),
                DetectionFunction::User(_) => "user".into(),
                DetectionFunction::EstimatedScale => "estimated_scale".into(),
            },
            quantile_source: source_label,
            alpha: config.alpha,
        },
    })
}
