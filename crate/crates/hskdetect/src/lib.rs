//! Tests for heteroskedasticity in nonparametric regression based on
//! weighted residual empirical processes.
//!
//! The null hypothesis is that the error scale is constant,
//! `Var[Y|X] = const`, in the model `Y = r(X) + sigma(X) e` with a smooth
//! regression function `r`. The test marks the residual empirical process
//! with standardized weights built from a non-constant detection function
//! (or an estimated scale function) and rejects for large values of the
//! supremum of the process. Under the null the statistic converges to the
//! supremum of the absolute value of a Brownian bridge, so fixed quantiles
//! apply. Responses missing at random are handled by complete-case
//! analysis; the same quantiles remain valid.
//!
//! The crate ships:
//! - [`data`]: the sample representation, CSV ingestion, rescaling of the
//!   covariates to the unit cube and complete-case extraction;
//! - [`kernel`]: compactly supported kernels and product weights;
//! - [`locpoly`]: multivariate local polynomial smoothing, leave-one-out
//!   cross-validated bandwidths and the estimated scale function;
//! - [`detection`]: standardized detection-function weights;
//! - [`empirical`]: the supremum statistic and the end-to-end test runner;
//! - [`nulldist`]: the distribution of `sup |B0|` on `[0, 1]`;
//! - [`bootstrap`]: smooth residual bootstrap critical values;
//! - [`simulate`]: data generators and a Monte Carlo harness for the
//!   reference simulation scenarios.

pub mod bootstrap;
pub mod data;
pub mod detection;
pub mod empirical;
pub mod error;
pub mod kernel;
pub mod locpoly;
pub mod nulldist;
pub mod rng;
pub mod simulate;

pub use data::{Dataset, RescaleMap};
pub use detection::{DetectionFunction, WeightVector};
pub use empirical::{FitDetail, MarMode, QuantileSource, TestConfig, TestOutcome};
pub use error::{Error, Result};
pub use kernel::KernelSpec;
pub use locpoly::{BandwidthRule, SmootherConfig, SmootherFit};
pub use simulate::{RejectionReport, ScenarioSpec};
