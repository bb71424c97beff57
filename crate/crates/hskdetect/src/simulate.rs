//! Data generators for the reference simulation scenarios, the Monte
//! Carlo driver and table reproduction.
//!
//! Two families of scenarios are covered: a univariate design with a
//! cosine regression function and four scale functions (level, two fixed
//! alternatives, and a local alternative shrinking at root-n rate),
//! optionally with responses missing at random; and a bivariate design
//! with correlated truncated-normal covariates, a locally cubic smoother
//! and three detection functions. A third generator realizes the designed
//! zero-power configuration where the detection function is uncorrelated
//! with the scale.

use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bootstrap::BootstrapConfig;
use crate::data::Dataset;
use crate::detection::DetectionFunction;
use crate::empirical::{self, MarMode, QuantileSource, TestConfig};
use crate::error::{Error, Result};
use crate::locpoly::{BandwidthRule, SmootherConfig};
use crate::nulldist::{self, SeriesPolicy};
use crate::rng::{derive, stream, Purpose};

/// Which simulated design to draw from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExampleId {
    Ex1,
    Ex2,
    Remark1,
}

/// Detection function for the test inside a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionId {
    Estimated,
    Omega1Ex2,
    Omega2Ex2,
    Remark1Omega,
}

impl DetectionId {
    fn to_detection(self) -> DetectionFunction {
        match self {
            DetectionId::Estimated => DetectionFunction::EstimatedScale,
            DetectionId::Omega1Ex2 => DetectionFunction::Builtin("omega1_ex2".into()),
            DetectionId::Omega2Ex2 => DetectionFunction::Builtin("omega2_ex2".into()),
            DetectionId::Remark1Omega => DetectionFunction::Builtin("remark1".into()),
        }
    }
}

/// Where scenario critical values come from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantilePolicy {
    /// Exact quantile of `sup |B0|`.
    Asymptotic,
    /// The critical value published with the reference simulation study
    /// (1.1779 at the 5% level); see [`published_critical_value`].
    PublishedAsymptotic,
    /// Smooth residual bootstrap with this replication count.
    Bootstrap { replications: usize },
}

/// A named simulation scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub example: ExampleId,
    /// Scale-function index: 0..=3 for `Ex1`, 0..=2 for `Ex2`; ignored
    /// for `Remark1`.
    pub scale_id: u8,
    pub detection: DetectionId,
    pub n: usize,
    pub runs: usize,
    /// Ex1 only: generate missing-at-random responses.
    pub missing: bool,
    pub seed: u64,
    pub alpha: f64,
    pub quantile: QuantilePolicy,
    /// Cross-validate bandwidths on the first replication only and reuse
    /// the resolved constants thereafter.
    pub fast_cv: bool,
}

impl ScenarioSpec {
    pub fn new(example: ExampleId, scale_id: u8, detection: DetectionId, n: usize, runs: usize) -> Self {
        ScenarioSpec {
            example,
            scale_id,
            detection,
            n,
            runs,
            missing: false,
            seed: 0,
            alpha: 0.05,
            quantile: QuantilePolicy::PublishedAsymptotic,
            fast_cv: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::InvalidParameter("runs must be >= 1".into()));
        }
        match self.example {
            ExampleId::Ex1 => {
                if self.scale_id > 3 {
                    return Err(Error::InvalidParameter("Ex1 has scales 0..=3".into()));
                }
                if !matches!(self.detection, DetectionId::Estimated) {
                    return Err(Error::InvalidParameter(
                        "Ex1 scenarios use the estimated scale detection".into(),
                    ));
                }
            }
            ExampleId::Ex2 => {
                if self.scale_id > 2 {
                    return Err(Error::InvalidParameter("Ex2 has scales 0..=2".into()));
                }
                if self.missing {
                    return Err(Error::InvalidParameter("Ex2 has no missing-data arm".into()));
                }
                if matches!(self.detection, DetectionId::Remark1Omega) {
                    return Err(Error::InvalidParameter(
                        "remark1 detection applies to the univariate design".into(),
                    ));
                }
            }
            ExampleId::Remark1 => {
                if self.missing {
                    return Err(Error::InvalidParameter("Remark1 has no missing-data arm".into()));
                }
                if !matches!(self.detection, DetectionId::Remark1Omega) {
                    return Err(Error::InvalidParameter(
                        "Remark1 scenarios use the remark1 detection function".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Locally linear for the univariate designs, locally cubic for the
    /// bivariate one.
    fn degree(&self) -> u32 {
        match self.example {
            ExampleId::Ex1 | ExampleId::Remark1 => 1,
            ExampleId::Ex2 => 3,
        }
    }

    pub fn generate(&self, replication: u64) -> Dataset {
        match self.example {
            ExampleId::Ex1 => {
                gen_example1(self.scale_id, self.n, self.missing, self.seed, replication)
            }
            ExampleId::Ex2 => gen_example2(self.scale_id, self.n, self.seed, replication),
            ExampleId::Remark1 => gen_remark1(self.n, self.seed, replication),
        }
    }

    pub fn test_config(&self, replication: u64) -> Result<TestConfig> {
        let mut smoother = SmootherConfig::new(self.degree());
        if matches!(self.example, ExampleId::Remark1) {
            // Cross-validation targets prediction error, and with a flat
            // regression function it maximally oversmooths; the resulting
            // fit chases the high-variance region and the estimation
            // error correlates with the detection function, inflating the
            // statistic. A unit proportionality constant keeps the
            // smoother in the undersmoothed regime the statistic needs.
            smoother = smoother.with_bandwidth(BandwidthRule::Fixed(1.0));
        }
        let mut cfg = TestConfig::new(smoother, self.detection.to_detection());
        cfg.alpha = self.alpha;
        cfg.mar_mode = MarMode::Auto;
        cfg.quantile_source = match self.quantile {
            QuantilePolicy::Asymptotic => QuantileSource::Asymptotic,
            QuantilePolicy::PublishedAsymptotic => {
                QuantileSource::FixedCritical(published_critical_value(self.alpha)?)
            }
            QuantilePolicy::Bootstrap { replications } => QuantileSource::Bootstrap(
                BootstrapConfig::new(replications, derive(self.seed, replication)),
            ),
        };
        Ok(cfg)
    }
}

/// Critical value as published with the reference simulation study. It
/// solves `sqrt(b) K(b) = 1 - alpha` for the null CDF `K`; at the 5%
/// level this gives 1.1779, the threshold behind the published rejection
/// rates. Note the exact quantile of `sup |B0|` is larger (1.3581 at 5%),
/// so this choice rejects more often in the upper tail.
pub fn published_critical_value(alpha: f64) -> Result<f64> {
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha must be in (0, 1), got {alpha}")));
    }
    let policy = SeriesPolicy::default();
    let target = 1.0 - alpha;
    let (mut lo, mut hi) = (1e-4f64, 20.0f64);
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        let v = mid.sqrt() * nulldist::cdf_sup_bridge(mid, policy);
        if v < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn ex1_scale(scale_id: u8, n: usize, x: f64) -> f64 {
    match scale_id {
        0 => 1.0,
        1 => 0.4 + 4.0 * x * x,
        2 => 2.0 * x.exp() - 0.5,
        3 => 1.0 + 15.0 * (n as f64).powf(-0.5) * x * x,
        _ => unreachable!(),
    }
}

/// Univariate design: `r(x) = 2x + 3 cos(pi x)`, `X ~ U(-1, 1)`,
/// `e ~ N(0, 1)`; optional MAR indicators with logistic response
/// probability `1 / (1 + exp(-x))`.
pub fn gen_example1(scale_id: u8, n: usize, missing: bool, seed: u64, replication: u64) -> Dataset {
    let mut xr = stream(seed, replication, Purpose::Covariates);
    let mut er = stream(seed, replication, Purpose::Errors);
    let mut dr = stream(seed, replication, Purpose::Missingness);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut delta = Vec::with_capacity(n);
    for _ in 0..n {
        let xi = 2.0 * xr.gen::<f64>() - 1.0;
        let e: f64 = StandardNormal.sample(&mut er);
        let r = 2.0 * xi + 3.0 * (std::f64::consts::PI * xi).cos();
        x.push(vec![xi]);
        y.push(r + ex1_scale(scale_id, n, xi) * e);
        if missing {
            let pi = 1.0 / (1.0 + (-xi).exp());
            delta.push(if dr.gen::<f64>() < pi { 1u8 } else { 0u8 });
        }
    }
    Dataset::new(x, y, missing.then_some(delta)).expect("generated sample is valid")
}

fn ex2_scale(scale_id: u8, x1: f64, x2: f64) -> f64 {
    match scale_id {
        0 => 1.0,
        1 => 0.5 + 5.0 * x1 * x1 + 5.0 * x2 * x2,
        2 => 4.0 + 3.5 * (std::f64::consts::FRAC_PI_2 * (x1 + x2)).sin(),
        _ => unreachable!(),
    }
}

/// Bivariate design: `r(x1, x2) = 2 x1 - x2 + 3 exp(x1 + x2)`, covariates
/// jointly normal with unit variances and correlation 1/2, restricted to
/// `[-1, 1]^2` by rejection sampling.
pub fn gen_example2(scale_id: u8, n: usize, seed: u64, replication: u64) -> Dataset {
    let mut xr = stream(seed, replication, Purpose::Covariates);
    let mut er = stream(seed, replication, Purpose::Errors);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    while x.len() < n {
        let z1: f64 = StandardNormal.sample(&mut xr);
        let z2: f64 = StandardNormal.sample(&mut xr);
        let x1 = z1;
        let x2 = 0.5 * z1 + (0.75f64).sqrt() * z2;
        if x1.abs() > 1.0 || x2.abs() > 1.0 {
            continue;
        }
        let e: f64 = StandardNormal.sample(&mut er);
        let r = 2.0 * x1 - x2 + 3.0 * (x1 + x2).exp();
        x.push(vec![x1, x2]);
        y.push(r + ex2_scale(scale_id, x1, x2) * e);
    }
    Dataset::new(x, y, None).expect("generated sample is valid")
}

/// The designed zero-power configuration: `X ~ U(0, 1)`, base error
/// uniform and centred, scale `1 / (1 + sin(2 pi X))`, regression 0.
/// Both `omega(X) = 1 + cos(2 pi X)` and `1 / sigma(X)` have mean one,
/// and `E[omega / sigma] = E[omega] E[1 / sigma]`, so `omega` is
/// uncorrelated with the conditional error law and the test with this
/// detection function behaves like a level-alpha test under this
/// (heteroskedastic!) alternative.
///
/// The base error is centred so the regression function really is zero;
/// an uncentred uniform error would shift the conditional mean by
/// `sigma(x) / 2`, which is unbounded near `x = 3/4` and impossible to
/// smooth.
pub fn gen_remark1(n: usize, seed: u64, replication: u64) -> Dataset {
    let mut xr = stream(seed, replication, Purpose::Covariates);
    let mut er = stream(seed, replication, Purpose::Errors);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let xi: f64 = xr.gen();
        let e: f64 = er.gen::<f64>() - 0.5;
        let sigma = 1.0 / (1.0 + (2.0 * std::f64::consts::PI * xi).sin());
        x.push(vec![xi]);
        y.push(sigma * e);
    }
    Dataset::new(x, y, None).expect("generated sample is valid")
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    values[values.len() / 2]
}

/// Per-scenario Monte Carlo summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionReport {
    pub rejection_rate: f64,
    /// `sqrt(p (1 - p) / runs)`.
    pub std_error: f64,
    pub mean_statistic: f64,
    pub runs: usize,
    /// Wall-clock time; excluded from serialized reports so identical
    /// inputs produce identical bytes.
    #[serde(skip_serializing, default)]
    pub runtime_secs: f64,
}

/// Runs `spec.runs` independent replications of generate-then-test and
/// aggregates the rejection frequency. Deterministic in `spec` (including
/// the seed) regardless of the parallel schedule.
pub fn monte_carlo(spec: &ScenarioSpec) -> Result<RejectionReport> {
    spec.validate()?;
    let start = Instant::now();

    // Fast policy: cross-validate on a few probe replications, freeze the
    // median constants and replay them everywhere. A single probe is too
    // fragile: one unlucky draw can pin an extreme bandwidth for the
    // whole study.
    let template = if spec.fast_cv {
        let probes = spec.runs.min(11) as u64;
        let mut response_cs = Vec::new();
        let mut scale_cs = Vec::new();
        for rep in 0..probes {
            let outcome = empirical::run_test(&spec.generate(rep), &spec.test_config(rep)?)
                .map_err(|e| {
                    Error::InvalidParameter(format!("probe replication {rep} failed: {e}"))
                })?;
            response_cs.push(outcome.diagnostics.bandwidth_constant);
            if let Some(c2) = outcome.diagnostics.scale_bandwidth_constant {
                scale_cs.push(c2);
            }
        }
        let mut fixed = spec.test_config(0)?;
        fixed.smoother.bandwidth = BandwidthRule::Fixed(median(&mut response_cs));
        if !scale_cs.is_empty() {
            let mut sc = fixed.smoother.clone();
            sc.bandwidth = BandwidthRule::Fixed(median(&mut scale_cs));
            fixed.scale_smoother = Some(sc);
        }
        fixed
    } else {
        spec.test_config(0)?
    };

    let results: Vec<(bool, f64)> = (0..spec.runs as u64)
        .into_par_iter()
        .map(|rep| -> Result<(bool, f64)> {
            let mut cfg = template.clone();
            if !spec.fast_cv {
                cfg = spec.test_config(rep)?;
            }
            if let QuantileSource::Bootstrap(boot) = &mut cfg.quantile_source {
                boot.seed = derive(spec.seed, rep);
            }
            let outcome = empirical::run_test(&spec.generate(rep), &cfg)
                .map_err(|e| Error::InvalidParameter(format!("replication {rep} failed: {e}")))?;
            Ok((outcome.reject, outcome.statistic))
        })
        .collect::<Result<_>>()?;

    let runs = spec.runs as f64;
    let rejection_rate = results.iter().filter(|(r, _)| *r).count() as f64 / runs;
    let mean_statistic = results.iter().map(|(_, t)| t).sum::<f64>() / runs;
    Ok(RejectionReport {
        rejection_rate,
        std_error: (rejection_rate * (1.0 - rejection_rate) / runs).sqrt(),
        mean_statistic,
        runs: spec.runs,
        runtime_secs: start.elapsed().as_secs_f64(),
    })
}

/// One cell of a reproduced table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableCell {
    pub scale: String,
    pub n: usize,
    pub quantile: String,
    pub published: f64,
    pub ours: f64,
    pub std_error: f64,
    pub tolerance: f64,
    pub within: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableReport {
    pub table: u8,
    pub description: String,
    pub runs: usize,
    pub seed: u64,
    pub cells: Vec<TableCell>,
}

const SAMPLE_SIZES: [usize; 4] = [50, 100, 200, 300];

// Published rejection rates, rows by scale index, columns by sample size.
const TABLE1: [[f64; 4]; 4] = [
    [0.016, 0.019, 0.033, 0.039],
    [0.426, 0.939, 1.000, 1.000],
    [0.487, 0.971, 1.000, 1.000],
    [0.127, 0.299, 0.500, 0.668],
];
// Parenthesized bootstrap figures (sample sizes 50, 100, 200 only).
const TABLE1_BOOT: [[f64; 3]; 4] = [
    [0.058, 0.056, 0.039],
    [0.477, 0.945, 1.000],
    [0.631, 0.957, 0.996],
    [0.176, 0.387, 0.576],
];
const TABLE2: [[f64; 4]; 4] = [
    [0.009, 0.015, 0.029, 0.037],
    [0.097, 0.482, 0.957, 0.998],
    [0.112, 0.443, 0.945, 1.000],
    [0.032, 0.097, 0.197, 0.304],
];
const TABLE2_BOOT: [[f64; 3]; 4] = [
    [0.054, 0.051, 0.048],
    [0.173, 0.573, 0.953],
    [0.223, 0.550, 0.913],
    [0.080, 0.148, 0.283],
];
const TABLE3: [[f64; 4]; 3] = [
    [0.017, 0.015, 0.016, 0.019],
    [0.153, 0.749, 0.996, 1.000],
    [0.027, 0.023, 0.025, 0.026],
];
const TABLE4: [[f64; 4]; 3] = [
    [0.003, 0.010, 0.018, 0.019],
    [0.085, 0.415, 0.904, 0.989],
    [0.015, 0.037, 0.118, 0.208],
];
const TABLE5: [[f64; 4]; 3] = [
    [0.063, 0.049, 0.060, 0.069],
    [0.186, 0.617, 0.971, 1.000],
    [0.477, 0.934, 1.000, 1.000],
];

/// Published-vs-ours tolerance: three binomial standard errors at the
/// published rate plus a fixed model slack of 0.01.
fn cell_tolerance(published: f64, runs: usize) -> f64 {
    3.0 * (published * (1.0 - published) / runs as f64).sqrt() + 0.01
}

/// Options for [`reproduce_tables`].
#[derive(Debug, Clone, Copy)]
pub struct TableOptions {
    pub runs: usize,
    pub seed: u64,
    pub fast_cv: bool,
    /// Also reproduce the bootstrap columns of tables 1 and 2 (expensive).
    pub include_bootstrap: bool,
    pub bootstrap_replications: usize,
}

impl Default for TableOptions {
    fn default() -> Self {
        TableOptions {
            runs: 1000,
            seed: 0,
            fast_cv: true,
            include_bootstrap: false,
            bootstrap_replications: 500,
        }
    }
}

/// Re-runs the selected published tables and reports each cell with a
/// within-tolerance flag.
pub fn reproduce_tables(which: &[u8], opts: &TableOptions) -> Result<Vec<TableReport>> {
    let mut reports = Vec::new();
    for &table in which {
        let report = match table {
            1 => reproduce_ex1_table(1, false, opts)?,
            2 => reproduce_ex1_table(2, true, opts)?,
            3 => reproduce_ex2_table(3, DetectionId::Omega1Ex2, &TABLE3, opts)?,
            4 => reproduce_ex2_table(4, DetectionId::Omega2Ex2, &TABLE4, opts)?,
            5 => reproduce_ex2_table(5, DetectionId::Estimated, &TABLE5, opts)?,
            other => {
                return Err(Error::InvalidParameter(format!("unknown table {other}, expected 1-5")))
            }
        };
        reports.push(report);
    }
    Ok(reports)
}

fn reproduce_ex1_table(table: u8, missing: bool, opts: &TableOptions) -> Result<TableReport> {
    let (published, published_boot) =
        if missing { (&TABLE2, &TABLE2_BOOT) } else { (&TABLE1, &TABLE1_BOOT) };
    let mut cells = Vec::new();
    for (row, scale_id) in (0u8..4).enumerate() {
        for (col, &n) in SAMPLE_SIZES.iter().enumerate() {
            let mut spec =
                ScenarioSpec::new(ExampleId::Ex1, scale_id, DetectionId::Estimated, n, opts.runs);
            spec.missing = missing;
            spec.seed = derive(opts.seed, (u64::from(table) << 8) | (row as u64) << 4 | col as u64);
            spec.fast_cv = opts.fast_cv;
            let report = monte_carlo(&spec)?;
            cells.push(make_cell(
                scale_id,
                n,
                "published_asymptotic",
                published[row][col],
                &report,
            ));
            if opts.include_bootstrap && col < 3 {
                let mut bspec = spec.clone();
                bspec.quantile =
                    QuantilePolicy::Bootstrap { replications: opts.bootstrap_replications };
                bspec.seed = derive(spec.seed, 0xb007);
                let breport = monte_carlo(&bspec)?;
                cells.push(make_cell(scale_id, n, "bootstrap", published_boot[row][col], &breport));
            }
        }
    }
    Ok(TableReport {
        table,
        description: if missing {
            "univariate design, responses missing at random, estimated scale weights".into()
        } else {
            "univariate design, fully observed, estimated scale weights".into()
        },
        runs: opts.runs,
        seed: opts.seed,
        cells,
    })
}

fn reproduce_ex2_table(
    table: u8,
    detection: DetectionId,
    published: &[[f64; 4]; 3],
    opts: &TableOptions,
) -> Result<TableReport> {
    let mut cells = Vec::new();
    for (row, scale_id) in (0u8..3).enumerate() {
        for (col, &n) in SAMPLE_SIZES.iter().enumerate() {
            let mut spec = ScenarioSpec::new(ExampleId::Ex2, scale_id, detection, n, opts.runs);
            spec.seed = derive(opts.seed, (u64::from(table) << 8) | (row as u64) << 4 | col as u64);
            spec.fast_cv = opts.fast_cv;
            let report = monte_carlo(&spec)?;
            cells.push(make_cell(
                scale_id,
                n,
                "published_asymptotic",
                published[row][col],
                &report,
            ));
        }
    }
    Ok(TableReport {
        table,
        description: format!("bivariate design, detection {detection:?}"),
        runs: opts.runs,
        seed: opts.seed,
        cells,
    })
}

fn make_cell(
    scale_id: u8,
    n: usize,
    quantile: &str,
    published: f64,
    report: &RejectionReport,
) -> TableCell {
    let tolerance = cell_tolerance(published, report.runs);
    TableCell {
        scale: format!("sigma{scale_id}"),
        n,
        quantile: quantile.into(),
        published,
        ours: report.rejection_rate,
        std_error: report.std_error,
        tolerance,
        within: (report.rejection_rate - published).abs() <= tolerance,
    }
}
