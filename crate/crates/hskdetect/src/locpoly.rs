//! Multivariate local polynomial smoothing.
//!
//! At every evaluation point `x` the smoother solves a kernel-weighted
//! least squares problem over the polynomial basis
//! `psi_i(u) = prod_k u_k^{i_k} / i_k!` for multi-indices with total degree
//! at most `d`, in the shifted and scaled coordinates `(X_j - x) / c_n`.
//! The fitted value is the coefficient of the all-zeros index. The
//! bandwidth is `c_n = c {n log n}^(-1/(2s))` with `s = d + gamma`, where
//! the proportionality constant `c` is either fixed or chosen by
//! leave-one-out cross-validation.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;

/// All multi-indices `i` with `i_1 + ... + i_m <= d`, graded
/// lexicographic, the all-zeros index first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiIndexSet {
    degree: u32,
    dim: usize,
    indices: Vec<Vec<u32>>,
}

impl MultiIndexSet {
    pub fn new(degree: u32, dim: usize) -> Self {
        assert!(dim >= 1);
        let mut indices = Vec::new();
        for total in 0..=degree {
            let mut current = vec![0u32; dim];
            push_compositions(total, 0, &mut current, &mut indices);
        }
        MultiIndexSet { degree, dim, indices }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[Vec<u32>] {
        &self.indices
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// Enumerates compositions of `total` into `current.len() - pos` parts,
/// lexicographically by leading coordinate.
fn push_compositions(total: u32, pos: usize, current: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if pos + 1 == current.len() {
        current[pos] = total;
        out.push(current.clone());
        return;
    }
    for lead in (0..=total).rev() {
        current[pos] = lead;
        push_compositions(total - lead, pos + 1, current, out);
    }
    current[pos] = 0;
}

/// `psi_i(x) = prod_k x_k^{i_k} / i_k!`.
pub fn basis_eval(index: &[u32], x: &[f64]) -> f64 {
    let mut v = 1.0;
    for (&i, &xk) in index.iter().zip(x) {
        v *= xk.powi(i as i32) / factorial(i);
    }
    v
}

fn factorial(k: u32) -> f64 {
    (1..=k).map(|i| i as f64).product::<f64>().max(1.0)
}

/// Bandwidth policy: a fixed proportionality constant, or leave-one-out
/// cross-validation over a grid of constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthRule {
    Fixed(f64),
    Cv(Vec<f64>),
}

impl BandwidthRule {
    /// 10 log-spaced constants in [0.2, 5].
    pub fn default_cv_grid() -> Vec<f64> {
        let (lo, hi, k) = (0.2f64, 5.0f64, 10);
        (0..k)
            .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (k - 1) as f64).exp())
            .collect()
    }
}

impl Default for BandwidthRule {
    fn default() -> Self {
        BandwidthRule::Cv(Self::default_cv_grid())
    }
}

/// Kernel policy. `Auto` picks `smooth:(m + 2)` for an `m`-dimensional
/// covariate, the smoothness the limit theory asks of the weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelChoice {
    Auto,
    Fixed(KernelSpec),
}

impl KernelChoice {
    pub fn resolve(self, m: usize) -> KernelSpec {
        match self {
            KernelChoice::Auto => KernelSpec::PolySmooth(m as u32 + 2),
            KernelChoice::Fixed(spec) => spec,
        }
    }
}

/// Everything needed to evaluate the local polynomial fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmootherConfig {
    pub degree: u32,
    pub bandwidth: BandwidthRule,
    pub kernel: KernelChoice,
    /// Always added to the normal-equations diagonal when positive.
    pub ridge: f64,
    /// Hoelder exponent in `s = degree + gamma`.
    pub holder_gamma: f64,
}

impl SmootherConfig {
    pub fn new(degree: u32) -> Self {
        SmootherConfig {
            degree,
            bandwidth: BandwidthRule::default(),
            kernel: KernelChoice::Auto,
            ridge: 0.0,
            holder_gamma: 1.0,
        }
    }

    pub fn with_bandwidth(mut self, rule: BandwidthRule) -> Self {
        self.bandwidth = rule;
        self
    }

    pub fn with_kernel(mut self, kernel: KernelSpec) -> Self {
        self.kernel = KernelChoice::Fixed(kernel);
        self
    }

    /// `c_n = c {n log n}^(-1/(2s))`, `s = degree + gamma`.
    pub fn bandwidth_from_constant(&self, c: f64, n: usize) -> f64 {
        let s = self.degree as f64 + self.holder_gamma;
        let n = n as f64;
        c * (n * n.ln()).powf(-1.0 / (2.0 * s))
    }
}

/// Which column of the sample the smoother targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitTarget {
    Response,
    ResponseSquared,
}

/// A resolved fit: owns the (complete-case) sample and can be evaluated
/// anywhere in the cube. Fitted values at the design points are computed
/// through the same evaluation path.
#[derive(Debug, Clone)]
pub struct SmootherFit {
    config: SmootherConfig,
    /// Resolved proportionality constant.
    constant: f64,
    /// Resolved bandwidth `c_n`.
    bandwidth: f64,
    x: Vec<f64>,
    m: usize,
    target: Vec<f64>,
    basis: MultiIndexSet,
    fitted: Vec<f64>,
    /// Evaluation points (design rows) where ridge or bandwidth-doubling
    /// fallbacks were needed.
    fallback_rows: Vec<usize>,
}

impl SmootherFit {
    pub fn fitted(&self) -> &[f64] {
        &self.fitted
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn fallback_rows(&self) -> &[usize] {
        &self.fallback_rows
    }

    /// Evaluates the fit at an arbitrary point.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.m {
            return Err(Error::DimensionMismatch { expected: self.m, got: x.len() });
        }
        Ok(self.eval_detail(x)?.0)
    }

    fn eval_detail(&self, x: &[f64]) -> Result<(f64, bool)> {
        solve_at(
            &self.x,
            self.m,
            &self.target,
            None,
            x,
            self.bandwidth,
            &self.basis,
            self.config.ridge,
            self.config.kernel.resolve(self.m),
            true,
        )
    }
}

/// One kernel-weighted least squares solve centred at `x`.
///
/// `skip` removes a row from the sums (leave-one-out). With `fallbacks`
/// enabled, a failed factorization first gets an automatic ridge of
/// `1e-8 trace / basis` and then up to three bandwidth doublings;
/// otherwise it is reported as a singular design.
#[allow(clippy::too_many_arguments)]
fn solve_at(
    xs: &[f64],
    m: usize,
    target: &[f64],
    skip: Option<usize>,
    x: &[f64],
    bandwidth: f64,
    basis: &MultiIndexSet,
    ridge: f64,
    kernel: KernelSpec,
    fallbacks: bool,
) -> Result<(f64, bool)> {
    if bandwidth <= 0.0 {
        return Err(Error::NonpositiveBandwidth(bandwidth));
    }
    let k = basis.len();
    let n = target.len();
    let mut psi = vec![0.0; k];
    let mut used_fallback = false;
    let mut cn = bandwidth;
    let mut doublings = 0;
    loop {
        let mut a = DMatrix::<f64>::zeros(k, k);
        let mut b = DVector::<f64>::zeros(k);
        let mut effective = 0usize;
        for j in 0..n {
            if skip == Some(j) {
                continue;
            }
            let row = &xs[j * m..(j + 1) * m];
            let mut w = 1.0;
            for d in 0..m {
                w *= kernel.eval((row[d] - x[d]) / cn);
                if w == 0.0 {
                    break;
                }
            }
            if w == 0.0 {
                continue;
            }
            effective += 1;
            for (i, idx) in basis.indices().iter().enumerate() {
                let mut v = 1.0;
                for (d, &p) in idx.iter().enumerate() {
                    v *= ((row[d] - x[d]) / cn).powi(p as i32) / factorial(p);
                }
                psi[i] = v;
            }
            for r in 0..k {
                let wp = w * psi[r];
                b[r] += wp * target[j];
                for c in r..k {
                    a[(r, c)] += wp * psi[c];
                }
            }
        }
        for r in 0..k {
            for c in (r + 1)..k {
                a[(c, r)] = a[(r, c)];
            }
        }
        if ridge > 0.0 {
            for r in 0..k {
                a[(r, r)] += ridge;
            }
        }

        if effective >= k {
            if let Some(chol) = Cholesky::new(a.clone()) {
                let beta = chol.solve(&b);
                return Ok((beta[0], used_fallback));
            }
            if fallbacks {
                // Automatic ridge, then retry the factorization.
                let auto = 1e-8 * a.trace() / k as f64;
                let mut ar = a;
                for r in 0..k {
                    ar[(r, r)] += auto;
                }
                if let Some(chol) = Cholesky::new(ar) {
                    used_fallback = true;
                    let beta = chol.solve(&b);
                    return Ok((beta[0], used_fallback));
                }
            }
        }
        if fallbacks && doublings < 3 {
            cn *= 2.0;
            doublings += 1;
            used_fallback = true;
            continue;
        }
        return Err(Error::SingularDesign { point: x.to_vec() });
    }
}

/// Fits the smoother to the observed rows of `dataset`. Rows with
/// `delta = 0` never enter the sums.
pub fn fit(dataset: &Dataset, target: FitTarget, config: &SmootherConfig) -> Result<SmootherFit> {
    let data = if dataset.delta().is_some() { dataset.complete_cases()? } else { dataset.clone() };
    let n = data.n();
    let m = data.dim();
    let basis = MultiIndexSet::new(config.degree, m);
    if n < basis.len() {
        return Err(Error::SampleTooSmall { observed: n, required: basis.len() });
    }
    let tvals: Vec<f64> = match target {
        FitTarget::Response => data.response().to_vec(),
        FitTarget::ResponseSquared => data.response().iter().map(|v| v * v).collect(),
    };
    let xs: Vec<f64> = (0..n).flat_map(|j| data.row(j).iter().copied()).collect();

    let constant = match &config.bandwidth {
        BandwidthRule::Fixed(c) => {
            if *c <= 0.0 {
                return Err(Error::NonpositiveBandwidth(*c));
            }
            *c
        }
        BandwidthRule::Cv(grid) => cv_select(&xs, m, &tvals, config, grid)?,
    };
    let bandwidth = config.bandwidth_from_constant(constant, n);

    let mut fit = SmootherFit {
        config: config.clone(),
        constant,
        bandwidth,
        x: xs,
        m,
        target: tvals,
        basis,
        fitted: Vec::new(),
        fallback_rows: Vec::new(),
    };
    let mut fitted = Vec::with_capacity(n);
    let mut fallback_rows = Vec::new();
    for j in 0..n {
        let point = fit.x[j * m..(j + 1) * m].to_vec();
        let (value, fb) = fit.eval_detail(&point)?;
        fitted.push(value);
        if fb {
            fallback_rows.push(j);
        }
    }
    fit.fitted = fitted;
    fit.fallback_rows = fallback_rows;
    Ok(fit)
}

/// Residuals `y_j - rhat(X_j)` over the observed rows, in original order.
pub fn residuals(dataset: &Dataset, config: &SmootherConfig) -> Result<Vec<f64>> {
    let data = if dataset.delta().is_some() { dataset.complete_cases()? } else { dataset.clone() };
    let fit = fit(&data, FitTarget::Response, config)?;
    Ok(data.response().iter().zip(fit.fitted()).map(|(y, r)| y - r).collect())
}

/// Leave-one-out cross-validation over a grid of proportionality
/// constants. Singular leave-one-out fits make the whole grid value
/// infeasible; ties break toward the smaller constant.
pub fn cv_bandwidth(dataset: &Dataset, config: &SmootherConfig, grid: &[f64]) -> Result<f64> {
    let data = if dataset.delta().is_some() { dataset.complete_cases()? } else { dataset.clone() };
    let n = data.n();
    let m = data.dim();
    let basis = MultiIndexSet::new(config.degree, m);
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty cross-validation grid".into()));
    }
    if n < basis.len() + 1 {
        return Err(Error::SampleTooSmall { observed: n, required: basis.len() + 1 });
    }
    let tvals = data.response().to_vec();
    let xs: Vec<f64> = (0..n).flat_map(|j| data.row(j).iter().copied()).collect();
    cv_select(&xs, m, &tvals, config, grid)
}

fn cv_select(
    xs: &[f64],
    m: usize,
    target: &[f64],
    config: &SmootherConfig,
    grid: &[f64],
) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty cross-validation grid".into()));
    }
    let n = target.len();
    let basis = MultiIndexSet::new(config.degree, m);
    let mut best: Option<(f64, f64)> = None; // (score, constant)
    let mut sorted: Vec<f64> = grid.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for &c in &sorted {
        if c <= 0.0 {
            return Err(Error::NonpositiveBandwidth(c));
        }
        let cn = config.bandwidth_from_constant(c, n);
        let mut sum = 0.0;
        let mut feasible = true;
        for j in 0..n {
            let point = xs[j * m..(j + 1) * m].to_vec();
            match solve_at(
                xs,
                m,
                target,
                Some(j),
                &point,
                cn,
                &basis,
                config.ridge,
                config.kernel.resolve(m),
                false,
            ) {
                Ok((pred, _)) => {
                    let e = target[j] - pred;
                    sum += e * e;
                }
                Err(_) => {
                    feasible = false;
                    break;
                }
            }
        }
        if !feasible {
            continue;
        }
        let score = sum / n as f64;
        // Near-ties (rounding noise on exactly reproducible data) keep the
        // smaller constant: the grid is scanned in ascending order and an
        // incumbent is only replaced by a materially better score.
        if best.map_or(true, |(s, _)| score < s - 1e-12 * (1.0 + s)) {
            best = Some((score, c));
        }
    }
    best.map(|(_, c)| c).ok_or(Error::CvInfeasible)
}

/// Per-row scale estimate `sqrt(max(rhat2 - rhat^2, 1e-10))`, with both
/// moment fits resolving their bandwidths under the same policy.
pub struct ScaleEstimate {
    pub sigma: Vec<f64>,
    pub response_fit: SmootherFit,
    pub squared_fit: SmootherFit,
}

const SCALE_FLOOR: f64 = 1e-10;

pub fn scale_estimate(dataset: &Dataset, config: &SmootherConfig) -> Result<ScaleEstimate> {
    scale_estimate_with(dataset, config, config)
}

/// Variant with a separate bandwidth policy for the second-moment fit,
/// used when a previously resolved constant is replayed.
pub fn scale_estimate_with(
    dataset: &Dataset,
    config: &SmootherConfig,
    squared_config: &SmootherConfig,
) -> Result<ScaleEstimate> {
    let response_fit = fit(dataset, FitTarget::Response, config)?;
    let squared_fit = fit(dataset, FitTarget::ResponseSquared, squared_config)?;
    let sigma = response_fit
        .fitted()
        .iter()
        .zip(squared_fit.fitted())
        .map(|(r, r2)| (r2 - r * r).max(SCALE_FLOOR).sqrt())
        .collect();
    Ok(ScaleEstimate { sigma, response_fit, squared_fit })
}
