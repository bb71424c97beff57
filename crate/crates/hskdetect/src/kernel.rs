//! Compactly supported univariate kernels and the product weight used by
//! the local polynomial smoother.
//!
//! Every kernel is a probability density on `[-1, 1]`. The `PolySmooth(p)`
//! family `c_p (1 - u^2)^p` has `p` continuous derivatives vanishing at the
//! support boundary, which is what the asymptotic theory asks of the
//! smoother weights; Epanechnikov (`p = 1`) and tricube are the usual
//! practical choices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelSpec {
    Epanechnikov,
    Tricube,
    /// `c_p (1 - u^2)^p` on `[-1, 1]`, `p >= 1`.
    PolySmooth(u32),
}

impl KernelSpec {
    /// Parses "epanechnikov", "tricube" or "smooth:p".
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "epanechnikov" => Ok(KernelSpec::Epanechnikov),
            "tricube" => Ok(KernelSpec::Tricube),
            other => {
                if let Some(p) = other.strip_prefix("smooth:") {
                    let p: u32 = p.parse().map_err(|_| {
                        Error::InvalidParameter(format!("bad smoothness order in {other:?}"))
                    })?;
                    if p == 0 {
                        return Err(Error::InvalidParameter("smooth:p requires p >= 1".into()));
                    }
                    Ok(KernelSpec::PolySmooth(p))
                } else {
                    Err(Error::InvalidParameter(format!("unknown kernel {other:?}")))
                }
            }
        }
    }

    pub fn eval(self, u: f64) -> f64 {
        if u.abs() > 1.0 {
            return 0.0;
        }
        match self {
            KernelSpec::Epanechnikov => 0.75 * (1.0 - u * u),
            KernelSpec::Tricube => {
                let t = 1.0 - u.abs().powi(3);
                (70.0 / 81.0) * t * t * t
            }
            KernelSpec::PolySmooth(p) => poly_smooth_norm(p) * (1.0 - u * u).powi(p as i32),
        }
    }
}

/// Normalizing constant of `(1 - u^2)^p` on `[-1, 1]`:
/// `(2p + 1)! / (2^(2p + 1) (p!)^2)`.
fn poly_smooth_norm(p: u32) -> f64 {
    // integral = 2^(2p+1) (p!)^2 / (2p+1)!; accumulate the ratio directly.
    let mut c = 0.5;
    for k in 1..=p {
        c *= (2.0 * k as f64 + 1.0) / (2.0 * k as f64);
    }
    c
}

/// `w(u) = w_1(u_1) ... w_m(u_m)`; zero as soon as one coordinate leaves
/// the support.
pub fn product_weight(specs: &[KernelSpec], u: &[f64]) -> Result<f64> {
    if specs.len() != u.len() {
        return Err(Error::DimensionMismatch { expected: specs.len(), got: u.len() });
    }
    let mut w = 1.0;
    for (&spec, &v) in specs.iter().zip(u) {
        w *= spec.eval(v);
        if w == 0.0 {
            return Ok(0.0);
        }
    }
    Ok(w)
}
