//! Robust location estimation of the empirical margin distribution.
//!
//! The estimate is the root of `sum_i psi((theta - q_i) / s) = 0` over the
//! margins `q_i`. Small scales push the root to the sample median, large
//! scales to the sample mean, with the transition governed by `s`. Scale
//! selection rules from the variance-based and quantile-based bounds live
//! here as well.

use crate::error::{Error, Result};
use crate::loss::psi;

const MAX_BISECTION_ITERS: usize = 200;

/// Margins `q_i = y_i h(x_i)` of a sample under some scoring rule.
#[derive(Debug, Clone)]
pub struct MarginSample {
    values: Vec<f64>,
}

impl MarginSample {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("margin sample must be nonempty".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "margin sample contains non-finite values".into(),
            ));
        }
        Ok(MarginSample { values })
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Result of [`catoni_estimate`]: the located root, the residual
/// `(1/n) sum_i psi((theta - q_i)/s)` at the root, and the bisection
/// iteration count.
#[derive(Debug, Clone, Copy)]
pub struct CatoniEstimate {
    pub value: f64,
    pub residual: f64,
    pub iterations: usize,
}

fn mean_psi_residual(theta: f64, q: &[f64], s: f64) -> f64 {
    q.iter().map(|&qi| psi((theta - qi) / s)).sum::<f64>() / q.len() as f64
}

/// Locate a root of the influence equation by bisection on `[min q, max q]`.
///
/// The residual map is continuous and nondecreasing in `theta`, so bisection
/// converges unconditionally. When the root set is an interval (small `s`),
/// any point with `|residual| <= tol` is a valid answer.
pub fn catoni_estimate(q: &MarginSample, s: f64, tol: f64) -> Result<CatoniEstimate> {
    if s.is_nan() || s <= 0.0 || !s.is_finite() {
        return Err(Error::InvalidInput(format!(
            "scale s must be positive, got {s}"
        )));
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let values = q.values();
    let mut lo = q.min();
    let mut hi = q.max();
    if lo == hi {
        return Ok(CatoniEstimate {
            value: lo,
            residual: 0.0,
            iterations: 0,
        });
    }
    for iter in 0..MAX_BISECTION_ITERS {
        let mid = 0.5 * (lo + hi);
        let r = mean_psi_residual(mid, values, s);
        if r.abs() <= tol {
            return Ok(CatoniEstimate {
                value: mid,
                residual: r,
                iterations: iter + 1,
            });
        }
        if r < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::Internal(format!(
        "bisection failed to reach residual tolerance {tol} after {MAX_BISECTION_ITERS} iterations"
    )))
}

/// Guaranteed displacement bound `s / sqrt(n)` under single-point corruption
/// (valid once the near-root index set covers at least half the sample).
pub fn stability_radius(n: usize, s: f64) -> f64 {
    s / (n as f64).sqrt()
}

/// Smallest admissible scale under the variance rule: `v * k / gamma`.
/// Callers may use any scale at least this large.
pub fn scale_from_variance(v: f64, k: f64, gamma: f64) -> Result<f64> {
    if v.is_nan() || v < 0.0 {
        return Err(Error::InvalidInput(format!(
            "variance must be non-negative, got {v}"
        )));
    }
    if k.is_nan() || k <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "bias fraction k must be positive, got {k}"
        )));
    }
    if gamma.is_nan() || gamma <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    Ok(v * k / gamma)
}

/// One-shot data-driven scale: `sqrt(n * v / (2 lambda log(1/delta)))` where
/// `v` is the empirical quantile of `|q_i|` at `quantile_level`.
pub fn scale_from_quantile(
    q: &MarginSample,
    lambda: f64,
    delta: f64,
    quantile_level: f64,
) -> Result<f64> {
    if lambda.is_nan() || lambda <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    if delta.is_nan() || delta <= 0.0 || delta >= 1.0 {
        return Err(Error::InvalidInput(format!(
            "delta must be in (0,1), got {delta}"
        )));
    }
    if quantile_level.is_nan() || quantile_level <= 0.0 || quantile_level >= 1.0 {
        return Err(Error::InvalidInput(format!(
            "quantile level must be in (0,1), got {quantile_level}"
        )));
    }
    let mut abs: Vec<f64> = q.values().iter().map(|v| v.abs()).collect();
    abs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let v = nearest_rank_quantile(&abs, quantile_level);
    let n = q.n() as f64;
    Ok((n * v / (2.0 * lambda * (1.0 / delta).ln())).sqrt())
}

/// Bound-minimizing scale `sqrt(n * v / (2 log(2/delta)))`.
pub fn bound_minimizing_scale(v: f64, n: usize, delta: f64) -> Result<f64> {
    if v.is_nan() || v <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "variance bound must be positive, got {v}"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidInput("need n >= 1".into()));
    }
    if delta.is_nan() || delta <= 0.0 || delta >= 1.0 {
        return Err(Error::InvalidInput(format!(
            "delta must be in (0,1), got {delta}"
        )));
    }
    Ok((n as f64 * v / (2.0 * (2.0 / delta).ln())).sqrt())
}

/// Lower nearest-rank quantile of pre-sorted values: element at 1-based rank
/// `ceil(level * n)`. No interpolation.
pub fn nearest_rank_quantile(sorted: &[f64], level: f64) -> f64 {
    let n = sorted.len();
    debug_assert!(n > 0);
    let rank = (level * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}
