//! Point estimators of the population mean from Hansen–Hurwitz means.
//!
//! `x_bar` is always the true population mean of the auxiliary variable,
//! assumed known.

use crate::error::{Error, Result};
use crate::model::{EstimateSet, HhMeans};

/// Relative threshold below which `x̄*` is treated as zero.
pub const RATIO_EPSILON: f64 = 1e-9;

pub fn t1(hh: &HhMeans) -> f64 {
    hh.y_star
}

/// `(ȳ*/x̄*)·X̄`.
pub fn t_ratio(hh: &HhMeans, x_bar: f64) -> Result<f64> {
    if hh.x_star.is_nan() || hh.x_star.abs() <= RATIO_EPSILON * x_bar.abs() {
        return Err(Error::RatioUndefined { x_star: hh.x_star, x_bar });
    }
    Ok(hh.y_star / hh.x_star * x_bar)
}

/// `ȳ* + b·(X̄ − x̄*)`.
pub fn t_regression(hh: &HhMeans, x_bar: f64, b: f64) -> f64 {
    hh.y_star + b * (x_bar - hh.x_star)
}

/// `m1·ȳ* + m2·(ȳ*/x̄*)·X̄`. The weights are not required to sum to one.
pub fn t_proposed(hh: &HhMeans, x_bar: f64, m1: f64, m2: f64) -> Result<f64> {
    if m2 == 0.0 {
        return Ok(m1 * t1(hh));
    }
    Ok(m1 * t1(hh) + m2 * t_ratio(hh, x_bar)?)
}

pub fn estimate_all(hh: &HhMeans, x_bar: f64, b: f64, m1: f64, m2: f64) -> EstimateSet {
    EstimateSet {
        t1: t1(hh),
        t_r: t_ratio(hh, x_bar).ok(),
        t_lr: t_regression(hh, x_bar, b),
        t_p: t_proposed(hh, x_bar, m1, m2).ok(),
        b_used: b,
        m1_used: m1,
        m2_used: m2,
    }
}
