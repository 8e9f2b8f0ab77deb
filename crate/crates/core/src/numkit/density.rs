use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Log-density of `Laplace(loc, scale)` at `x`.
pub fn laplace_logpdf(x: f64, loc: f64, scale: f64) -> Result<f64> {
    if !(scale > 0.0) {
        return Err(Error::InvalidScale(scale));
    }
    Ok(-(2.0 * scale).ln() - (x - loc).abs() / scale)
}

/// Log-density of `N(mean, std²)` at `x`.
pub fn gaussian_logpdf(x: f64, mean: f64, std: f64) -> Result<f64> {
    if !(std > 0.0) {
        return Err(Error::InvalidScale(std));
    }
    let z = x - mean;
    Ok(-0.5 * (2.0 * PI * std * std).ln() - z * z / (2.0 * std * std))
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + eˣ)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Inverse of [`softplus`] for `y > 0`.
pub fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y + (-(-y).exp_m1()).ln()
    } else {
        y.exp_m1().ln()
    }
}
