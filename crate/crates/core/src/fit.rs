//! Two-parameter least-squares fits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitModel {
    /// `y = intercept + slope * x`; params are `(intercept, slope)`.
    Linear,
    /// `y = a / N^nu`; params are `(a, nu)`.
    Power,
    /// `y = -gamma ln N + b`; params are `(gamma, b)`.
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: FitModel,
    pub params: [f64; 2],
    pub std_errors: [f64; 2],
    /// Covariance of the regression coefficients: `(ln a, -nu)` for the power
    /// law, `(b, -gamma)` for the log law, `(intercept, slope)` otherwise.
    pub covariance: [[f64; 2]; 2],
    /// Residuals of the linearized fit, one per point.
    pub residuals: Vec<f64>,
    pub residual_norm: f64,
    /// Set when the size range is too narrow for the exponent to be trusted.
    pub caveat: bool,
}

impl FitResult {
    pub fn rms_residual(&self) -> f64 {
        (self.residual_norm.powi(2) / self.residuals.len() as f64).sqrt()
    }
}

struct Line {
    intercept: f64,
    slope: f64,
    cov: [[f64; 2]; 2],
    residuals: Vec<f64>,
}

fn line_fit(x: &[f64], y: &[f64], sigma: Option<&[f64]>) -> Result<Line> {
    let n = x.len();
    if n != y.len() || sigma.is_some_and(|s| s.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: y.len(),
        });
    }
    if n < 3 {
        return Err(Error::invalid("a fit needs at least three points"));
    }
    if !x.iter().chain(y).all(|v| v.is_finite()) {
        return Err(Error::invalid("fit data must be finite"));
    }
    let w: Vec<f64> = match sigma {
        Some(s) => {
            if !s.iter().all(|v| *v > 0.0 && v.is_finite()) {
                return Err(Error::invalid("fit uncertainties must be positive"));
            }
            s.iter().map(|v| 1.0 / (v * v)).collect()
        }
        None => vec![1.0; n],
    };
    let sw: f64 = w.iter().sum();
    let xm = w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() / sw;
    let ym = w.iter().zip(y).map(|(w, y)| w * y).sum::<f64>() / sw;
    let sxx: f64 = w.iter().zip(x).map(|(w, x)| w * (x - xm).powi(2)).sum();
    if !(sxx > 1e-14 * sw * xm.abs().max(1.0).powi(2)) {
        return Err(Error::invalid("fit abscissae are degenerate"));
    }
    let sxy: f64 = (0..n).map(|i| w[i] * (x[i] - xm) * (y[i] - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let residuals: Vec<f64> = (0..n).map(|i| y[i] - intercept - slope * x[i]).collect();
    let chi2: f64 = (0..n).map(|i| w[i] * residuals[i].powi(2)).sum();
    // unweighted fits estimate the noise from the residuals
    let s2 = if sigma.is_some() { 1.0 } else { chi2 / (n - 2) as f64 };
    let var_slope = s2 / sxx;
    let var_icpt = s2 * (1.0 / sw + xm * xm / sxx);
    let cov_is = -s2 * xm / sxx;
    Ok(Line {
        intercept,
        slope,
        cov: [[var_icpt, cov_is], [cov_is, var_slope]],
        residuals,
    })
}

fn finish(model: FitModel, params: [f64; 2], std_errors: [f64; 2], line: Line, caveat: bool) -> FitResult {
    let residual_norm = line.residuals.iter().map(|r| r * r).sum::<f64>().sqrt();
    FitResult {
        model,
        params,
        std_errors,
        covariance: line.cov,
        residuals: line.residuals,
        residual_norm,
        caveat,
    }
}

pub fn fit_linear(x: &[f64], y: &[f64], sigma: Option<&[f64]>) -> Result<FitResult> {
    let line = line_fit(x, y, sigma)?;
    let se = [line.cov[0][0].sqrt(), line.cov[1][1].sqrt()];
    Ok(finish(FitModel::Linear, [line.intercept, line.slope], se, line, false))
}

/// Size ratio below which fitted exponents carry a caveat.
pub const MIN_SIZE_RATIO: f64 = 8.0;

fn narrow(sizes: &[f64]) -> bool {
    let lo = sizes.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = sizes.iter().copied().fold(0.0, f64::max);
    hi / lo < MIN_SIZE_RATIO
}

fn check_sizes(sizes: &[f64]) -> Result<()> {
    if !sizes.iter().all(|n| *n > 0.0 && n.is_finite()) {
        return Err(Error::invalid("sizes must be positive"));
    }
    Ok(())
}

/// `xi2 = a / N^nu` by least squares on `ln xi2 = ln a - nu ln N`.
/// `sigma` holds absolute errors of `xi2`.
pub fn fit_power_law(sizes: &[f64], values: &[f64], sigma: Option<&[f64]>) -> Result<FitResult> {
    check_sizes(sizes)?;
    if !values.iter().all(|v| *v > 0.0) {
        return Err(Error::invalid("power-law fit needs positive values"));
    }
    let x: Vec<f64> = sizes.iter().map(|n| n.ln()).collect();
    let y: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let rel: Option<Vec<f64>> = sigma.map(|s| s.iter().zip(values).map(|(e, v)| e / v).collect());
    let line = line_fit(&x, &y, rel.as_deref())?;
    let a = line.intercept.exp();
    let se = [a * line.cov[0][0].sqrt(), line.cov[1][1].sqrt()];
    Ok(finish(FitModel::Power, [a, -line.slope], se, line, narrow(sizes)))
}

/// `y = -gamma ln N + b`.
pub fn fit_log_divergence(sizes: &[f64], values: &[f64], sigma: Option<&[f64]>) -> Result<FitResult> {
    check_sizes(sizes)?;
    let x: Vec<f64> = sizes.iter().map(|n| n.ln()).collect();
    let line = line_fit(&x, values, sigma)?;
    let se = [line.cov[1][1].sqrt(), line.cov[0][0].sqrt()];
    Ok(finish(FitModel::Log, [-line.slope, line.intercept], se, line, narrow(sizes)))
}
