//! Ordinary least squares on the transformed coordinates implied by each
//! scaling law.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum FitModel {
    /// `y = slope * x + intercept`.
    LinearInX,
    /// `ln y = slope * ln x + intercept`.
    PowerLaw,
    /// `ln y = slope * x + intercept`.
    Exponential,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScalingFit {
    pub model: FitModel,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Human-readable description of the abscissa, e.g. "N xi^2".
    pub x_definition: String,
    pub n_points: usize,
}

/// Fit `(x, D)` pairs under `model`, transforming coordinates as needed.
pub fn fit_scaling(points: &[(f64, f64)], model: FitModel, x_definition: &str) -> Result<ScalingFit> {
    if points.len() < 3 {
        return Err(Error::invalid(format!(
            "scaling fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    let mut xs = Vec::with_capacity(points.len());
    let mut ys = Vec::with_capacity(points.len());
    let mut bad = Vec::new();
    for &(x, y) in points {
        let (xt, yt) = match model {
            FitModel::LinearInX => (x, y),
            FitModel::Exponential => {
                if y <= 0.0 {
                    bad.push((x, y));
                    continue;
                }
                (x, y.ln())
            }
            FitModel::PowerLaw => {
                if y <= 0.0 || x <= 0.0 {
                    bad.push((x, y));
                    continue;
                }
                (x.ln(), y.ln())
            }
        };
        xs.push(xt);
        ys.push(yt);
    }
    if !bad.is_empty() {
        return Err(Error::invalid(format!(
            "non-positive data under a log transform: {bad:?}"
        )));
    }
    let (slope, intercept, r_squared) = ols(&xs, &ys);
    Ok(ScalingFit {
        model,
        slope,
        intercept,
        r_squared,
        x_definition: x_definition.to_string(),
        n_points: points.len(),
    })
}

fn ols(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy > 0.0 {
        let ss_res: f64 = xs
            .iter()
            .zip(ys)
            .map(|(&x, &y)| {
                let r = y - (slope * x + intercept);
                r * r
            })
            .sum();
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    } else {
        1.0
    };
    (slope, intercept, r_squared)
}

/// Linear fit of the non-Markovianity measure against the noise correlation
/// time.
pub fn nonmarkov_vs_tau_n(points: &[(f64, f64)]) -> Result<ScalingFit> {
    if points.len() < 4 {
        return Err(Error::invalid(format!(
            "correlation-time trend needs at least 4 points, got {}",
            points.len()
        )));
    }
    fit_scaling(points, FitModel::LinearInX, "tau_n")
}
