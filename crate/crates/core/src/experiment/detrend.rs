//! Least-squares polynomial detrending of a time series.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Polynomial in the conditioned variable `x = (t - center) / half_range`,
/// which maps the sample times onto [-1, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialFit {
    /// Ascending powers of `x`.
    pub coefficients: Vec<f64>,
    pub center: f64,
    pub half_range: f64,
    /// `value - fit(time)` for each input sample.
    pub residuals: Vec<f64>,
}

impl PolynomialFit {
    pub fn degree(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn scaled(&self, t: f64) -> f64 {
        (t - self.center) / self.half_range
    }

    pub fn eval(&self, t: f64) -> f64 {
        let x = self.scaled(t);
        self.coefficients.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    /// Population standard deviation of the residuals.
    pub fn residual_std(&self) -> f64 {
        population_std(&self.residuals)
    }
}

pub(crate) fn population_std(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Ordinary least squares fit of `values` against `times`, solved by SVD on
/// the conditioned monomial basis.
pub fn fit_polynomial(times: &[f64], values: &[f64], degree: usize) -> Result<PolynomialFit> {
    if times.len() != values.len() {
        return Err(Error::Shape(format!(
            "{} times but {} values",
            times.len(),
            values.len()
        )));
    }
    if times.len() < degree + 1 {
        return Err(Error::Conditioning(format!(
            "{} samples cannot determine a degree-{degree} polynomial",
            times.len()
        )));
    }
    let (lo, hi) = times
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &t| (lo.min(t), hi.max(t)));
    let (center, half_range) = if degree == 0 {
        (0.5 * (lo + hi), 1.0)
    } else {
        if !(hi > lo) {
            return Err(Error::Conditioning("all sample times are equal".into()));
        }
        (0.5 * (lo + hi), 0.5 * (hi - lo))
    };

    let design = DMatrix::from_fn(times.len(), degree + 1, |i, j| {
        ((times[i] - center) / half_range).powi(j as i32)
    });
    let rhs = DVector::from_column_slice(values);
    let svd = design.clone().svd(true, true);
    let s_max = svd.singular_values.max();
    let s_min = svd.singular_values.min();
    if !(s_min > 1e-12 * s_max) {
        return Err(Error::Conditioning(format!(
            "design matrix is rank deficient (singular values {s_min:e} / {s_max:e})"
        )));
    }
    let coef = svd
        .solve(&rhs, 0.0)
        .map_err(|e| Error::Conditioning(e.to_string()))?;
    let fitted = &design * &coef;
    let residuals = values.iter().zip(fitted.iter()).map(|(v, f)| v - f).collect();
    Ok(PolynomialFit {
        coefficients: coef.iter().copied().collect(),
        center,
        half_range,
        residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_polynomial_is_interpolated() {
        let times: Vec<f64> = (0..49).map(|k| f64::from(k) * 225.0).collect();
        let f = |t: f64| 990.537e-6 + 1e-13 * t - 2e-18 * t * t + 3e-23 * t.powi(3) - 1e-27 * t.powi(4);
        let values: Vec<f64> = times.iter().map(|&t| f(t)).collect();
        let fit = fit_polynomial(&times, &values, 4).unwrap();
        for (r, v) in fit.residuals.iter().zip(&values) {
            assert!(r.abs() < 1e-12 * v.abs());
        }
        assert!((fit.eval(5000.0) - f(5000.0)).abs() < 1e-12 * f(5000.0));
    }

    #[test]
    fn degree_zero_is_the_mean() {
        let v = [1.0, 2.0, 4.0, 9.0];
        let fit = fit_polynomial(&[0.0, 1.0, 2.0, 3.0], &v, 0).unwrap();
        assert!((fit.coefficients[0] - 4.0).abs() < 1e-14);
        let pop = f64::sqrt((9.0 + 4.0 + 0.0 + 25.0) / 4.0);
        assert!((fit.residual_std() - pop).abs() < 1e-14);
        // Equal times are fine for a constant.
        assert!(fit_polynomial(&[1.0, 1.0], &[1.0, 3.0], 0).is_ok());
    }

    #[test]
    fn rank_deficiency_is_reported() {
        assert!(matches!(
            fit_polynomial(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0], 1),
            Err(Error::Conditioning(_))
        ));
        assert!(matches!(
            fit_polynomial(&[0.0, 1.0, 2.0], &[1.0, 2.0, 3.0], 4),
            Err(Error::Conditioning(_))
        ));
        // Five samples on only two distinct times.
        assert!(matches!(
            fit_polynomial(&[0.0, 0.0, 1.0, 1.0, 1.0], &[1.0; 5], 2),
            Err(Error::Conditioning(_))
        ));
    }

    #[test]
    fn detrending_is_idempotent() {
        let times: Vec<f64> = (0..49).map(f64::from).collect();
        let values: Vec<f64> = times.iter().map(|t| (t * 1.7).sin() + 0.01 * t).collect();
        let first = fit_polynomial(&times, &values, 4).unwrap();
        let second = fit_polynomial(&times, &first.residuals, 4).unwrap();
        let (a, b) = (first.residual_std(), second.residual_std());
        assert!(((a - b) / a).abs() < 1e-12);
    }
}
