//! Sub-sample peak refinement by least-squares fit of a raised cosine.
//!
//! Model: `y(t) = B + A/2 (1 + cos(pi (t - t0) / W))` for `|t - t0| <= W`,
//! `y(t) = B` outside. The fit runs in window-normalized coordinates (time
//! in grid steps relative to the middle point, values rescaled to [0, 1])
//! with a damped Gauss-Newton (Levenberg-Marquardt) iteration and an
//! analytic Jacobian.

use std::f64::consts::PI;

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::correlate::{Correlogram, PeakLocation};
use crate::{Error, Result};

const MAX_ITERATIONS: usize = 100;
const STEP_TOLERANCE: f64 = 1e-10;
const GRID_TOLERANCE: f64 = 1e-6;

/// Raised-cosine pulse parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RaisedCosine {
    pub amplitude: f64,
    pub center: f64,
    pub half_width: f64,
    pub baseline: f64,
}

impl RaisedCosine {
    pub fn eval(&self, t: f64) -> f64 {
        let x = t - self.center;
        if x.abs() > self.half_width {
            self.baseline
        } else {
            self.baseline + 0.5 * self.amplitude * (1.0 + (PI * x / self.half_width).cos())
        }
    }

    /// Partial derivatives with respect to (amplitude, center, half_width, baseline).
    pub fn gradient(&self, t: f64) -> [f64; 4] {
        let x = t - self.center;
        let w = self.half_width;
        if x.abs() > w {
            return [0.0, 0.0, 0.0, 1.0];
        }
        let theta = PI * x / w;
        let (s, c) = theta.sin_cos();
        let half_a = 0.5 * self.amplitude;
        [
            0.5 * (1.0 + c),
            half_a * s * PI / w,
            half_a * s * PI * x / (w * w),
            1.0,
        ]
    }

    fn from_vector(p: &Vector4<f64>) -> Self {
        RaisedCosine {
            amplitude: p[0],
            center: p[1],
            half_width: p[2],
            baseline: p[3],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RaisedCosineFit {
    /// Refined arrival time, seconds.
    pub center: f64,
    pub amplitude: f64,
    /// Seconds.
    pub half_width: f64,
    pub baseline: f64,
    /// RMS of the fit residual, in input value units.
    pub residual_rms: f64,
    /// False when the solver stalled and `center` comes from the 3-point
    /// parabolic vertex.
    pub converged: bool,
    pub iterations: usize,
}

impl RaisedCosineFit {
    pub fn model(&self) -> RaisedCosine {
        RaisedCosine {
            amplitude: self.amplitude,
            center: self.center,
            half_width: self.half_width,
            baseline: self.baseline,
        }
    }
}

/// Fits the raised cosine to an odd number (at least 5, normally 7) of
/// uniformly spaced `(time, value)` points whose middle point is the peak.
pub fn fit_peak(window: &[(f64, f64)]) -> Result<RaisedCosineFit> {
    let n = window.len();
    if n < 5 || n.is_multiple_of(2) {
        return Err(Error::shape(format!(
            "peak window needs an odd number (>= 5) of points, got {n}"
        )));
    }
    let mid = n / 2;
    let step = (window[n - 1].0 - window[0].0) / (n - 1) as f64;
    if !(step > 0.0) {
        return Err(Error::shape("peak window times must increase"));
    }
    if window
        .windows(2)
        .any(|w| ((w[1].0 - w[0].0) - step).abs() > GRID_TOLERANCE * step)
    {
        return Err(Error::shape("peak window is not on a uniform grid"));
    }
    let (lo, hi) = window
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, y)| {
            (lo.min(y), hi.max(y))
        });
    if hi == lo {
        return Err(Error::DegeneratePeak);
    }
    let t_mid = window[mid].0;
    let scale = hi - lo;
    let u: Vec<f64> = (0..n).map(|k| k as f64 - mid as f64).collect();
    let v: Vec<f64> = window.iter().map(|&(_, y)| (y - lo) / scale).collect();

    let solved = levenberg_marquardt(&u, &v);
    let span = mid as f64;
    let (p, converged, iterations) = match solved {
        Some((p, iters)) if p[2] > 0.0 && p[1].abs() <= span => (p, true, iters),
        other => {
            let iters = other.map_or(MAX_ITERATIONS, |(_, i)| i);
            let vertex = parabolic_vertex(v[mid - 1], v[mid], v[mid + 1]);
            (Vector4::new(1.0, vertex, 2.0, 0.0), false, iters)
        }
    };
    let cost = residual_sum_squares(&p, &u, &v);
    Ok(RaisedCosineFit {
        center: t_mid + p[1] * step,
        amplitude: p[0] * scale,
        half_width: p[2] * step,
        baseline: p[3] * scale + lo,
        residual_rms: (cost / n as f64).sqrt() * scale,
        converged,
        iterations,
    })
}

/// Arrival time of the peak: the fitted center on the correlogram time axis.
pub fn refine_arrival(corr: &Correlogram, peak: &PeakLocation) -> Result<f64> {
    debug_assert!(peak.index < corr.len());
    Ok(fit_peak(&peak.window)?.center)
}

/// Vertex offset of the parabola through (-1, a), (0, b), (1, c).
pub fn parabolic_vertex(a: f64, b: f64, c: f64) -> f64 {
    let denom = a - 2.0 * b + c;
    if denom >= 0.0 {
        return 0.0;
    }
    (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
}

fn residual_sum_squares(p: &Vector4<f64>, u: &[f64], v: &[f64]) -> f64 {
    let m = RaisedCosine::from_vector(p);
    u.iter().zip(v).map(|(&t, &y)| (m.eval(t) - y).powi(2)).sum()
}

/// Returns the parameter vector and iteration count when the relative step
/// falls below tolerance within the iteration budget.
fn levenberg_marquardt(u: &[f64], v: &[f64]) -> Option<(Vector4<f64>, usize)> {
    let mut p = Vector4::new(1.0, 0.0, 2.0, 0.0);
    let mut cost = residual_sum_squares(&p, u, v);
    let mut lambda = 1e-3;
    for iter in 1..=MAX_ITERATIONS {
        let model = RaisedCosine::from_vector(&p);
        let mut jtj = Matrix4::zeros();
        let mut jtr = Vector4::zeros();
        for (&t, &y) in u.iter().zip(v) {
            let g = Vector4::from(model.gradient(t));
            let r = model.eval(t) - y;
            jtj += g * g.transpose();
            jtr += g * r;
        }
        let mut damped = jtj;
        for i in 0..4 {
            damped[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
        }
        let Some(chol) = damped.cholesky() else {
            lambda *= 10.0;
            continue;
        };
        let delta = chol.solve(&(-jtr));
        let relative = delta.norm() / (p.norm() + 1e-12);
        let candidate = p + delta;
        let new_cost = if candidate[2] > 0.0 {
            residual_sum_squares(&candidate, u, v)
        } else {
            f64::INFINITY
        };
        if new_cost <= cost {
            p = candidate;
            cost = new_cost;
            lambda = (lambda * 0.1).max(1e-15);
        } else {
            lambda *= 10.0;
        }
        if relative < STEP_TOLERANCE {
            return Some((p, iter));
        }
    }
    None
}
