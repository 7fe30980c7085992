//! Chromatic dispersion as an all-pass quadratic spectral phase on the
//! optical field envelope.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::FiberLink;
use crate::spectral::bin_frequency;
use crate::SPEED_OF_LIGHT;

/// Coefficient `k` (rad/Hz^2) of the spectral phase `phi(f) = k f^2`
/// accumulated over `path_length` meters, `k = pi lambda^2 D L / c`.
pub fn dispersion_phase_coefficient(dispersion_si: f64, wavelength: f64, path_length: f64) -> f64 {
    std::f64::consts::PI * wavelength * wavelength * dispersion_si * path_length / SPEED_OF_LIGHT
}

/// Pulse spread `lambda^2 D L df / c` for a signal of bandwidth `bandwidth_hz`.
pub fn dispersion_spread(dispersion_si: f64, wavelength: f64, path_length: f64, bandwidth_hz: f64) -> f64 {
    wavelength * wavelength * bandwidth_hz / SPEED_OF_LIGHT * dispersion_si * path_length
}

/// Applies the all-pass phase in place to a complex field sampled at
/// `sample_rate`. The transform is circular over the buffer length.
pub(crate) fn disperse_field(field: &mut [Complex64], sample_rate: f64, coefficient: f64) {
    let n = field.len();
    if n == 0 || coefficient == 0.0 {
        return;
    }
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(field);
    for (k, v) in field.iter_mut().enumerate() {
        let f = bin_frequency(k, n) * sample_rate;
        *v *= Complex64::from_polar(1.0, coefficient * f * f);
    }
    planner.plan_fft_inverse(n).process(field);
    let scale = 1.0 / n as f64;
    field.iter_mut().for_each(|v| *v *= scale);
}

/// Disperses an intensity envelope: the field amplitude `sqrt(I)` passes
/// through the all-pass filter and the detector returns `|field|^2`.
///
/// Total energy `sum(I)` is preserved. Zero dispersion or zero path length
/// returns the input unchanged. Negative input samples are treated as zero.
pub fn apply_dispersion(
    intensity: &[f64],
    sample_rate: f64,
    link: &FiberLink,
    path_length: f64,
    wavelength: f64,
) -> Vec<f64> {
    let coefficient = dispersion_phase_coefficient(link.dispersion_si(), wavelength, path_length);
    if coefficient == 0.0 {
        return intensity.to_vec();
    }
    let mut field: Vec<Complex64> = intensity
        .iter()
        .map(|&i| Complex64::new(i.max(0.0).sqrt(), 0.0))
        .collect();
    disperse_field(&mut field, sample_rate, coefficient);
    field.iter().map(|v| v.norm_sqr()).collect()
}
