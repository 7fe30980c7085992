//! Fiber link, discrete reflectors and the received-signal simulator.
//!
//! The channel is a sum of echo paths. Each path delays the transmit
//! packet, scales it, disperses it and passes it through the receiver
//! low-pass. Paths are rendered in a local FFT window around the burst and
//! added into the receiver record at their integer sample offset; the
//! sub-sample remainder is applied as a linear phase ramp.

mod dispersion;
mod receiver;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::spectral::{bin_frequency, fast_len, to_complex};
use crate::waveform::ProbePacket;
use crate::{Error, Execution, Result, SPEED_OF_LIGHT};

pub use dispersion::{apply_dispersion, dispersion_phase_coefficient, dispersion_spread};
pub use receiver::{
    acquire, add_gaussian_noise, average_traces, bessel4_magnitude, quantize, shot_seed,
    AveragingMode, ReceiverConfig, Trace, BESSEL4_3DB,
};

/// Group index that puts the 100 km round trip at 990.537 us.
pub const DEFAULT_GROUP_INDEX: f64 = 990.537e-6 * SPEED_OF_LIGHT / 2.0e5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FiberLink {
    /// Meters.
    pub length: f64,
    pub group_index: f64,
    /// dB/km.
    pub attenuation_db_per_km: f64,
    /// ps/(nm km).
    pub dispersion_ps_per_nm_km: f64,
    /// Temperature delay coefficient, 1/K.
    pub tdc: f64,
    /// Kelvin; temperature offsets are relative to this.
    pub reference_temperature: f64,
}

impl Default for FiberLink {
    fn default() -> Self {
        FiberLink {
            length: 100e3,
            group_index: DEFAULT_GROUP_INDEX,
            attenuation_db_per_km: 0.2,
            dispersion_ps_per_nm_km: 17.0,
            tdc: 7e-6,
            reference_temperature: 293.15,
        }
    }
}

impl FiberLink {
    pub fn validate(&self) -> Result<()> {
        if !(self.length >= 0.0 && self.length.is_finite()) {
            return Err(Error::config("link length must be finite and >= 0"));
        }
        if !(1.0..=2.0).contains(&self.group_index) {
            return Err(Error::config(format!(
                "group_index {} outside [1, 2]",
                self.group_index
            )));
        }
        if !(self.attenuation_db_per_km >= 0.0) || !(self.tdc >= 0.0) {
            return Err(Error::config("attenuation and tdc must be >= 0"));
        }
        if !(self.dispersion_ps_per_nm_km >= 0.0 && self.dispersion_ps_per_nm_km.is_finite()) {
            return Err(Error::config("dispersion must be finite and >= 0"));
        }
        Ok(())
    }

    /// Dispersion parameter in s/m^2.
    pub fn dispersion_si(&self) -> f64 {
        self.dispersion_ps_per_nm_km * 1e-6
    }

    /// Delay scale factor `1 + tdc * dT`.
    pub fn thermal_factor(&self, temperature_offset: f64) -> f64 {
        1.0 + self.tdc * temperature_offset
    }

    /// Linear power transmission over `distance` meters.
    pub fn transmission(&self, distance: f64) -> f64 {
        10f64.powf(-self.attenuation_db_per_km * distance * 1e-3 / 10.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reflector {
    /// Meters from the launch connector.
    pub position: f64,
    pub reflectance: f64,
    #[serde(default)]
    pub label: String,
}

impl Reflector {
    pub fn new(position: f64, reflectance: f64, label: impl Into<String>) -> Self {
        Reflector {
            position,
            reflectance,
            label: label.into(),
        }
    }
}

/// Air-gap reference connector reflectance (about -15 dB).
pub const REFERENCE_REFLECTANCE: f64 = 0.03;
/// Fiber-end reflector.
pub const END_REFLECTANCE: f64 = 0.95;

/// The reference connector at the launch point and the end reflector.
pub fn default_reflectors(link: &FiberLink) -> Vec<Reflector> {
    vec![
        Reflector::new(0.0, REFERENCE_REFLECTANCE, "reference"),
        Reflector::new(link.length, END_REFLECTANCE, "end"),
    ]
}

pub fn validate_reflectors(link: &FiberLink, reflectors: &[Reflector]) -> Result<()> {
    for r in reflectors {
        if !(0.0..=1.0).contains(&r.reflectance) {
            return Err(Error::config(format!(
                "reflector {:?}: reflectance {} outside [0, 1]",
                r.label, r.reflectance
            )));
        }
        if !(r.position >= 0.0 && r.position <= link.length) {
            return Err(Error::Range(format!(
                "reflector {:?} at {} m lies outside the {} m link",
                r.label, r.position, link.length
            )));
        }
    }
    if reflectors.windows(2).any(|w| w[1].position <= w[0].position) {
        return Err(Error::config("reflector positions must be strictly increasing"));
    }
    Ok(())
}

/// `2 n_g z / c`, stretched by the thermal factor.
pub fn round_trip_delay(link: &FiberLink, position: f64, temperature_offset: f64) -> Result<f64> {
    if !(position >= 0.0 && position <= link.length) {
        return Err(Error::Range(format!(
            "position {position} m outside the {} m link",
            link.length
        )));
    }
    Ok(2.0 * link.group_index * position / SPEED_OF_LIGHT * link.thermal_factor(temperature_offset))
}

/// Single-pass delay over the full link.
pub fn one_way_delay(link: &FiberLink, temperature_offset: f64) -> f64 {
    link.group_index * link.length / SPEED_OF_LIGHT * link.thermal_factor(temperature_offset)
}

/// One propagation path from transmitter to receiver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EchoPath {
    /// Seconds.
    pub delay: f64,
    /// Linear intensity scale.
    pub gain: f64,
    /// Fiber length traversed, for dispersion.
    pub dispersion_length: f64,
}

/// Single-bounce echoes from each reflector.
pub fn reflection_paths(
    link: &FiberLink,
    reflectors: &[Reflector],
    temperature_offset: f64,
) -> Result<Vec<EchoPath>> {
    validate_reflectors(link, reflectors)?;
    reflectors
        .iter()
        .map(|r| {
            Ok(EchoPath {
                delay: round_trip_delay(link, r.position, temperature_offset)?,
                gain: r.reflectance * link.transmission(2.0 * r.position),
                dispersion_length: 2.0 * r.position,
            })
        })
        .collect()
}

/// Through-transmission over the whole link.
pub fn transmission_path(link: &FiberLink, temperature_offset: f64) -> EchoPath {
    EchoPath {
        delay: one_way_delay(link, temperature_offset),
        gain: link.transmission(link.length),
        dispersion_length: link.length,
    }
}

/// Everything the renderer needs besides the packet.
#[derive(Debug, Clone, Copy)]
pub struct RenderSettings<'a> {
    pub link: &'a FiberLink,
    pub rx: &'a ReceiverConfig,
}

/// Noiseless receiver record for a set of echo paths.
///
/// The record has the packet length and starts `rx.pretrigger` before the
/// launch trigger. A clock error of `eps` scales every path delay by
/// `1 + eps` as seen on the receiver time axis.
pub fn render(packet: &ProbePacket, paths: &[EchoPath], settings: RenderSettings<'_>) -> Result<Vec<f64>> {
    let RenderSettings { link, rx } = settings;
    rx.validate()?;
    let fs = rx.sample_rate;
    if ((packet.sample_rate() - fs) / fs).abs() > 1e-12 {
        return Err(Error::config(format!(
            "packet rate {} Hz differs from receiver rate {} Hz",
            packet.sample_rate(),
            fs
        )));
    }
    let mut out = vec![0.0; packet.len()];
    let burst = packet.burst();
    if burst.is_empty() {
        return Ok(out);
    }
    let stretch = 1.0 + rx.clock_error();
    let mut planner = FftPlanner::new();
    for path in paths {
        if path.gain == 0.0 {
            continue;
        }
        let d = (path.delay * stretch + rx.pretrigger) * fs;
        let shift = d.round();
        let frac = d - shift;
        let coefficient = dispersion_phase_coefficient(
            link.dispersion_si(),
            packet.wavelength(),
            path.dispersion_length,
        );
        let spectral = frac != 0.0 || !rx.filter_bypassed();

        let window = if spectral || coefficient != 0.0 {
            window_padding(fs, rx, coefficient)
        } else {
            0
        };
        let start = burst.start as isize - window as isize;
        let len = if spectral || coefficient != 0.0 {
            fast_len(burst.len() + 2 * window)
        } else {
            burst.len()
        };
        let mut local: Vec<f64> = (0..len as isize)
            .map(|k| {
                let j = start + k;
                if j >= 0 && (j as usize) < packet.len() {
                    packet.samples()[j as usize]
                } else {
                    0.0
                }
            })
            .collect();

        if coefficient != 0.0 {
            let mut field: Vec<Complex64> = local
                .iter()
                .map(|&i| Complex64::new(i.max(0.0).sqrt(), 0.0))
                .collect();
            dispersion::disperse_field(&mut field, fs, coefficient);
            local = field.iter().map(|v| v.norm_sqr()).collect();
        }
        if spectral {
            let mut spec = to_complex(&local);
            planner.plan_fft_forward(len).process(&mut spec);
            for (k, v) in spec.iter_mut().enumerate() {
                let f = bin_frequency(k, len);
                let h = rx.filter_gain(f * fs);
                if 2 * k == len {
                    // Nyquist bin: keep the response real.
                    *v *= h * (std::f64::consts::PI * frac).cos();
                } else {
                    *v *= Complex64::from_polar(h, -2.0 * std::f64::consts::PI * f * frac);
                }
            }
            planner.plan_fft_inverse(len).process(&mut spec);
            let scale = 1.0 / len as f64;
            for (l, v) in local.iter_mut().zip(&spec) {
                *l = v.re * scale;
            }
        }

        let offset = start + shift as isize;
        for (k, v) in local.iter().enumerate() {
            let i = offset + k as isize;
            if i >= 0 && (i as usize) < out.len() {
                out[i as usize] += path.gain * v;
            }
        }
    }
    Ok(out)
}

/// Local-window padding in samples: filter ringing, interpolation tails and
/// dispersive spread.
fn window_padding(fs: f64, rx: &ReceiverConfig, coefficient: f64) -> usize {
    let filter = if rx.filter_bypassed() {
        0.0
    } else {
        16.0 * fs / rx.bandwidth
    };
    let spread = coefficient * fs / std::f64::consts::PI * fs;
    256 + filter.ceil() as usize + 4 * spread.ceil() as usize
}

/// One noisy acquisition of the reflector echoes at the nominal temperature.
pub fn simulate_shot(
    packet: &ProbePacket,
    link: &FiberLink,
    reflectors: &[Reflector],
    rx: &ReceiverConfig,
    seed: u64,
) -> Result<Trace> {
    let paths = reflection_paths(link, reflectors, 0.0)?;
    let clean = render(packet, &paths, RenderSettings { link, rx })?;
    acquire(clean, rx, 1, AveragingMode::Fast, seed, Execution::default())
}
