//! Receiver front end: low-pass response, additive noise, digitization and
//! trace averaging.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::{Error, Execution, Result};

/// Normalized -3 dB radian frequency of the 4th-order Bessel prototype
/// `105 / (s^4 + 10 s^3 + 45 s^2 + 105 s + 105)`.
pub const BESSEL4_3DB: f64 = 2.113_917_674_904_216;

/// Samples per independently seeded noise block.
const NOISE_BLOCK: usize = 1 << 16;

/// Shots accumulated per work item in per-shot averaging.
const SHOT_BLOCK: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReceiverConfig {
    /// -3 dB bandwidth in Hz. At or above Nyquist the filter is bypassed.
    pub bandwidth: f64,
    /// Additive white Gaussian noise std of a single shot, in trace units.
    pub noise_rms: f64,
    /// Nominal sampling rate in Hz.
    pub sample_rate: f64,
    /// Sampling clock error in ppm; all arrival times scale by `1 + ppm * 1e-6`.
    pub clock_error_ppm: f64,
    /// ADC resolution; `None` records ideal real values.
    pub adc_bits: Option<u32>,
    /// ADC input range is `[-adc_full_scale, adc_full_scale]`.
    pub adc_full_scale: f64,
    /// Recording starts this long before the launch trigger, so the
    /// reference reflection at zero delay sits inside the trace.
    pub pretrigger: f64,
}

impl Default for ReceiverConfig {
    fn default() -> Self {
        ReceiverConfig {
            bandwidth: 2e9,
            noise_rms: crate::experiment::CALIBRATED_NOISE_RMS,
            sample_rate: 10e9,
            clock_error_ppm: 0.0,
            adc_bits: None,
            adc_full_scale: 1.0,
            pretrigger: 0.5e-6,
        }
    }
}

impl ReceiverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate > 0.0) {
            return Err(Error::config("receiver sample_rate must be positive"));
        }
        if !(self.bandwidth > 0.0 && self.bandwidth <= self.sample_rate / 2.0) {
            return Err(Error::config(format!(
                "receiver bandwidth {} must be in (0, sample_rate/2 = {}]",
                self.bandwidth,
                self.sample_rate / 2.0
            )));
        }
        if !(self.noise_rms >= 0.0 && self.noise_rms.is_finite()) {
            return Err(Error::config("noise_rms must be finite and >= 0"));
        }
        if !self.clock_error_ppm.is_finite() {
            return Err(Error::config("clock_error_ppm must be finite"));
        }
        if !(self.pretrigger >= 0.0 && self.pretrigger.is_finite()) {
            return Err(Error::config("pretrigger must be finite and >= 0"));
        }
        if let Some(bits) = self.adc_bits {
            if !(1..=32).contains(&bits) || !(self.adc_full_scale > 0.0) {
                return Err(Error::config("adc_bits must be 1..=32 with a positive full scale"));
            }
        }
        Ok(())
    }

    pub fn clock_error(&self) -> f64 {
        self.clock_error_ppm * 1e-6
    }

    pub fn filter_bypassed(&self) -> bool {
        self.bandwidth >= self.sample_rate / 2.0
    }

    /// Filter magnitude at `freq` Hz; the filter is zero-phase.
    pub fn filter_gain(&self, freq: f64) -> f64 {
        if self.filter_bypassed() {
            1.0
        } else {
            bessel4_magnitude(freq / self.bandwidth)
        }
    }
}

/// `|H(j w)|` of the 4th-order Bessel low-pass at `f / f_3dB = ratio`.
pub fn bessel4_magnitude(ratio: f64) -> f64 {
    let w = BESSEL4_3DB * ratio;
    let w2 = w * w;
    let re = w2 * w2 - 45.0 * w2 + 105.0;
    let im = -10.0 * w2 * w + 105.0 * w;
    105.0 / (re * re + im * im).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AveragingMode {
    /// One noise draw with std `noise_rms / sqrt(K)`.
    #[default]
    Fast,
    /// K independent noisy shots averaged sample by sample.
    PerShot,
}

/// A uniformly sampled receiver record.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub samples: Vec<f64>,
    pub sample_rate: f64,
    /// Time of the first sample relative to the launch trigger.
    pub t0: f64,
    pub shots_averaged: u32,
}

impl Trace {
    pub fn new(samples: Vec<f64>, sample_rate: f64, t0: f64, shots_averaged: u32) -> Result<Self> {
        if !(sample_rate > 0.0) {
            return Err(Error::config("trace sample_rate must be positive"));
        }
        if shots_averaged == 0 {
            return Err(Error::config("shots_averaged must be >= 1"));
        }
        Ok(Trace {
            samples,
            sample_rate,
            t0,
            shots_averaged,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time(&self, index: usize) -> f64 {
        self.t0 + index as f64 / self.sample_rate
    }

    /// Sample index at or after time `t`, clamped to the trace.
    pub fn index_at(&self, t: f64) -> usize {
        let x = ((t - self.t0) * self.sample_rate - 1e-9).ceil();
        x.clamp(0.0, self.len() as f64) as usize
    }
}

/// Adds white Gaussian noise. Block `k` of 65536 samples draws from its own
/// ChaCha8 stream, so the result depends only on `seed`, never on the
/// execution policy.
pub fn add_gaussian_noise(samples: &mut [f64], std: f64, seed: u64, exec: Execution) {
    if std == 0.0 {
        return;
    }
    let normal = Normal::new(0.0, std).expect("noise std must be finite");
    exec.for_each_chunk_mut(samples, NOISE_BLOCK, |block, chunk| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(block as u64);
        for x in chunk {
            *x += normal.sample(&mut rng);
        }
    });
}

/// Rounds to the nearest ADC level and clips to the input range.
pub fn quantize(samples: &mut [f64], bits: u32, full_scale: f64) {
    let step = 2.0 * full_scale / (1u64 << bits) as f64;
    for x in samples {
        *x = ((*x / step).round() * step).clamp(-full_scale, full_scale);
    }
}

/// Derives the seed of shot `k` from a run seed.
pub fn shot_seed(seed: u64, k: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ k.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Turns a noiseless received signal into an averaged record of `shots`
/// acquisitions.
pub fn acquire(
    clean: Vec<f64>,
    rx: &ReceiverConfig,
    shots: u32,
    mode: AveragingMode,
    seed: u64,
    exec: Execution,
) -> Result<Trace> {
    if shots == 0 {
        return Err(Error::config("averaging must be >= 1"));
    }
    let t0 = -rx.pretrigger;
    let samples = match mode {
        AveragingMode::Fast => {
            let mut s = clean;
            add_gaussian_noise(&mut s, rx.noise_rms / f64::from(shots).sqrt(), seed, exec);
            if let Some(bits) = rx.adc_bits {
                quantize(&mut s, bits, rx.adc_full_scale);
            }
            s
        }
        AveragingMode::PerShot => {
            let n_blocks = (shots as usize).div_ceil(SHOT_BLOCK);
            let partial = exec.map(n_blocks, |blk| {
                let mut sum = vec![0.0; clean.len()];
                let mut shot = vec![0.0; clean.len()];
                let start = blk * SHOT_BLOCK;
                let end = (start + SHOT_BLOCK).min(shots as usize);
                for k in start..end {
                    shot.copy_from_slice(&clean);
                    add_gaussian_noise(
                        &mut shot,
                        rx.noise_rms,
                        shot_seed(seed, k as u64),
                        Execution::Sequential,
                    );
                    if let Some(bits) = rx.adc_bits {
                        quantize(&mut shot, bits, rx.adc_full_scale);
                    }
                    sum.iter_mut().zip(&shot).for_each(|(s, x)| *s += x);
                }
                sum
            });
            let mut total = vec![0.0; clean.len()];
            for p in partial {
                total.iter_mut().zip(&p).for_each(|(s, x)| *s += x);
            }
            let inv = 1.0 / f64::from(shots);
            total.iter_mut().for_each(|s| *s *= inv);
            total
        }
    };
    Trace::new(samples, rx.sample_rate, t0, shots)
}

/// Shot-weighted pointwise mean; for single-shot inputs this is the plain
/// mean. All inputs must share sample rate, start time and length.
pub fn average_traces(shots: &[Trace]) -> Result<Trace> {
    let first = shots
        .first()
        .ok_or_else(|| Error::shape("cannot average an empty list of traces"))?;
    for t in &shots[1..] {
        if t.len() != first.len() || t.sample_rate != first.sample_rate || t.t0 != first.t0 {
            return Err(Error::shape(format!(
                "trace grid mismatch: ({}, {} Hz, t0 {}) vs ({}, {} Hz, t0 {})",
                first.len(),
                first.sample_rate,
                first.t0,
                t.len(),
                t.sample_rate,
                t.t0
            )));
        }
    }
    let total: u64 = shots.iter().map(|t| u64::from(t.shots_averaged)).sum();
    let total = u32::try_from(total).map_err(|_| Error::Range("too many shots".into()))?;
    let mut out = vec![0.0; first.len()];
    for t in shots {
        let w = f64::from(t.shots_averaged) / f64::from(total);
        out.iter_mut().zip(&t.samples).for_each(|(o, x)| *o += w * x);
    }
    Trace::new(out, first.sample_rate, first.t0, total)
}
