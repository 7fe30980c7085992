//! Transmit packets: an on-off keyed chip burst followed by zeros.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::golay::SequenceId;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    /// Chips per second.
    pub bit_rate: f64,
    /// Samples per second of the simulated waveform.
    pub sample_rate: f64,
    /// Packet length in seconds; must cover the link round trip.
    pub packet_duration: f64,
    /// Optical carrier wavelength in meters.
    pub optical_wavelength: f64,
    /// Intensity of a `+1` chip, in (0, 1].
    pub modulation_depth: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            bit_rate: 2e9,
            sample_rate: 10e9,
            packet_duration: 1e-3,
            optical_wavelength: 1550e-9,
            modulation_depth: 1.0,
        }
    }
}

impl ProbeConfig {
    /// Integer oversampling factor `sample_rate / bit_rate`.
    pub fn samples_per_chip(&self) -> Result<usize> {
        if !(self.bit_rate > 0.0 && self.sample_rate > 0.0) {
            return Err(Error::config("bit_rate and sample_rate must be positive"));
        }
        let ratio = self.sample_rate / self.bit_rate;
        let spc = ratio.round();
        if spc < 1.0 || (ratio - spc).abs() > 1e-9 * ratio {
            return Err(Error::config(format!(
                "sample_rate/bit_rate = {ratio} is not a positive integer"
            )));
        }
        Ok(spc as usize)
    }

    /// Number of samples in one packet, `round(packet_duration * sample_rate)`.
    pub fn packet_len(&self) -> usize {
        (self.packet_duration * self.sample_rate).round().max(0.0) as usize
    }

    pub fn validate(&self, seq_len: usize) -> Result<()> {
        let spc = self.samples_per_chip()?;
        if !(self.modulation_depth > 0.0 && self.modulation_depth <= 1.0) {
            return Err(Error::config(format!(
                "modulation_depth {} outside (0, 1]",
                self.modulation_depth
            )));
        }
        if !(self.optical_wavelength > 0.0) {
            return Err(Error::config("optical_wavelength must be positive"));
        }
        if seq_len * spc > self.packet_len() {
            return Err(Error::config(format!(
                "a {seq_len}-chip burst ({} samples) does not fit in a {}-sample packet",
                seq_len * spc,
                self.packet_len()
            )));
        }
        Ok(())
    }
}

/// One sampled transmit packet (intensity envelope in [0, 1]).
#[derive(Debug, Clone, PartialEq)]
pub struct ProbePacket {
    samples: Vec<f64>,
    sample_rate: f64,
    wavelength: f64,
    sequence: SequenceId,
    burst: Range<usize>,
}

impl ProbePacket {
    /// Wraps raw samples; the burst extent is the span of nonzero samples.
    pub fn from_samples(
        samples: Vec<f64>,
        sample_rate: f64,
        wavelength: f64,
        sequence: SequenceId,
    ) -> Self {
        let first = samples.iter().position(|&x| x != 0.0);
        let burst = match first {
            Some(s) => {
                let e = samples.iter().rposition(|&x| x != 0.0).unwrap_or(s);
                s..e + 1
            }
            None => 0..0,
        };
        ProbePacket {
            samples,
            sample_rate,
            wavelength,
            sequence,
            burst,
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn sequence(&self) -> SequenceId {
        self.sequence
    }

    /// Sample range holding every nonzero sample.
    pub fn burst(&self) -> Range<usize> {
        self.burst.clone()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|x| x * x).sum()
    }
}

/// NRZ on-off keying: `+1` chips map to `modulation_depth`, `-1` chips to
/// zero, each held for `samples_per_chip` samples; the rest of the packet is
/// zero.
pub fn build_packet(seq: &[i8], sequence: SequenceId, cfg: &ProbeConfig) -> Result<ProbePacket> {
    cfg.validate(seq.len())?;
    let spc = cfg.samples_per_chip()?;
    let mut samples = vec![0.0; cfg.packet_len()];
    for (chip, out) in seq.iter().zip(samples.chunks_exact_mut(spc)) {
        if *chip > 0 {
            out.fill(cfg.modulation_depth);
        }
    }
    Ok(ProbePacket {
        samples,
        sample_rate: cfg.sample_rate,
        wavelength: cfg.optical_wavelength,
        sequence,
        burst: 0..seq.len() * spc,
    })
}

/// Duration of a `seq_len`-chip burst.
pub fn burst_duration(seq_len: usize, cfg: &ProbeConfig) -> f64 {
    seq_len as f64 / cfg.bit_rate
}

/// Whether a packet of this configuration can hold the echo returning after
/// `round_trip` seconds. Logs a warning when it cannot.
pub fn covers_round_trip(cfg: &ProbeConfig, seq_len: usize, round_trip: f64) -> bool {
    let needed = round_trip + burst_duration(seq_len, cfg);
    let ok = cfg.packet_duration > needed;
    if !ok {
        log::warn!(
            "packet duration {:.3e} s does not cover round trip plus burst ({:.3e} s)",
            cfg.packet_duration,
            needed
        );
    }
    ok
}
