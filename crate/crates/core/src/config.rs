//! JSON experiment configuration.
//!
//! Every field has a default, so `{}` describes the full-scale 100 km
//! measurement: 2 Gbit/s, 2048-chip pair, 10 GS/s, 2 GHz receiver, 4000
//! averages, 49 runs over three hours under a 0.16 K warm-up.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::{
    default_reflectors, round_trip_delay, validate_reflectors, AveragingMode, FiberLink,
    ReceiverConfig, Reflector,
};
use crate::correlate::TimeWindow;
use crate::experiment::{DriftModel, CALIBRATED_NOISE_RMS_SCALED};
use crate::waveform::{covers_round_trip, ProbeConfig};
use crate::{channel, Error, Result};

/// Where the two correlation peaks are searched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    /// Absolute window for the reference (first) reflector.
    pub reference_window: TimeWindow,
    /// Half width of the window centred on the expected far-end arrival.
    pub end_half_width: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            reference_window: TimeWindow::new(-0.5e-6, 5e-6),
            end_half_width: 1e-6,
        }
    }
}

/// Run seeds: either a base seed expanded per run, or an explicit list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Seeds {
    Base(u64),
    List(Vec<u64>),
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds::Base(1)
    }
}

impl Seeds {
    pub fn seed(&self, run: usize) -> Result<u64> {
        match self {
            Seeds::Base(b) => Ok(channel::shot_seed(*b, run as u64)),
            Seeds::List(l) => l.get(run).copied().ok_or_else(|| {
                Error::Config(format!("seed list has {} entries, run {run} needs one", l.len()))
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub probe: ProbeConfig,
    pub link: FiberLink,
    /// Defaults to a reference connector at 0 m and the end reflector at
    /// the link length.
    pub reflectors: Option<Vec<Reflector>>,
    pub receiver: ReceiverConfig,
    /// Shots averaged per trace.
    pub averaging: u32,
    pub averaging_mode: AveragingMode,
    pub drift: DriftModel,
    /// Golay order; 11 gives 2048 chips.
    pub sequence_order: u32,
    pub runs: usize,
    /// Seconds between repeatability runs.
    pub interval: f64,
    pub poly_degree: usize,
    pub seeds: Seeds,
    pub search: SearchConfig,
    /// Round-trip / single-pass measurement pairs in the verification study.
    pub single_pass_pairs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            probe: ProbeConfig::default(),
            link: FiberLink::default(),
            reflectors: None,
            receiver: ReceiverConfig::default(),
            averaging: 4000,
            averaging_mode: AveragingMode::Fast,
            drift: DriftModel::default(),
            sequence_order: 11,
            runs: 49,
            interval: 3.0 * 3600.0 / 48.0,
            poly_degree: 4,
            seeds: Seeds::default(),
            search: SearchConfig::default(),
            single_pass_pairs: 2,
        }
    }
}

impl ExperimentConfig {
    /// A reduced 10 km configuration at 1 GS/s for quick runs. Rates,
    /// bandwidth, packet and windows are scaled down by ten so every
    /// waveform keeps its shape in samples.
    pub fn scaled() -> Self {
        ExperimentConfig {
            probe: ProbeConfig {
                bit_rate: 0.2e9,
                sample_rate: 1e9,
                packet_duration: 0.2e-3,
                ..Default::default()
            },
            link: FiberLink {
                length: 10e3,
                ..Default::default()
            },
            receiver: ReceiverConfig {
                bandwidth: 0.2e9,
                sample_rate: 1e9,
                noise_rms: CALIBRATED_NOISE_RMS_SCALED,
                pretrigger: 5e-6,
                ..Default::default()
            },
            search: SearchConfig {
                reference_window: TimeWindow::new(-5e-6, 50e-6),
                end_half_width: 10e-6,
            },
            ..Default::default()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn reflectors(&self) -> Vec<Reflector> {
        self.reflectors
            .clone()
            .unwrap_or_else(|| default_reflectors(&self.link))
    }

    /// Expected arrival of the last reflector at the reference temperature.
    pub fn expected_end_arrival(&self) -> Result<f64> {
        let last = self
            .reflectors()
            .last()
            .map(|r| r.position)
            .ok_or_else(|| Error::Config("no reflectors configured".into()))?;
        round_trip_delay(&self.link, last, 0.0)
    }

    pub fn end_window(&self) -> Result<TimeWindow> {
        Ok(TimeWindow::around(
            self.expected_end_arrival()?,
            self.search.end_half_width,
        ))
    }

    pub fn validate(&self) -> Result<()> {
        self.link.validate()?;
        self.receiver.validate()?;
        self.drift.validate()?;
        let reflectors = self.reflectors();
        if reflectors.len() < 2 {
            return Err(Error::Config(
                "need a reference and an end reflector".into(),
            ));
        }
        validate_reflectors(&self.link, &reflectors)?;
        if self.sequence_order > crate::golay::MAX_ORDER {
            return Err(Error::SizeLimit(format!(
                "sequence_order {} exceeds {}",
                self.sequence_order,
                crate::golay::MAX_ORDER
            )));
        }
        self.probe.validate(1usize << self.sequence_order)?;
        if ((self.probe.sample_rate - self.receiver.sample_rate) / self.receiver.sample_rate).abs()
            > 1e-12
        {
            return Err(Error::Config(
                "probe and receiver sample rates must match".into(),
            ));
        }
        if self.averaging == 0 {
            return Err(Error::Config("averaging must be >= 1".into()));
        }
        if !(self.interval >= 0.0) || !(self.search.end_half_width > 0.0) {
            return Err(Error::Config(
                "interval must be >= 0 and end_half_width > 0".into(),
            ));
        }
        let w = self.search.reference_window;
        if !(w.end > w.start) {
            return Err(Error::Config("reference window must have end > start".into()));
        }
        covers_round_trip(
            &self.probe,
            1usize << self.sequence_order,
            self.expected_end_arrival()? + self.receiver.pretrigger,
        );
        Ok(())
    }
}
