//! End-to-end measurements and the repeatability / verification studies.
//!
//! A measurement renders the A and B packets through the channel at the
//! fiber temperature of the moment, averages, correlates both traces
//! against their sequences, and fits the reference and far-end peaks. The
//! round-trip latency is the difference of the two fitted arrival times,
//! so any delay common to both echoes (receiver filter, matched-filter
//! offset, trigger latency) cancels.

mod detrend;
mod drift;

use serde::{Deserialize, Serialize};

use crate::channel::{
    self, acquire, one_way_delay, reflection_paths, render, transmission_path, EchoPath,
    RenderSettings, Trace,
};
use crate::config::ExperimentConfig;
use crate::correlate::{find_peak, PairCorrelator, TimeWindow, PEAK_WINDOW_LEN};
use crate::golay::{GolayPair, SequenceId};
use crate::peakfit::{fit_peak, RaisedCosineFit};
use crate::waveform::{build_packet, ProbePacket};
use crate::{Error, Execution, Result};

pub use detrend::{fit_polynomial, PolynomialFit};
pub use drift::DriftModel;

/// Single-shot receiver noise that gives a ~12 ps round-trip scatter on the
/// default 100 km configuration with 4000 averages.
pub const CALIBRATED_NOISE_RMS: f64 = 0.016;
/// Same calibration for [`ExperimentConfig::scaled`].
pub const CALIBRATED_NOISE_RMS_SCALED: f64 = 0.6;

/// Processing parameters that must match between measurements whose
/// arrival times are compared.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSettings {
    pub sample_rate: f64,
    pub samples_per_chip: usize,
    pub sequence_order: u32,
    pub receiver_bandwidth: f64,
    pub peak_window: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementResult {
    pub ref_arrival: f64,
    pub end_arrival: f64,
    pub round_trip: f64,
    pub one_way: f64,
    /// Simulated seconds since experiment start.
    pub timestamp: f64,
    pub temperature_offset: f64,
    pub seed: u64,
    pub reference_fit: RaisedCosineFit,
    pub end_fit: RaisedCosineFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedRun {
    pub run: usize,
    pub timestamp: f64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatabilityReport {
    pub results: Vec<MeasurementResult>,
    pub failures: Vec<FailedRun>,
    pub poly: PolynomialFit,
    /// Population std of round trip minus the polynomial trend.
    pub residual_std: f64,
    /// Trend at the last run minus trend at the first.
    pub total_drift: f64,
    pub settings: AnalysisSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinglePassResult {
    /// Arrival with the fiber under test removed.
    pub reference_arrival: f64,
    /// Arrival through the fiber.
    pub fiber_arrival: f64,
    pub one_way: f64,
    pub seed: u64,
    pub reference_fit: RaisedCosineFit,
    pub fiber_fit: RaisedCosineFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinglePassComparison {
    pub round_trip: MeasurementResult,
    pub single_pass: SinglePassResult,
    /// `round_trip / 2 - single_pass`.
    pub difference: f64,
}

/// Clock-induced latency error bound `ppm * 1e-6 * latency`.
pub fn clock_error_bound(ppm: f64, latency: f64) -> f64 {
    ppm * 1e-6 * latency
}

fn derived_seed(seed: u64, stream: u64) -> u64 {
    channel::shot_seed(seed, stream)
}

/// A configured measurement chain: packets, references and correlators are
/// built once and shared by every run.
#[derive(Debug)]
pub struct Instrument {
    config: ExperimentConfig,
    pair: GolayPair,
    packet_a: ProbePacket,
    packet_b: ProbePacket,
    correlator: PairCorrelator,
    exec: Execution,
}

impl Instrument {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let pair = GolayPair::generate(config.sequence_order)?;
        let packet_a = build_packet(pair.a(), SequenceId::A, &config.probe)?;
        let packet_b = build_packet(pair.b(), SequenceId::B, &config.probe)?;
        let correlator = PairCorrelator::new(&pair, &config.probe)?;
        Ok(Instrument {
            config,
            pair,
            packet_a,
            packet_b,
            correlator,
            exec: Execution::default(),
        })
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn pair(&self) -> &GolayPair {
        &self.pair
    }

    pub fn packet(&self, id: SequenceId) -> &ProbePacket {
        match id {
            SequenceId::A => &self.packet_a,
            SequenceId::B => &self.packet_b,
        }
    }

    pub fn correlator(&self) -> &PairCorrelator {
        &self.correlator
    }

    pub fn settings(&self) -> AnalysisSettings {
        AnalysisSettings {
            sample_rate: self.config.receiver.sample_rate,
            samples_per_chip: self.config.probe.samples_per_chip().unwrap_or(0),
            sequence_order: self.config.sequence_order,
            receiver_bandwidth: self.config.receiver.bandwidth,
            peak_window: PEAK_WINDOW_LEN,
        }
    }

    /// Averaged A and B traces for a set of echo paths.
    pub fn acquire_pair(&self, paths: &[EchoPath], seed: u64, exec: Execution) -> Result<(Trace, Trace)> {
        let settings = RenderSettings {
            link: &self.config.link,
            rx: &self.config.receiver,
        };
        let mut traces = Vec::with_capacity(2);
        for (k, packet) in [&self.packet_a, &self.packet_b].into_iter().enumerate() {
            let clean = render(packet, paths, settings)?;
            traces.push(acquire(
                clean,
                &self.config.receiver,
                self.config.averaging,
                self.config.averaging_mode,
                derived_seed(seed, k as u64),
                exec,
            )?);
        }
        let b = traces.pop().expect("two traces");
        let a = traces.pop().expect("two traces");
        Ok((a, b))
    }

    /// Correlates inside `window` and fits the strongest peak there.
    pub fn locate(&self, a: &Trace, b: &Trace, window: TimeWindow, exec: Execution) -> Result<RaisedCosineFit> {
        let corr = self.correlator.correlate_span(a, b, window, exec)?;
        let peak = find_peak(&corr, window)?;
        fit_peak(&peak.window)
    }

    /// One round-trip measurement at experiment time `t`.
    pub fn measure_once(&self, t: f64, seed: u64) -> Result<MeasurementResult> {
        self.measure_with(t, seed, self.exec)
    }

    fn measure_with(&self, t: f64, seed: u64, exec: Execution) -> Result<MeasurementResult> {
        self.measure_at(t, self.config.drift.temperature_offset(t), seed, exec)
    }

    /// Averaged A/B traces at experiment time `t`, with the fiber at the
    /// drift model's temperature. Returns the traces and that temperature.
    pub fn acquire_at(&self, t: f64, seed: u64) -> Result<(Trace, Trace, f64)> {
        let dt = self.config.drift.temperature_offset(t);
        let paths = reflection_paths(&self.config.link, &self.config.reflectors(), dt)?;
        let (a, b) = self.acquire_pair(&paths, seed, self.exec)?;
        Ok((a, b, dt))
    }

    /// One round-trip measurement at an explicit fiber temperature offset.
    pub fn measure_at(
        &self,
        t: f64,
        temperature_offset: f64,
        seed: u64,
        exec: Execution,
    ) -> Result<MeasurementResult> {
        let paths = reflection_paths(&self.config.link, &self.config.reflectors(), temperature_offset)?;
        let (a, b) = self.acquire_pair(&paths, seed, exec)?;
        self.analyze(&a, &b, t, temperature_offset, seed, exec)
    }

    /// Extracts reference and far-end arrivals from an averaged A/B trace pair.
    pub fn analyze(
        &self,
        a: &Trace,
        b: &Trace,
        timestamp: f64,
        temperature_offset: f64,
        seed: u64,
        exec: Execution,
    ) -> Result<MeasurementResult> {
        let reference_fit = self
            .locate(a, b, self.config.search.reference_window, exec)
            .map_err(|e| Error::Measurement(format!("reference peak: {e}")))?;
        let end_fit = self
            .locate(a, b, self.config.end_window()?, exec)
            .map_err(|e| Error::Measurement(format!("end peak: {e}")))?;
        let round_trip = end_fit.center - reference_fit.center;
        if !(round_trip > 0.0) {
            return Err(Error::Measurement(format!(
                "end arrival precedes reference arrival by {:.3e} s",
                -round_trip
            )));
        }
        Ok(MeasurementResult {
            ref_arrival: reference_fit.center,
            end_arrival: end_fit.center,
            round_trip,
            one_way: round_trip / 2.0,
            timestamp,
            temperature_offset,
            seed,
            reference_fit,
            end_fit,
        })
    }

    /// Independent runs at `timestamps`; outer-parallel, inner-sequential.
    pub fn measure_series(&self, timestamps: &[f64]) -> Result<Vec<Result<MeasurementResult>>> {
        let seeds = (0..timestamps.len())
            .map(|k| self.config.seeds.seed(k))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.exec.map(timestamps.len(), |k| {
            self.measure_with(timestamps[k], seeds[k], Execution::Sequential)
        }))
    }

    /// The repeatability study: `config.runs` measurements spaced by
    /// `config.interval`, detrended by a `config.poly_degree` polynomial.
    pub fn run_repeatability(&self) -> Result<RepeatabilityReport> {
        let degree = self.config.poly_degree;
        if self.config.runs < degree + 2 {
            return Err(Error::Config(format!(
                "{} runs are too few for a degree-{degree} detrend",
                self.config.runs
            )));
        }
        let timestamps: Vec<f64> = (0..self.config.runs)
            .map(|k| k as f64 * self.config.interval)
            .collect();
        let mut results = Vec::new();
        let mut failures = Vec::new();
        for (run, outcome) in self.measure_series(&timestamps)?.into_iter().enumerate() {
            match outcome {
                Ok(r) => results.push(r),
                Err(e) => {
                    log::warn!("run {run} failed: {e}");
                    failures.push(FailedRun {
                        run,
                        timestamp: timestamps[run],
                        error: e.to_string(),
                    })
                }
            }
        }
        if results.len() < degree + 2 {
            return Err(Error::Measurement(format!(
                "only {} of {} runs succeeded",
                results.len(),
                self.config.runs
            )));
        }
        let times: Vec<f64> = results.iter().map(|r| r.timestamp).collect();
        let values: Vec<f64> = results.iter().map(|r| r.round_trip).collect();
        let poly = fit_polynomial(&times, &values, degree)?;
        let residual_std = poly.residual_std();
        let total_drift = poly.eval(times[times.len() - 1]) - poly.eval(times[0]);
        Ok(RepeatabilityReport {
            results,
            failures,
            poly,
            residual_std,
            total_drift,
            settings: self.settings(),
        })
    }

    /// One-way latency through the fiber measured in transmission, minus a
    /// reference acquisition with the fiber removed.
    pub fn run_single_pass(&self, seed: u64) -> Result<SinglePassResult> {
        self.single_pass_with(seed, self.exec)
    }

    fn single_pass_with(&self, seed: u64, exec: Execution) -> Result<SinglePassResult> {
        let link = &self.config.link;
        let back_to_back = EchoPath {
            delay: 0.0,
            gain: 1.0,
            dispersion_length: 0.0,
        };
        let (ra, rb) = self.acquire_pair(&[back_to_back], derived_seed(seed, 10), exec)?;
        let reference_fit = self
            .locate(&ra, &rb, self.config.search.reference_window, exec)
            .map_err(|e| Error::Measurement(format!("back-to-back peak: {e}")))?;
        let through = transmission_path(link, 0.0);
        let (fa, fb) = self.acquire_pair(&[through], derived_seed(seed, 11), exec)?;
        let window = TimeWindow::around(one_way_delay(link, 0.0), self.config.search.end_half_width);
        let fiber_fit = self
            .locate(&fa, &fb, window, exec)
            .map_err(|e| Error::Measurement(format!("transmission peak: {e}")))?;
        Ok(SinglePassResult {
            reference_arrival: reference_fit.center,
            fiber_arrival: fiber_fit.center,
            one_way: fiber_fit.center - reference_fit.center,
            seed,
            reference_fit,
            fiber_fit,
        })
    }

    /// Paired round-trip and single-pass measurements at the reference
    /// temperature.
    pub fn compare_single_pass(&self, pairs: usize) -> Result<Vec<SinglePassComparison>> {
        let seeds = (0..pairs)
            .map(|k| self.config.seeds.seed(k))
            .collect::<Result<Vec<_>>>()?;
        let settings = self.settings();
        let outcomes = self.exec.map(pairs, |k| -> Result<SinglePassComparison> {
            let round_trip = self.measure_at(0.0, 0.0, seeds[k], Execution::Sequential)?;
            let single_pass = self.single_pass_with(derived_seed(seeds[k], 99), Execution::Sequential)?;
            // Both legs go through this instrument's correlator and fit.
            debug_assert_eq!(settings, self.settings());
            Ok(SinglePassComparison {
                difference: round_trip.round_trip / 2.0 - single_pass.one_way,
                round_trip,
                single_pass,
            })
        });
        outcomes.into_iter().collect()
    }
}

/// Noise level for a target round-trip scatter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseCalibration {
    /// Single-shot noise that was simulated.
    pub probe_noise_rms: f64,
    /// Sample std of the round trip at the probe noise.
    pub measured_std: f64,
    pub target_std: f64,
    /// `probe_noise_rms * target_std / measured_std`.
    pub noise_rms: f64,
}

/// Estimates the single-shot noise giving a round-trip standard deviation
/// of `target_std`, from `n_runs` static measurements at the configured
/// noise level. Timing jitter is proportional to noise in the high-SNR
/// regime the correlation gain produces, so one linear rescale suffices.
pub fn calibrate_noise(config: &ExperimentConfig, target_std: f64, n_runs: usize) -> Result<NoiseCalibration> {
    if n_runs < 2 {
        return Err(Error::Config("calibration needs at least two runs".into()));
    }
    let config = ExperimentConfig {
        drift: DriftModel::Constant { offset: 0.0 },
        runs: n_runs,
        ..config.clone()
    };
    let probe_noise_rms = config.receiver.noise_rms;
    if !(probe_noise_rms > 0.0) {
        return Err(Error::Config("calibration needs a nonzero probe noise".into()));
    }
    let instrument = Instrument::new(config)?;
    let times = vec![0.0; n_runs];
    let values = instrument
        .measure_series(&times)?
        .into_iter()
        .map(|r| r.map(|m| m.round_trip))
        .collect::<Result<Vec<_>>>()?;
    let mean = values.iter().sum::<f64>() / n_runs as f64;
    let measured_std =
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n_runs as f64 - 1.0)).sqrt();
    Ok(NoiseCalibration {
        probe_noise_rms,
        measured_std,
        target_std,
        noise_rms: probe_noise_rms * target_std / measured_std,
    })
}
