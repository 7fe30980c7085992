//! Pair correlation of averaged traces and coarse peak search.
//!
//! Each trace is mean-subtracted and cross-correlated with the bipolar
//! sample-hold reference of its own sequence; the two correlograms are
//! summed so the complementary sidelobes cancel. Correlation uses "same"
//! alignment: value `i` is the correlation at lag `i`, so a peak at index
//! `i` reads directly as an arrival at trace time `t0 + i / fs`.
//!
//! Large traces are processed with overlap-save FFT blocks, which are
//! independent and run under the configured [`Execution`] policy.

use std::ops::Range;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::channel::Trace;
use crate::golay::{GolayPair, SequenceId};
use crate::spectral::to_complex;
use crate::waveform::ProbeConfig;
use crate::{Error, Execution, Result};

/// Points on each side of the maximum handed to the peak fit.
pub const PEAK_HALF_WINDOW: usize = 3;
/// Total points in a peak window.
pub const PEAK_WINDOW_LEN: usize = 2 * PEAK_HALF_WINDOW + 1;

const MIN_BLOCK: usize = 1 << 14;

#[derive(Debug, Clone, PartialEq)]
pub struct Correlogram {
    pub values: Vec<f64>,
    pub sample_rate: f64,
    /// Arrival time represented by `values[0]`.
    pub t0: f64,
}

impl Correlogram {
    pub fn time(&self, index: usize) -> f64 {
        self.t0 + index as f64 / self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Closed time interval in seconds on the trace axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub start: f64,
    pub end: f64,
}

impl TimeWindow {
    pub fn new(start: f64, end: f64) -> Self {
        TimeWindow { start, end }
    }

    pub fn around(center: f64, half_width: f64) -> Self {
        TimeWindow::new(center - half_width, center + half_width)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeakLocation {
    /// Index into the correlogram values.
    pub index: usize,
    pub coarse_time: f64,
    pub amplitude: f64,
    /// `(time, value)` of the maximum and its three neighbours on each side.
    pub window: [(f64, f64); PEAK_WINDOW_LEN],
}

/// Bipolar `±1` chips held for `samples_per_chip` samples.
pub fn reference_waveform(seq: &[i8], samples_per_chip: usize) -> Vec<f64> {
    seq.iter()
        .flat_map(|&c| std::iter::repeat_n(f64::from(c), samples_per_chip))
        .collect()
}

/// Overlap-save cross-correlator against one fixed reference.
pub struct Correlator {
    reference_len: usize,
    block_len: usize,
    reference_spectrum: Vec<Complex64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Correlator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Correlator")
            .field("reference_len", &self.reference_len)
            .field("block_len", &self.block_len)
            .finish()
    }
}

impl Correlator {
    pub fn new(reference: &[f64]) -> Self {
        let m = reference.len().max(1);
        let block_len = (4 * m).next_power_of_two().max(MIN_BLOCK);
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(block_len);
        let inverse = planner.plan_fft_inverse(block_len);
        let mut spec = to_complex(reference);
        spec.resize(block_len, Complex64::new(0.0, 0.0));
        forward.process(&mut spec);
        let scale = 1.0 / block_len as f64;
        let reference_spectrum = spec.iter().map(|v| v.conj() * scale).collect();
        Correlator {
            reference_len: reference.len(),
            block_len,
            reference_spectrum,
            forward,
            inverse,
        }
    }

    /// Outputs produced per FFT block.
    fn block_outputs(&self) -> usize {
        self.block_len + 1 - self.reference_len.max(1)
    }

    /// `c[i] = sum_j (x[i + j] - offset) * r[j]` for `i` in `lags`; samples
    /// past the end of `x` count as zero after the offset is removed.
    pub fn correlate(&self, x: &[f64], offset: f64, lags: Range<usize>, exec: Execution) -> Vec<f64> {
        if lags.is_empty() {
            return Vec::new();
        }
        let step = self.block_outputs();
        let n_blocks = lags.len().div_ceil(step);
        let blocks = exec.map(n_blocks, |b| {
            let i0 = lags.start + b * step;
            let count = step.min(lags.end - i0);
            let mut buf: Vec<Complex64> = (0..self.block_len)
                .map(|k| {
                    let v = x.get(i0 + k).map_or(0.0, |&s| s - offset);
                    Complex64::new(v, 0.0)
                })
                .collect();
            self.forward.process(&mut buf);
            buf.iter_mut()
                .zip(&self.reference_spectrum)
                .for_each(|(v, r)| *v *= r);
            self.inverse.process(&mut buf);
            buf[..count].iter().map(|v| v.re).collect::<Vec<f64>>()
        });
        blocks.concat()
    }
}

fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        0.0
    } else {
        x.iter().sum::<f64>() / x.len() as f64
    }
}

/// Correlates A and B traces against their references and sums the result.
#[derive(Debug)]
pub struct PairCorrelator {
    a: Correlator,
    b: Correlator,
    sample_rate: f64,
}

impl PairCorrelator {
    pub fn new(pair: &GolayPair, cfg: &ProbeConfig) -> Result<Self> {
        let spc = cfg.samples_per_chip()?;
        Ok(PairCorrelator {
            a: Correlator::new(&reference_waveform(pair.a(), spc)),
            b: Correlator::new(&reference_waveform(pair.b(), spc)),
            sample_rate: cfg.sample_rate,
        })
    }

    fn check(&self, trace_a: &Trace, trace_b: &Trace) -> Result<()> {
        for (name, t) in [("A", trace_a), ("B", trace_b)] {
            if ((t.sample_rate - self.sample_rate) / self.sample_rate).abs() > 1e-12 {
                return Err(Error::shape(format!(
                    "trace {name} sampled at {} Hz, reference at {} Hz",
                    t.sample_rate, self.sample_rate
                )));
            }
        }
        if trace_a.len() != trace_b.len() || trace_a.t0 != trace_b.t0 {
            return Err(Error::shape("A and B traces must share length and start time"));
        }
        Ok(())
    }

    /// Summed correlogram over the whole trace.
    pub fn correlate(&self, trace_a: &Trace, trace_b: &Trace, exec: Execution) -> Result<Correlogram> {
        self.correlate_lags(trace_a, trace_b, 0..trace_a.len(), exec)
    }

    /// Summed correlogram restricted to lags whose arrival time falls in `span`.
    pub fn correlate_span(
        &self,
        trace_a: &Trace,
        trace_b: &Trace,
        span: TimeWindow,
        exec: Execution,
    ) -> Result<Correlogram> {
        let lo = trace_a.index_at(span.start);
        let hi = (trace_a.index_at(span.end) + 1).min(trace_a.len());
        self.correlate_lags(trace_a, trace_b, lo..hi.max(lo), exec)
    }

    fn correlate_lags(
        &self,
        trace_a: &Trace,
        trace_b: &Trace,
        lags: Range<usize>,
        exec: Execution,
    ) -> Result<Correlogram> {
        self.check(trace_a, trace_b)?;
        let start = lags.start;
        let ca = self.a.correlate(&trace_a.samples, mean(&trace_a.samples), lags.clone(), exec);
        let cb = self.b.correlate(&trace_b.samples, mean(&trace_b.samples), lags, exec);
        let values = ca.iter().zip(&cb).map(|(x, y)| x + y).collect();
        Ok(Correlogram {
            values,
            sample_rate: trace_a.sample_rate,
            t0: trace_a.time(start),
        })
    }
}

/// `xcorr(trace_a, ref_a) + xcorr(trace_b, ref_b)` over the full trace.
pub fn correlate_pair(
    trace_a: &Trace,
    trace_b: &Trace,
    pair: &GolayPair,
    cfg: &ProbeConfig,
) -> Result<Correlogram> {
    PairCorrelator::new(pair, cfg)?.correlate(trace_a, trace_b, Execution::default())
}

/// Correlation of one trace with one sequence of the pair.
pub fn correlate_sequence(
    trace: &Trace,
    pair: &GolayPair,
    id: SequenceId,
    cfg: &ProbeConfig,
) -> Result<Correlogram> {
    let spc = cfg.samples_per_chip()?;
    if ((trace.sample_rate - cfg.sample_rate) / cfg.sample_rate).abs() > 1e-12 {
        return Err(Error::shape("trace and probe sample rates differ"));
    }
    let c = Correlator::new(&reference_waveform(pair.sequence(id), spc));
    let values = c.correlate(&trace.samples, mean(&trace.samples), 0..trace.len(), Execution::default());
    Ok(Correlogram {
        values,
        sample_rate: trace.sample_rate,
        t0: trace.t0,
    })
}

/// Global maximum of `corr` inside `window` with its 7-point neighbourhood.
///
/// Ties resolve to the earliest index. The maximum must lie at least three
/// samples inside the window.
pub fn find_peak(corr: &Correlogram, window: TimeWindow) -> Result<PeakLocation> {
    if corr.is_empty() {
        return Err(Error::shape("empty correlogram"));
    }
    let fs = corr.sample_rate;
    let lo = ((window.start - corr.t0) * fs - 1e-9).ceil().max(0.0);
    let hi = ((window.end - corr.t0) * fs + 1e-9)
        .floor()
        .min(corr.len() as f64 - 1.0);
    if hi < lo || (hi - lo + 1.0) < PEAK_WINDOW_LEN as f64 {
        return Err(Error::shape(format!(
            "search window [{:.6e}, {:.6e}] s covers fewer than {PEAK_WINDOW_LEN} samples",
            window.start, window.end
        )));
    }
    let (lo, hi) = (lo as usize, hi as usize);
    let mut index = lo;
    for i in lo + 1..=hi {
        if corr.values[i] > corr.values[index] {
            index = i;
        }
    }
    if index - lo < PEAK_HALF_WINDOW || hi - index < PEAK_HALF_WINDOW {
        return Err(Error::PeakAtEdge {
            index,
            margin: PEAK_HALF_WINDOW,
        });
    }
    let mut points = [(0.0, 0.0); PEAK_WINDOW_LEN];
    for (k, p) in points.iter_mut().enumerate() {
        let i = index + k - PEAK_HALF_WINDOW;
        *p = (corr.time(i), corr.values[i]);
    }
    Ok(PeakLocation {
        index,
        coarse_time: corr.time(index),
        amplitude: corr.values[index],
        window: points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corr_from(values: Vec<f64>) -> Correlogram {
        Correlogram {
            values,
            sample_rate: 1.0,
            t0: 0.0,
        }
    }

    #[test]
    fn single_maximum() {
        let mut v = vec![0.0; 100];
        v[42] = 5.0;
        v[41] = 1.0;
        let p = find_peak(&corr_from(v), TimeWindow::new(0.0, 99.0)).unwrap();
        assert_eq!(p.index, 42);
        assert_eq!(p.window[0].0, 39.0);
        assert_eq!(p.window[6].0, 45.0);
        assert_eq!(p.window[3].1, 5.0);
    }

    #[test]
    fn ties_go_to_the_earlier_index() {
        let mut v = vec![0.0; 100];
        v[50] = 2.0;
        v[51] = 2.0;
        let p = find_peak(&corr_from(v), TimeWindow::new(0.0, 99.0)).unwrap();
        assert_eq!(p.index, 50);
    }

    #[test]
    fn window_too_small_or_peak_at_edge() {
        let v: Vec<f64> = (0..100).map(f64::from).collect();
        let c = corr_from(v);
        assert!(matches!(
            find_peak(&c, TimeWindow::new(10.0, 14.0)),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            find_peak(&c, TimeWindow::new(10.0, 40.0)),
            Err(Error::PeakAtEdge { index: 40, .. })
        ));
    }

    #[test]
    fn reference_is_sample_hold() {
        assert_eq!(
            reference_waveform(&[1, -1], 3),
            vec![1.0, 1.0, 1.0, -1.0, -1.0, -1.0]
        );
    }

    #[test]
    fn block_boundaries_are_seamless() {
        let r: Vec<f64> = (0..700u64).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
        let x: Vec<f64> = (0..40_000u64).map(|i| ((i * 104_729) % 101) as f64 * 0.01).collect();
        let c = Correlator::new(&r);
        let full = c.correlate(&x, 0.3, 0..x.len(), Execution::Sequential);
        for i in [0usize, 1, 15_000, 15_685, 15_686, 31_371, 39_999] {
            let direct: f64 = r
                .iter()
                .enumerate()
                .map(|(j, rv)| x.get(i + j).map_or(0.0, |v| v - 0.3) * rv)
                .sum();
            assert!((full[i] - direct).abs() < 1e-9 * direct.abs().max(1.0), "i={i}");
        }
        let part = c.correlate(&x, 0.3, 15_000..16_000, Execution::Parallel);
        for (k, v) in part.iter().enumerate() {
            assert!((v - full[15_000 + k]).abs() < 1e-9);
        }
    }
}
