//! JSON reports and their CSV time series.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::experiment::{
    clock_error_bound, AnalysisSettings, MeasurementResult, RepeatabilityReport,
    SinglePassComparison,
};
use crate::Result;

/// Result of analysing stored traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementReport {
    pub results: Vec<MeasurementResult>,
    pub failures: Vec<crate::experiment::FailedRun>,
    pub settings: AnalysisSettings,
}

/// Round-trip versus single-pass comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub comparisons: Vec<SinglePassComparison>,
    pub max_abs_difference: f64,
    /// Latency error from a 0.5 ppm sampling clock on the measured one-way latency.
    pub clock_error_bound: f64,
    pub settings: AnalysisSettings,
}

impl VerificationReport {
    pub fn new(comparisons: Vec<SinglePassComparison>, settings: AnalysisSettings) -> Self {
        let max_abs_difference = comparisons
            .iter()
            .map(|c| c.difference.abs())
            .fold(0.0, f64::max);
        let latency = comparisons
            .first()
            .map_or(0.0, |c| c.single_pass.one_way);
        VerificationReport {
            comparisons,
            max_abs_difference,
            clock_error_bound: clock_error_bound(0.5, latency),
            settings,
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// `report.json` -> `report.csv`.
pub fn companion_csv(path: &Path) -> PathBuf {
    path.with_extension("csv")
}

pub fn write_measurements_csv<W: Write>(mut w: W, results: &[MeasurementResult]) -> Result<()> {
    writeln!(w, "timestamp_s,temperature_offset_k,ref_arrival_s,end_arrival_s,round_trip_s,one_way_s")?;
    for r in results {
        writeln!(
            w,
            "{:.3},{:.6},{:.15e},{:.15e},{:.15e},{:.15e}",
            r.timestamp, r.temperature_offset, r.ref_arrival, r.end_arrival, r.round_trip, r.one_way
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_repeatability_csv<W: Write>(mut w: W, report: &RepeatabilityReport) -> Result<()> {
    writeln!(w, "timestamp_s,temperature_offset_k,round_trip_s,trend_s,residual_s")?;
    for (r, res) in report.results.iter().zip(&report.poly.residuals) {
        writeln!(
            w,
            "{:.3},{:.6},{:.15e},{:.15e},{:.6e}",
            r.timestamp,
            r.temperature_offset,
            r.round_trip,
            report.poly.eval(r.timestamp),
            res
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_verification_csv<W: Write>(mut w: W, report: &VerificationReport) -> Result<()> {
    writeln!(w, "pair,round_trip_half_s,single_pass_s,difference_s")?;
    for (k, c) in report.comparisons.iter().enumerate() {
        writeln!(
            w,
            "{k},{:.15e},{:.15e},{:.6e}",
            c.round_trip.round_trip / 2.0,
            c.single_pass.one_way,
            c.difference
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a JSON report plus its CSV time series next to it.
pub fn save_with_csv<T, F>(path: &Path, value: &T, csv: F) -> Result<()>
where
    T: Serialize,
    F: FnOnce(&mut BufWriter<File>) -> Result<()>,
{
    write_json(path, value)?;
    let mut w = BufWriter::new(File::create(companion_csv(path))?);
    csv(&mut w)
}
