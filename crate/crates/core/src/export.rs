//! CSV plot data: `time_s,value` rows.

use std::io::Write;

use crate::channel::Trace;
use crate::correlate::{Correlogram, TimeWindow};
use crate::Result;

fn write_rows<W: Write>(
    mut w: W,
    header: &str,
    values: &[f64],
    t0: f64,
    fs: f64,
    window: Option<TimeWindow>,
) -> Result<()> {
    writeln!(w, "{header}")?;
    for (i, v) in values.iter().enumerate() {
        let t = t0 + i as f64 / fs;
        if let Some(win) = window {
            if t < win.start || t > win.end {
                continue;
            }
        }
        writeln!(w, "{t:.15e},{v:.9e}")?;
    }
    w.flush()?;
    Ok(())
}

/// Trace samples, optionally restricted to a time window.
pub fn write_trace_csv<W: Write>(w: W, trace: &Trace, window: Option<TimeWindow>) -> Result<()> {
    write_rows(w, "time_s,value", &trace.samples, trace.t0, trace.sample_rate, window)
}

/// Correlogram values against arrival time.
pub fn write_correlogram_csv<W: Write>(w: W, corr: &Correlogram, window: Option<TimeWindow>) -> Result<()> {
    write_rows(w, "time_s,correlation", &corr.values, corr.t0, corr.sample_rate, window)
}
