use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Fiber temperature offset (kelvin, relative to the link reference
/// temperature) as a function of experiment time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriftModel {
    Constant {
        offset: f64,
    },
    /// Linear from `start` at t = 0 to `end` at t = `duration`, held after.
    LinearRamp {
        start: f64,
        end: f64,
        duration: f64,
    },
    /// Linear interpolation between breakpoints, held outside them.
    Piecewise {
        times: Vec<f64>,
        offsets: Vec<f64>,
    },
}

impl Default for DriftModel {
    /// A 0.16 K warm-up over three hours.
    fn default() -> Self {
        DriftModel::LinearRamp {
            start: 0.0,
            end: 0.16,
            duration: 3.0 * 3600.0,
        }
    }
}

impl DriftModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            DriftModel::Constant { offset } if !offset.is_finite() => {
                Err(Error::Config("drift offset must be finite".into()))
            }
            DriftModel::LinearRamp { duration, .. } if !(*duration > 0.0) => {
                Err(Error::Config("drift ramp duration must be positive".into()))
            }
            DriftModel::Piecewise { times, offsets } => {
                if times.is_empty() || times.len() != offsets.len() {
                    return Err(Error::Config(
                        "piecewise drift needs equally many (>= 1) times and offsets".into(),
                    ));
                }
                if times.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::Config(
                        "piecewise drift breakpoints must be strictly increasing".into(),
                    ));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn temperature_offset(&self, t: f64) -> f64 {
        match self {
            DriftModel::Constant { offset } => *offset,
            DriftModel::LinearRamp {
                start,
                end,
                duration,
            } => start + (end - start) * (t / duration).clamp(0.0, 1.0),
            DriftModel::Piecewise { times, offsets } => {
                let k = times.partition_point(|&x| x <= t);
                if k == 0 {
                    offsets[0]
                } else if k == times.len() {
                    offsets[k - 1]
                } else {
                    let a = (t - times[k - 1]) / (times[k] - times[k - 1]);
                    offsets[k - 1] + a * (offsets[k] - offsets[k - 1])
                }
            }
        }
    }
}
