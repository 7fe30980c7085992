//! Correlation-OTDR fiber latency metrology.
//!
//! The crate simulates and analyses a coded reflectometry measurement of
//! fiber latency: a Golay complementary pair is sent as an on-off keyed
//! burst, reflected by a reference connector at the fiber start and by a
//! reflector at the fiber end, averaged at the receiver, correlated with
//! both sequences and the two correlation peaks are located to picosecond
//! precision with a raised-cosine fit. The round-trip latency is the
//! difference of the two arrival times.
//!
//! Module map:
//!
//! * [`golay`] complementary sequence pairs.
//! * [`waveform`] transmit packets.
//! * [`channel`] fiber, reflectors, receiver, noise and averaging.
//! * [`correlate`] pair correlation and coarse peak search.
//! * [`peakfit`] sub-sample raised-cosine refinement.
//! * [`experiment`] end-to-end measurements, repeatability and single-pass studies.
//! * [`config`], [`tracefile`], [`report`], [`export`] file formats.
//!
//! Heavy loops (noise synthesis, block correlation, independent runs) go
//! through [`Execution`], which is backed by rayon when the `parallel`
//! feature is enabled and runs sequentially otherwise. Both paths produce
//! bit-identical results.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod config;
pub mod correlate;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod export;
pub mod golay;
pub mod peakfit;
pub mod report;
mod spectral;
pub mod tracefile;
pub mod waveform;

pub use error::{Error, Result};
pub use exec::Execution;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
