//! Golay complementary pairs of ±1 chips.
//!
//! A pair (a, b) is complementary when the aperiodic autocorrelations of
//! the two sequences add up to `2N` at lag zero and cancel at every other
//! lag. Correlating the two halves of a measurement against their own
//! sequence and summing therefore yields a sidelobe-free peak of twice the
//! single-sequence height.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Largest order accepted by [`GolayPair::generate`] (2^20 chips).
pub const MAX_ORDER: u32 = 20;

/// Which member of a pair a packet or trace belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SequenceId {
    A,
    B,
}

impl fmt::Display for SequenceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SequenceId::A => "A",
            SequenceId::B => "B",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GolayPair {
    a: Vec<i8>,
    b: Vec<i8>,
    order: u32,
}

impl GolayPair {
    /// Builds the length-`2^order` pair by repeated doubling,
    /// `a' = a ++ b`, `b' = a ++ (-b)`, starting from `a = b = [+1]`.
    pub fn generate(order: u32) -> Result<Self> {
        if order > MAX_ORDER {
            return Err(Error::SizeLimit(format!(
                "Golay order {order} exceeds the limit of {MAX_ORDER}"
            )));
        }
        let mut a = vec![1i8];
        let mut b = vec![1i8];
        for _ in 0..order {
            let mut na = Vec::with_capacity(2 * a.len());
            na.extend_from_slice(&a);
            na.extend_from_slice(&b);
            let mut nb = a;
            nb.extend(b.iter().map(|&c| -c));
            a = na;
            b = nb;
        }
        Ok(GolayPair { a, b, order })
    }

    /// Wraps an existing pair after checking chip values, lengths and the
    /// complementarity identity.
    pub fn from_sequences(a: Vec<i8>, b: Vec<i8>) -> Result<Self> {
        if a.len() != b.len() || a.is_empty() || !a.len().is_power_of_two() {
            return Err(Error::shape(format!(
                "pair lengths must be equal powers of two, got {} and {}",
                a.len(),
                b.len()
            )));
        }
        if a.iter().chain(&b).any(|&c| c != 1 && c != -1) {
            return Err(Error::Range("chips must be +1 or -1".into()));
        }
        let order = a.len().trailing_zeros();
        let pair = GolayPair { a, b, order };
        if !pair.is_complementary() {
            return Err(Error::Range("sequences are not complementary".into()));
        }
        Ok(pair)
    }

    pub fn a(&self) -> &[i8] {
        &self.a
    }

    pub fn b(&self) -> &[i8] {
        &self.b
    }

    pub fn sequence(&self, id: SequenceId) -> &[i8] {
        match id {
            SequenceId::A => &self.a,
            SequenceId::B => &self.b,
        }
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    /// Number of chips per sequence, `N = 2^order`.
    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    /// `autocorr(a) + autocorr(b)` over lags `-(N-1)..=(N-1)`.
    pub fn summed_autocorrelation(&self) -> Vec<i64> {
        summed_autocorrelation(&self.a, &self.b)
    }

    pub fn is_complementary(&self) -> bool {
        let n = self.len() as i64;
        let mid = self.len() - 1;
        self.summed_autocorrelation()
            .iter()
            .enumerate()
            .all(|(i, &v)| if i == mid { v == 2 * n } else { v == 0 })
    }
}

/// Aperiodic autocorrelation over lags `-(N-1)..=(N-1)`; index `N-1` is lag 0.
pub fn aperiodic_autocorrelation(seq: &[i8]) -> Vec<i64> {
    let n = seq.len();
    if n == 0 {
        return Vec::new();
    }
    let mut out = vec![0i64; 2 * n - 1];
    for lag in 0..n {
        let v: i64 = seq[..n - lag]
            .iter()
            .zip(&seq[lag..])
            .map(|(&x, &y)| i64::from(x) * i64::from(y))
            .sum();
        out[n - 1 + lag] = v;
        out[n - 1 - lag] = v;
    }
    out
}

/// Sum of the aperiodic autocorrelations of two equal-length sequences.
///
/// Works for any pair, complementary or not.
pub fn summed_autocorrelation(a: &[i8], b: &[i8]) -> Vec<i64> {
    assert_eq!(a.len(), b.len(), "sequences must have equal length");
    aperiodic_autocorrelation(a)
        .into_iter()
        .zip(aperiodic_autocorrelation(b))
        .map(|(x, y)| x + y)
        .collect()
}

fn chips_to_line(chips: &[i8]) -> String {
    chips
        .iter()
        .map(|&c| if c > 0 { "+1" } else { "-1" })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Two lines of `+1`/`-1` tokens, `a` first.
impl fmt::Display for GolayPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", chips_to_line(&self.a))?;
        writeln!(f, "{}", chips_to_line(&self.b))
    }
}

impl FromStr for GolayPair {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut lines = s.lines().filter(|l| !l.trim().is_empty());
        let mut parse_line = |name: &str| -> Result<Vec<i8>> {
            let line = lines
                .next()
                .ok_or_else(|| Error::Format(format!("missing sequence {name}")))?;
            line.split_whitespace()
                .map(|tok| match tok {
                    "+1" | "1" => Ok(1),
                    "-1" => Ok(-1),
                    other => Err(Error::Format(format!("bad chip token {other:?}"))),
                })
                .collect()
        };
        let a = parse_line("a")?;
        let b = parse_line("b")?;
        GolayPair::from_sequences(a, b)
    }
}
