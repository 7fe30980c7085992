//! `COTR` binary trace files.
//!
//! | offset | size | field            | type    |
//! |--------|------|------------------|---------|
//! | 0      | 4    | magic `"COTR"`   | bytes   |
//! | 4      | 2    | version (= 1)    | u16 LE  |
//! | 6      | 2    | flags            | u16 LE  |
//! | 8      | 8    | sample_rate (Hz) | f64 LE  |
//! | 16     | 8    | t0 (s)           | f64 LE  |
//! | 24     | 4    | shots_averaged   | u32 LE  |
//! | 28     | 8    | n_samples        | u64 LE  |
//! | 36     | 4 n  | samples          | f32 LE  |
//!
//! Flags: bit 0 set when bit 1 names the Golay sequence, bit 1 set for
//! sequence B, bit 2 set when the record is a transmit packet rather than a
//! receiver trace. Other bits are reserved and must be zero.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::channel::Trace;
use crate::golay::SequenceId;
use crate::waveform::ProbePacket;
use crate::{Error, Result};

pub const MAGIC: [u8; 4] = *b"COTR";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 36;

const FLAG_TAGGED: u16 = 1 << 0;
const FLAG_SEQUENCE_B: u16 = 1 << 1;
const FLAG_PACKET: u16 = 1 << 2;
const KNOWN_FLAGS: u16 = FLAG_TAGGED | FLAG_SEQUENCE_B | FLAG_PACKET;

/// Contents of one trace file.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub sample_rate: f64,
    pub t0: f64,
    pub shots_averaged: u32,
    pub sequence: Option<SequenceId>,
    pub is_packet: bool,
    pub samples: Vec<f32>,
}

impl TraceRecord {
    /// Samples are narrowed to f32.
    pub fn from_trace(trace: &Trace, sequence: Option<SequenceId>) -> Self {
        TraceRecord {
            sample_rate: trace.sample_rate,
            t0: trace.t0,
            shots_averaged: trace.shots_averaged,
            sequence,
            is_packet: false,
            samples: trace.samples.iter().map(|&x| x as f32).collect(),
        }
    }

    pub fn from_packet(packet: &ProbePacket) -> Self {
        TraceRecord {
            sample_rate: packet.sample_rate(),
            t0: 0.0,
            shots_averaged: 1,
            sequence: Some(packet.sequence()),
            is_packet: true,
            samples: packet.samples().iter().map(|&x| x as f32).collect(),
        }
    }

    pub fn to_trace(&self) -> Result<Trace> {
        Trace::new(
            self.samples.iter().map(|&x| f64::from(x)).collect(),
            self.sample_rate,
            self.t0,
            self.shots_averaged,
        )
    }

    pub fn to_packet(&self, wavelength: f64) -> Result<ProbePacket> {
        let sequence = self
            .sequence
            .ok_or_else(|| Error::Format("packet record carries no sequence id".into()))?;
        Ok(ProbePacket::from_samples(
            self.samples.iter().map(|&x| f64::from(x)).collect(),
            self.sample_rate,
            wavelength,
            sequence,
        ))
    }

    fn flags(&self) -> u16 {
        let mut f = 0;
        if let Some(seq) = self.sequence {
            f |= FLAG_TAGGED;
            if seq == SequenceId::B {
                f |= FLAG_SEQUENCE_B;
            }
        }
        if self.is_packet {
            f |= FLAG_PACKET;
        }
        f
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = Vec::with_capacity(HEADER_LEN);
        header.extend_from_slice(&MAGIC);
        header.extend_from_slice(&VERSION.to_le_bytes());
        header.extend_from_slice(&self.flags().to_le_bytes());
        header.extend_from_slice(&self.sample_rate.to_le_bytes());
        header.extend_from_slice(&self.t0.to_le_bytes());
        header.extend_from_slice(&self.shots_averaged.to_le_bytes());
        header.extend_from_slice(&(self.samples.len() as u64).to_le_bytes());
        w.write_all(&header)?;
        let mut buf = Vec::with_capacity(4 * 8192);
        for chunk in self.samples.chunks(8192) {
            buf.clear();
            for x in chunk {
                buf.extend_from_slice(&x.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut header = [0u8; HEADER_LEN];
        r.read_exact(&mut header)
            .map_err(|e| Error::Format(format!("truncated header: {e}")))?;
        if header[0..4] != MAGIC {
            return Err(Error::Format("bad magic, not a COTR trace".into()));
        }
        let u16_at = |o: usize| u16::from_le_bytes([header[o], header[o + 1]]);
        let f64_at = |o: usize| f64::from_le_bytes(header[o..o + 8].try_into().expect("8 bytes"));
        let version = u16_at(4);
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let flags = u16_at(6);
        if flags & !KNOWN_FLAGS != 0 {
            return Err(Error::Format(format!("reserved flag bits set: {flags:#06x}")));
        }
        let sample_rate = f64_at(8);
        let t0 = f64_at(16);
        let shots_averaged = u32::from_le_bytes(header[24..28].try_into().expect("4 bytes"));
        let n = u64::from_le_bytes(header[28..36].try_into().expect("8 bytes"));
        let byte_len = n
            .checked_mul(4)
            .ok_or_else(|| Error::Format(format!("sample count {n} overflows")))?;
        let mut payload = Vec::new();
        r.by_ref().take(byte_len).read_to_end(&mut payload)?;
        if payload.len() as u64 != byte_len {
            return Err(Error::Format(format!(
                "header declares {n} samples, payload holds {}",
                payload.len() / 4
            )));
        }
        let mut extra = [0u8; 1];
        if r.read(&mut extra)? != 0 {
            return Err(Error::Format(format!(
                "payload longer than the declared {n} samples"
            )));
        }
        let samples = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        let sequence = (flags & FLAG_TAGGED != 0).then_some(if flags & FLAG_SEQUENCE_B != 0 {
            SequenceId::B
        } else {
            SequenceId::A
        });
        Ok(TraceRecord {
            sample_rate,
            t0,
            shots_averaged,
            sequence,
            is_packet: flags & FLAG_PACKET != 0,
            samples,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record() -> TraceRecord {
        TraceRecord {
            sample_rate: 10e9,
            t0: -0.5e-6,
            shots_averaged: 4000,
            sequence: Some(SequenceId::B),
            is_packet: false,
            samples: vec![0.0, 1.5, -2.25e-4, f32::MIN_POSITIVE, -0.0],
        }
    }

    #[test]
    fn header_layout() {
        let mut bytes = Vec::new();
        record().write_to(&mut bytes).unwrap();
        assert_eq!(bytes.len(), HEADER_LEN + 5 * 4);
        assert_eq!(&bytes[0..4], b"COTR");
        assert_eq!(&bytes[4..6], &[1, 0]);
        assert_eq!(&bytes[6..8], &[0b11, 0]);
        assert_eq!(&bytes[8..16], &10e9f64.to_le_bytes());
        assert_eq!(&bytes[24..28], &4000u32.to_le_bytes());
        assert_eq!(&bytes[28..36], &5u64.to_le_bytes());
        assert_eq!(&bytes[40..44], &1.5f32.to_le_bytes());
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let mut bytes = Vec::new();
        record().write_to(&mut bytes).unwrap();
        let back = TraceRecord::read_from(bytes.as_slice()).unwrap();
        assert_eq!(back, record());
        let bits: Vec<u32> = back.samples.iter().map(|x| x.to_bits()).collect();
        let orig: Vec<u32> = record().samples.iter().map(|x| x.to_bits()).collect();
        assert_eq!(bits, orig);
    }

    #[test]
    fn rejects_bad_files() {
        let mut bytes = Vec::new();
        record().write_to(&mut bytes).unwrap();

        let mut v2 = bytes.clone();
        v2[4] = 2;
        assert!(matches!(TraceRecord::read_from(v2.as_slice()), Err(Error::Format(_))));

        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(TraceRecord::read_from(magic.as_slice()).is_err());

        let short = &bytes[..bytes.len() - 2];
        assert!(TraceRecord::read_from(short).is_err());

        let mut long = bytes.clone();
        long.extend_from_slice(&[0, 0, 0, 0]);
        assert!(TraceRecord::read_from(long.as_slice()).is_err());

        let mut flags = bytes.clone();
        flags[7] = 0x80;
        assert!(TraceRecord::read_from(flags.as_slice()).is_err());

        assert!(TraceRecord::read_from(&bytes[..10]).is_err());
    }
}
