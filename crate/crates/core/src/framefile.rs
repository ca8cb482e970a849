//! Binary container for recorded frequency-domain symbol pairs.
//!
//! Layout, all little-endian:
//!
//! | offset | size | field                         |
//! |--------|------|-------------------------------|
//! | 0      | 8    | magic `b"ISACFRM\0"`          |
//! | 8      | 4    | version (`u32`, currently 1)  |
//! | 12     | 4    | N, subcarriers (`u32`)        |
//! | 16     | 4    | L, symbol records (`u32`)     |
//! | 20     | 8    | Δf in Hz (`f64`)              |
//! | 28     | 8    | centre frequency in Hz (`f64`)|
//! | 36     | ...  | L records                     |
//!
//! Each record is N transmit symbols followed by N receive samples, every
//! complex value stored as `f64` real then `f64` imaginary. The payload is
//! therefore exactly `L * N * 2 * 2 * 8` bytes.

use std::fs;
use std::path::Path;

use num_complex::Complex64;

use crate::constellation::SymbolBlock;
use crate::error::{Error, Result};
use crate::signal::SymbolFrame;

pub const MAGIC: [u8; 8] = *b"ISACFRM\0";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 36;
const BYTES_PER_COMPLEX: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameHeader {
    pub version: u32,
    pub n_subcarriers: usize,
    pub n_symbols: usize,
    pub subcarrier_spacing: f64,
    pub center_freq: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameFile {
    pub header: FrameHeader,
    pub records: Vec<SymbolFrame>,
}

impl FrameFile {
    pub fn new(subcarrier_spacing: f64, center_freq: f64, records: Vec<SymbolFrame>) -> Result<Self> {
        let n = records.first().map(|r| r.tx.len()).ok_or(Error::EmptyInput("frame records"))?;
        for r in &records {
            if r.tx.len() != n || r.rx.len() != n {
                return Err(Error::LengthMismatch { expected: n, got: r.tx.len().max(r.rx.len()) });
            }
        }
        let header = FrameHeader {
            version: VERSION,
            n_subcarriers: n,
            n_symbols: records.len(),
            subcarrier_spacing,
            center_freq,
        };
        Ok(Self { header, records })
    }

    pub fn bandwidth(&self) -> f64 {
        self.header.n_subcarriers as f64 * self.header.subcarrier_spacing
    }

    pub fn encode(&self) -> Vec<u8> {
        let h = &self.header;
        let mut out = Vec::with_capacity(HEADER_LEN + h.n_symbols * h.n_subcarriers * 2 * BYTES_PER_COMPLEX);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&h.version.to_le_bytes());
        out.extend_from_slice(&(h.n_subcarriers as u32).to_le_bytes());
        out.extend_from_slice(&(h.n_symbols as u32).to_le_bytes());
        out.extend_from_slice(&h.subcarrier_spacing.to_le_bytes());
        out.extend_from_slice(&h.center_freq.to_le_bytes());
        for r in &self.records {
            for c in r.tx.symbols.iter().chain(&r.rx) {
                out.extend_from_slice(&c.re.to_le_bytes());
                out.extend_from_slice(&c.im.to_le_bytes());
            }
        }
        out
    }

    /// Validates the header before touching the payload; nothing is returned
    /// unless the whole file is well formed.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() || bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::BadMagic);
        }
        if bytes.len() < HEADER_LEN {
            return Err(Error::TruncatedPayload { expected: HEADER_LEN, found: bytes.len() });
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let version = u32_at(8);
        if version != VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let n = u32_at(12) as usize;
        let l = u32_at(16) as usize;
        let subcarrier_spacing = f64_at(20);
        let center_freq = f64_at(28);
        if n < 2 || l < 1 {
            return Err(Error::NumerologyMismatch(format!("header declares N = {n}, L = {l}")));
        }
        if !(subcarrier_spacing > 0.0 && subcarrier_spacing.is_finite()) {
            return Err(Error::NumerologyMismatch(format!("header declares Δf = {subcarrier_spacing}")));
        }
        let expected = l
            .checked_mul(n)
            .and_then(|v| v.checked_mul(2 * BYTES_PER_COMPLEX))
            .ok_or_else(|| Error::NumerologyMismatch("payload size overflows".into()))?;
        let payload = &bytes[HEADER_LEN..];
        if payload.len() < expected {
            return Err(Error::TruncatedPayload { expected, found: payload.len() });
        }
        if payload.len() > expected {
            return Err(Error::TrailingBytes(payload.len() - expected));
        }
        let mut values = payload.chunks_exact(BYTES_PER_COMPLEX).map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..].try_into().unwrap()),
            )
        });
        let records = (0..l)
            .map(|_| {
                let tx: Vec<Complex64> = values.by_ref().take(n).collect();
                let rx: Vec<Complex64> = values.by_ref().take(n).collect();
                SymbolFrame { tx: SymbolBlock::new(tx), rx }
            })
            .collect();
        Ok(Self {
            header: FrameHeader { version, n_subcarriers: n, n_symbols: l, subcarrier_spacing, center_freq },
            records,
        })
    }

    pub fn write_to<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn read_from<P: AsRef<Path>>(path: P) -> Result<Self> {
        Self::decode(&fs::read(path)?)
    }
}
