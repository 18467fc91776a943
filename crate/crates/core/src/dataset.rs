//! Binary dataset files holding paired transmit / received samples.
//!
//! Layout (little-endian): magic `FDXD`, version `u32 = 1`, sample count
//! `u64`, sample rate `f64`, then per sample `x.re x.im y.re y.im` as `f64`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::signal::SignalBuffer;

pub const MAGIC: [u8; 4] = *b"FDXD";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 8;
const RECORD_LEN: usize = 4 * 8;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: SignalBuffer,
    pub y: SignalBuffer,
}

impl Dataset {
    pub fn new(x: SignalBuffer, y: SignalBuffer) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::LengthMismatch {
                expected: x.len(),
                found: y.len(),
            });
        }
        Ok(Self { x, y })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.x.sample_rate_hz
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + RECORD_LEN * self.len());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.sample_rate_hz().to_le_bytes());
        for (x, y) in self.x.samples.iter().zip(&self.y.samples) {
            for v in [x.re, x.im, y.re, y.im] {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Format(format!(
                "dataset header needs {HEADER_LEN} bytes, file has {}",
                bytes.len()
            )));
        }
        if bytes[0..4] != MAGIC {
            return Err(Error::Format("bad magic, expected \"FDXD\"".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(Error::Format(format!("unsupported dataset version {version}")));
        }
        let count = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
        let rate = f64::from_le_bytes(bytes[16..24].try_into().unwrap());
        let payload = &bytes[HEADER_LEN..];
        let found = payload.len() / RECORD_LEN;
        if payload.len() % RECORD_LEN != 0 || found as u64 != count {
            return Err(Error::LengthMismatch {
                expected: count as usize,
                found,
            });
        }

        let mut x = Vec::with_capacity(found);
        let mut y = Vec::with_capacity(found);
        for rec in payload.chunks_exact(RECORD_LEN) {
            let f = |i: usize| f64::from_le_bytes(rec[i * 8..i * 8 + 8].try_into().unwrap());
            x.push(Complex64::new(f(0), f(1)));
            y.push(Complex64::new(f(2), f(3)));
        }
        Ok(Self {
            x: SignalBuffer::new(x, rate),
            y: SignalBuffer::new(y, rate),
        })
    }
}

pub fn save_dataset(x: &SignalBuffer, y: &SignalBuffer, path: impl AsRef<Path>) -> Result<()> {
    let ds = Dataset::new(x.clone(), y.clone())?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&ds.to_bytes())?;
    w.flush()?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    Dataset::from_bytes(&bytes)
}
