//! `SQZT` binary trace files.
//!
//! Little-endian layout:
//!
//! | field            | type                |
//! |------------------|---------------------|
//! | magic            | `b"SQZT"`           |
//! | version          | u16 (= 1)           |
//! | trace_kind       | u8                  |
//! | sample_rate_hz   | u64                 |
//! | rep_rate_hz      | u64                 |
//! | n_samples        | u64                 |
//! | ramp_start_rad   | f64                 |
//! | ramp_end_rad     | f64                 |
//! | clearance_db     | f64                 |
//! | seed             | u64                 |
//! | kernel_len       | u16                 |
//! | kernel           | f64 × kernel_len    |
//! | samples          | f32 × n_samples     |
//!
//! Version 1 traces are generated with [`crate::rng::GENERATOR_ID`].

use crate::synth::{HomodyneTrace, TraceHeader, TraceKind};
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"SQZT";
pub const VERSION: u16 = 1;
/// Bytes before the kernel.
pub const FIXED_HEADER_LEN: usize = 4 + 2 + 1 + 8 * 7 + 2;

#[derive(Debug, Error)]
pub enum TraceFileError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not an SQZT file (magic {0:?})")]
    BadMagic([u8; 4]),
    #[error("unsupported SQZT version {0}")]
    UnsupportedVersion(u16),
    #[error("unknown trace kind {0}")]
    UnknownKind(u8),
    #[error("kernel has {0} taps, more than the format allows")]
    KernelTooLong(usize),
    #[error("trace truncated: expected {expected} sample bytes, found {found}")]
    Truncated { expected: u64, found: u64 },
    #[error("{0} unexpected bytes after the samples")]
    TrailingBytes(u64),
}

pub fn write_trace<W: Write>(trace: &HomodyneTrace, mut w: W) -> Result<(), TraceFileError> {
    let h = &trace.header;
    let kernel_len =
        u16::try_from(h.kernel.len()).map_err(|_| TraceFileError::KernelTooLong(h.kernel.len()))?;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[h.kind as u8])?;
    w.write_all(&h.sample_rate_hz.to_le_bytes())?;
    w.write_all(&h.rep_rate_hz.to_le_bytes())?;
    w.write_all(&(trace.samples.len() as u64).to_le_bytes())?;
    w.write_all(&h.ramp_start_rad.to_le_bytes())?;
    w.write_all(&h.ramp_end_rad.to_le_bytes())?;
    w.write_all(&h.clearance_db.to_le_bytes())?;
    w.write_all(&h.seed.to_le_bytes())?;
    w.write_all(&kernel_len.to_le_bytes())?;
    for k in &h.kernel {
        w.write_all(&k.to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(trace.samples.len() * 4);
    for s in &trace.samples {
        buf.extend_from_slice(&s.to_le_bytes());
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

pub fn save_trace(trace: &HomodyneTrace, path: &Path) -> Result<(), TraceFileError> {
    write_trace(trace, BufWriter::new(File::create(path)?))
}

fn take<const N: usize>(r: &mut impl Read) -> io::Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)?;
    Ok(b)
}

pub fn read_trace<R: Read>(mut r: R) -> Result<HomodyneTrace, TraceFileError> {
    let magic = take::<4>(&mut r)?;
    if &magic != MAGIC {
        return Err(TraceFileError::BadMagic(magic));
    }
    let version = u16::from_le_bytes(take(&mut r)?);
    if version != VERSION {
        return Err(TraceFileError::UnsupportedVersion(version));
    }
    let kind_byte = take::<1>(&mut r)?[0];
    let kind = TraceKind::from_u8(kind_byte).ok_or(TraceFileError::UnknownKind(kind_byte))?;
    let sample_rate_hz = u64::from_le_bytes(take(&mut r)?);
    let rep_rate_hz = u64::from_le_bytes(take(&mut r)?);
    let n_samples = u64::from_le_bytes(take(&mut r)?);
    let ramp_start_rad = f64::from_le_bytes(take(&mut r)?);
    let ramp_end_rad = f64::from_le_bytes(take(&mut r)?);
    let clearance_db = f64::from_le_bytes(take(&mut r)?);
    let seed = u64::from_le_bytes(take(&mut r)?);
    let kernel_len = u16::from_le_bytes(take(&mut r)?) as usize;
    let kernel = (0..kernel_len)
        .map(|_| take(&mut r).map(f64::from_le_bytes))
        .collect::<io::Result<Vec<_>>>()?;

    let expected = n_samples.saturating_mul(4);
    let mut raw = Vec::new();
    r.by_ref().take(expected).read_to_end(&mut raw)?;
    if (raw.len() as u64) < expected {
        return Err(TraceFileError::Truncated {
            expected,
            found: raw.len() as u64,
        });
    }
    let trailing = io::copy(&mut r, &mut io::sink())?;
    if trailing > 0 {
        return Err(TraceFileError::TrailingBytes(trailing));
    }
    let samples = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(HomodyneTrace {
        header: TraceHeader {
            kind,
            sample_rate_hz,
            rep_rate_hz,
            ramp_start_rad,
            ramp_end_rad,
            clearance_db,
            seed,
            kernel,
        },
        samples,
    })
}

pub fn load_trace(path: &Path) -> Result<HomodyneTrace, TraceFileError> {
    read_trace(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_trace(samples: Vec<f32>, kernel: Vec<f64>) -> HomodyneTrace {
        HomodyneTrace {
            header: TraceHeader {
                kind: TraceKind::Shot,
                sample_rate_hz: 1_000_000_000,
                rep_rate_hz: 100_000_000,
                ramp_start_rad: 0.0,
                ramp_end_rad: std::f64::consts::TAU,
                clearance_db: 8.0,
                seed: 0xDEAD_BEEF,
                kernel,
            },
            samples,
        }
    }

    #[test]
    fn header_layout_is_fixed() {
        let t = sample_trace(vec![1.5, -2.0], vec![0.6, 0.8]);
        let mut buf = Vec::new();
        write_trace(&t, &mut buf).unwrap();
        assert_eq!(FIXED_HEADER_LEN, 65);
        assert_eq!(buf.len(), FIXED_HEADER_LEN + 2 * 8 + 2 * 4);
        assert_eq!(&buf[..4], b"SQZT");
        assert_eq!(&buf[4..6], &[1, 0]);
        assert_eq!(buf[6], 1);
        assert_eq!(&buf[7..15], &1_000_000_000u64.to_le_bytes());
        assert_eq!(&buf[23..31], &2u64.to_le_bytes());
        assert_eq!(&buf[55..63], &0xDEAD_BEEFu64.to_le_bytes());
        assert_eq!(&buf[63..65], &[2, 0]);
        assert_eq!(&buf[65..73], &0.6f64.to_le_bytes());
        assert_eq!(&buf[81..85], &1.5f32.to_le_bytes());
    }

    #[test]
    fn corrupt_files_rejected() {
        let t = sample_trace(vec![1.0; 10], vec![1.0]);
        let mut buf = Vec::new();
        write_trace(&t, &mut buf).unwrap();

        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(
            read_trace(&bad[..]),
            Err(TraceFileError::BadMagic(_))
        ));
        let mut bad = buf.clone();
        bad[4] = 9;
        assert!(matches!(
            read_trace(&bad[..]),
            Err(TraceFileError::UnsupportedVersion(9))
        ));
        let mut bad = buf.clone();
        bad[6] = 7;
        assert!(matches!(
            read_trace(&bad[..]),
            Err(TraceFileError::UnknownKind(7))
        ));
        assert!(matches!(
            read_trace(&buf[..buf.len() - 3]),
            Err(TraceFileError::Truncated { .. })
        ));
        let mut long = buf.clone();
        long.push(0);
        assert!(matches!(
            read_trace(&long[..]),
            Err(TraceFileError::TrailingBytes(1))
        ));
    }

    proptest! {
        #[test]
        fn round_trip(samples in proptest::collection::vec(any::<f32>().prop_filter("finite", |x| x.is_finite()), 0..64),
                      kernel in proptest::collection::vec(-1.0f64..1.0, 0..16)) {
            let t = sample_trace(samples, kernel);
            let mut buf = Vec::new();
            write_trace(&t, &mut buf).unwrap();
            let back = read_trace(&buf[..]).unwrap();
            prop_assert_eq!(back, t);
        }
    }
}
