//! Dataset file format.
//!
//! Binary layout: magic `BFQ1`, version u16, K u16, N_t u16, n_samples
//! u32; then per sample the K x N_t normalized channel entries as
//! little-endian f64 (re, im) pairs, followed by K distances as f64. The
//! CSV export mirrors the same ordering.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use thiserror::Error;

use super::ChannelSample;

const MAGIC: &[u8; 4] = b"BFQ1";
const VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum DatasetIoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("not a dataset file (bad magic)")]
    BadMagic,
    #[error("unsupported dataset version {0}")]
    UnsupportedVersion(u16),
    #[error("dataset dimensions disagree across samples")]
    InconsistentSamples,
    #[error("dataset file is empty")]
    Empty,
}

pub fn write_dataset(path: &Path, samples: &[ChannelSample]) -> Result<(), DatasetIoError> {
    if samples.is_empty() {
        return Err(DatasetIoError::Empty);
    }
    let (k, nt) = (samples[0].num_users, samples[0].num_antennas);
    if samples
        .iter()
        .any(|s| s.num_users != k || s.num_antennas != nt)
    {
        return Err(DatasetIoError::InconsistentSamples);
    }
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(k as u16).to_le_bytes())?;
    out.write_all(&(nt as u16).to_le_bytes())?;
    out.write_all(&(samples.len() as u32).to_le_bytes())?;
    for sample in samples {
        for v in &sample.h {
            out.write_all(&v.re.to_le_bytes())?;
            out.write_all(&v.im.to_le_bytes())?;
        }
        for d in &sample.distances {
            out.write_all(&d.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Read a dataset; `noise_power` reconstructs the watt-scale channel from
/// the stored normalized entries.
pub fn read_dataset(path: &Path, noise_power: f64) -> Result<Vec<ChannelSample>, DatasetIoError> {
    let mut input = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(DatasetIoError::BadMagic);
    }
    let version = read_u16(&mut input)?;
    if version != VERSION {
        return Err(DatasetIoError::UnsupportedVersion(version));
    }
    let k = read_u16(&mut input)? as usize;
    let nt = read_u16(&mut input)? as usize;
    let n = read_u32(&mut input)? as usize;
    let denorm = noise_power.sqrt();
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let mut h = Vec::with_capacity(k * nt);
        for _ in 0..k * nt {
            let re = read_f64(&mut input)?;
            let im = read_f64(&mut input)?;
            h.push(Complex64::new(re, im));
        }
        let mut distances = Vec::with_capacity(k);
        for _ in 0..k {
            distances.push(read_f64(&mut input)?);
        }
        let raw_h = h.iter().map(|v| v * denorm).collect();
        samples.push(ChannelSample {
            num_users: k,
            num_antennas: nt,
            h,
            raw_h,
            distances,
        });
    }
    Ok(samples)
}

/// CSV mirror: one row per (sample, user) with the distance and the
/// normalized channel entries at 17 significant digits.
pub fn write_dataset_csv(path: &Path, samples: &[ChannelSample]) -> Result<(), DatasetIoError> {
    if samples.is_empty() {
        return Err(DatasetIoError::Empty);
    }
    let nt = samples[0].num_antennas;
    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "sample,user,distance_m")?;
    for a in 0..nt {
        write!(out, ",re{a},im{a}")?;
    }
    writeln!(out)?;
    for (si, sample) in samples.iter().enumerate() {
        for k in 0..sample.num_users {
            write!(out, "{si},{k},{:.16e}", sample.distances[k])?;
            for v in sample.row(k) {
                write!(out, ",{:.16e},{:.16e}", v.re, v.im)?;
            }
            writeln!(out)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// SHA-256 of a file, hex-encoded. Used to key caches and manifests.
pub fn dataset_checksum(path: &Path) -> Result<String, DatasetIoError> {
    use sha2::{Digest, Sha256};
    let mut file = File::open(path)?;
    let mut hasher = Sha256::new();
    std::io::copy(&mut file, &mut hasher)?;
    let digest = hasher.finalize();
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

fn read_u16(r: &mut impl Read) -> std::io::Result<u16> {
    let mut buf = [0u8; 2];
    r.read_exact(&mut buf)?;
    Ok(u16::from_le_bytes(buf))
}

fn read_u32(r: &mut impl Read) -> std::io::Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f64(r: &mut impl Read) -> std::io::Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}
