//! Wireless-side mathematics for the multiuser MISO downlink.
//!
//! Channel generation (urban path loss + Rayleigh fading), SINR and sum
//! rate, power normalization, the beamforming recovery from uplink and
//! downlink power vectors, the WMMSE baseline, and the imperfect-CSI
//! perturbation.
//!
//! All learning-side math runs on noise-normalized channels (the stored
//! matrix is `raw / sqrt(noise_power)`), so SINR denominators use unit
//! noise; SINR is invariant under this joint rescaling.

mod channel;
mod io;
mod wmmse;

pub use channel::{add_channel_error, generate_dataset, generate_sample, path_loss_db};
pub use io::{dataset_checksum, read_dataset, write_dataset, write_dataset_csv, DatasetIoError};
pub use wmmse::{wmmse, WmmseOptions, WmmseResult};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum BeamformError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("channel row {0} has zero norm; beam direction undefined")]
    ZeroChannelRow(usize),
    #[error("power vectors are not normalized to the budget")]
    UnnormalizedPowers,
}

/// System-level constants of the downlink.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub num_users: usize,
    pub num_antennas: usize,
    /// Total transmit power, watts.
    pub power: f64,
    /// Receiver noise power over the full bandwidth, watts.
    pub noise_power: f64,
    pub bandwidth_hz: f64,
    pub noise_psd_dbm_per_hz: f64,
}

impl SystemParams {
    /// Defaults: 30 dBm transmit power, 20 MHz bandwidth, -174 dBm/Hz noise
    /// density.
    pub fn new(num_users: usize, num_antennas: usize) -> Self {
        let bandwidth_hz = 20e6;
        let noise_psd_dbm_per_hz = -174.0;
        SystemParams {
            num_users,
            num_antennas,
            power: 1.0, // 30 dBm
            noise_power: noise_power_watts(noise_psd_dbm_per_hz, bandwidth_hz),
            bandwidth_hz,
            noise_psd_dbm_per_hz,
        }
    }
}

/// Noise power in watts from a PSD in dBm/Hz over `bandwidth_hz`.
pub fn noise_power_watts(psd_dbm_per_hz: f64, bandwidth_hz: f64) -> f64 {
    let dbm = psd_dbm_per_hz + 10.0 * bandwidth_hz.log10();
    10f64.powf((dbm - 30.0) / 10.0)
}

/// One downlink channel realization.
///
/// `h` is the K x N_t noise-normalized matrix, row-major, with row k equal
/// to the conjugate transpose of user k's channel vector. `raw_h` keeps the
/// watt-scale channel with the same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSample {
    pub num_users: usize,
    pub num_antennas: usize,
    pub h: Vec<Complex64>,
    pub raw_h: Vec<Complex64>,
    /// User distances from the base station, meters.
    pub distances: Vec<f64>,
}

impl ChannelSample {
    /// Row k of the normalized matrix (= h_k conjugate-transposed).
    pub fn row(&self, k: usize) -> &[Complex64] {
        &self.h[k * self.num_antennas..(k + 1) * self.num_antennas]
    }
}

/// Transmit beams, one column per user. Stored column-contiguous:
/// `w[k * num_antennas..]` is user k's beam.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamMatrix {
    pub num_antennas: usize,
    pub num_users: usize,
    pub w: Vec<Complex64>,
}

impl BeamMatrix {
    pub fn zeros(num_antennas: usize, num_users: usize) -> Self {
        BeamMatrix {
            num_antennas,
            num_users,
            w: vec![Complex64::new(0.0, 0.0); num_antennas * num_users],
        }
    }

    pub fn column(&self, k: usize) -> &[Complex64] {
        &self.w[k * self.num_antennas..(k + 1) * self.num_antennas]
    }

    pub fn column_mut(&mut self, k: usize) -> &mut [Complex64] {
        &mut self.w[k * self.num_antennas..(k + 1) * self.num_antennas]
    }

    pub fn total_power(&self) -> f64 {
        self.w.iter().map(|v| v.norm_sqr()).sum()
    }
}

/// Downlink powers `p` and virtual uplink powers `q`, both summing to the
/// power budget after [`normalize_power`].
#[derive(Debug, Clone, PartialEq)]
pub struct PowerVectors {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

// ---------------------------------------------------------------------------
// SINR and rate
// ---------------------------------------------------------------------------

/// Per-user SINR for beams `w` on a channel with explicit noise power.
pub fn sinr_with_noise(
    h: &[Complex64],
    num_users: usize,
    num_antennas: usize,
    w: &BeamMatrix,
    noise_power: f64,
) -> Vec<f64> {
    assert_eq!(h.len(), num_users * num_antennas, "channel shape");
    assert_eq!(w.num_antennas, num_antennas, "beam shape");
    assert_eq!(w.num_users, num_users, "beam shape");
    let mut out = Vec::with_capacity(num_users);
    for k in 0..num_users {
        let row = &h[k * num_antennas..(k + 1) * num_antennas];
        let mut signal = 0.0;
        let mut interference = 0.0;
        for j in 0..num_users {
            let col = w.column(j);
            let g: Complex64 = row.iter().zip(col).map(|(a, b)| a * b).sum();
            if j == k {
                signal = g.norm_sqr();
            } else {
                interference += g.norm_sqr();
            }
        }
        out.push(signal / (interference + noise_power));
    }
    out
}

/// Per-user SINR on a noise-normalized channel (unit noise).
pub fn sinr(sample: &ChannelSample, w: &BeamMatrix) -> Vec<f64> {
    sinr_with_noise(&sample.h, sample.num_users, sample.num_antennas, w, 1.0)
}

/// Achievable sum rate in bits/s/Hz.
pub fn sum_rate(sample: &ChannelSample, w: &BeamMatrix) -> f64 {
    sinr(sample, w).iter().map(|g| (1.0 + g).log2()).sum()
}

// ---------------------------------------------------------------------------
// Power normalization and beam recovery
// ---------------------------------------------------------------------------

/// Scale raw network outputs (2K sigmoids) so each half sums to the power
/// budget. An all-zero half falls back to the uniform split.
pub fn normalize_power(raw: &[f64], power: f64) -> Result<PowerVectors, BeamformError> {
    if raw.len() % 2 != 0 || raw.is_empty() {
        return Err(BeamformError::ShapeMismatch(format!(
            "expected 2K raw outputs, got {}",
            raw.len()
        )));
    }
    let k = raw.len() / 2;
    let scale_half = |half: &[f64]| -> Vec<f64> {
        let sum: f64 = half.iter().sum();
        if sum <= 0.0 {
            vec![power / k as f64; k]
        } else {
            half.iter().map(|v| v * power / sum).collect()
        }
    };
    Ok(PowerVectors {
        p: scale_half(&raw[..k]),
        q: scale_half(&raw[k..]),
    })
}

/// Solve `(I + Σ_j q_j h_j h_j†) z_k = h_k` for every user on the
/// normalized channel, returning the regularized directions.
pub(crate) fn regularized_directions(
    sample: &ChannelSample,
    q: &[f64],
) -> Result<Vec<Vec<Complex64>>, BeamformError> {
    let nt = sample.num_antennas;
    let k = sample.num_users;
    let mut a = DMatrix::<Complex64>::identity(nt, nt);
    for j in 0..k {
        let row = sample.row(j);
        for x in 0..nt {
            for y in 0..nt {
                // h_j h_j† with h_j = conj(row_j)^T
                a[(x, y)] += Complex64::new(q[j], 0.0) * row[x].conj() * row[y];
            }
        }
    }
    let lu = a.lu();
    let mut out = Vec::with_capacity(k);
    for user in 0..k {
        let row = sample.row(user);
        if row.iter().map(|v| v.norm_sqr()).sum::<f64>() == 0.0 {
            return Err(BeamformError::ZeroChannelRow(user));
        }
        let rhs =
            nalgebra::DVector::<Complex64>::from_iterator(nt, row.iter().map(|v| v.conj()));
        let z = lu
            .solve(&rhs)
            .expect("I + PSD is positive definite and invertible");
        out.push(z.iter().copied().collect());
    }
    Ok(out)
}

/// Recover the transmit beams from power vectors on the normalized channel:
/// each user's beam points along `(I + Σ q_j h_j h_j†)^{-1} h_k` and carries
/// power `p_k`, so the total transmit power is exactly `Σ p_k`.
pub fn recover_beamforming(
    sample: &ChannelSample,
    pv: &PowerVectors,
    params: &SystemParams,
) -> Result<BeamMatrix, BeamformError> {
    let k = sample.num_users;
    if pv.p.len() != k || pv.q.len() != k {
        return Err(BeamformError::ShapeMismatch(format!(
            "power vectors of length {}/{} for {k} users",
            pv.p.len(),
            pv.q.len()
        )));
    }
    let budget = params.power;
    if (pv.p.iter().sum::<f64>() - budget).abs() > 1e-9 * budget.max(1.0) {
        return Err(BeamformError::UnnormalizedPowers);
    }
    let dirs = regularized_directions(sample, &pv.q)?;
    let mut beams = BeamMatrix::zeros(sample.num_antennas, k);
    for user in 0..k {
        let z = &dirs[user];
        let norm = z.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let scale = Complex64::new(pv.p[user].sqrt() / norm, 0.0);
        for (dst, src) in beams.column_mut(user).iter_mut().zip(z) {
            *dst = src * scale;
        }
    }
    Ok(beams)
}

#[cfg(test)]
mod tests;
