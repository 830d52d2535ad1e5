//! Channel realization: distances, path loss, Rayleigh fading, and the
//! imperfect-CSI perturbation.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{ChannelSample, SystemParams};
use crate::exec;
use crate::rng::stream_rng;

/// Urban macro path loss in dB at distance `d_meters`:
/// `128.1 + 37.6 log10(d_km)`.
pub fn path_loss_db(d_meters: f64) -> f64 {
    128.1 + 37.6 * (d_meters / 1000.0).log10()
}

fn complex_normal(rng: &mut impl Rng, std_per_axis: f64) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * std_per_axis, im * std_per_axis)
}

/// One channel realization from the stream `(seed, index)`.
///
/// Per user: distance drawn area-uniform on the 100-500 m annulus, path
/// loss applied to unit-variance Rayleigh fading, then the row is divided
/// by `sqrt(noise_power)` so downstream SINR uses unit noise.
pub fn generate_sample(params: &SystemParams, seed: u64, index: u64) -> ChannelSample {
    let mut rng = stream_rng(seed, "channel-sample", index);
    let k = params.num_users;
    let nt = params.num_antennas;
    let norm = 1.0 / params.noise_power.sqrt();
    let mut raw = Vec::with_capacity(k * nt);
    let mut h = Vec::with_capacity(k * nt);
    let mut distances = Vec::with_capacity(k);
    let (r_min_sq, r_max_sq) = (100.0f64 * 100.0, 500.0f64 * 500.0);
    for _ in 0..k {
        let u: f64 = rng.gen();
        let d = (u * (r_max_sq - r_min_sq) + r_min_sq).sqrt();
        distances.push(d);
        let amplitude = 10f64.powf(-path_loss_db(d) / 20.0);
        for _ in 0..nt {
            // CN(0,1) fading scaled by the link amplitude
            let g = complex_normal(&mut rng, std::f64::consts::FRAC_1_SQRT_2);
            let value = g * amplitude;
            raw.push(value);
            h.push(value * norm);
        }
    }
    ChannelSample {
        num_users: k,
        num_antennas: nt,
        h,
        raw_h: raw,
        distances,
    }
}

/// Generate `n_samples` channels deterministically; per-sample RNG streams
/// make the result independent of thread count.
pub fn generate_dataset(n_samples: usize, params: &SystemParams, seed: u64) -> Vec<ChannelSample> {
    let params = *params;
    exec::map_indices(n_samples, move |i| generate_sample(&params, seed, i as u64))
}

/// Perturb a channel estimate into the "true" channel: the unit-variance
/// fading coefficient of each antenna gains an independent CN(0, sigma_e2)
/// error, which is then carried through the same path-loss and noise
/// scaling as the estimate.
///
/// The unit error draw does not depend on `sigma_e2`, so sweeping the error
/// variance with a fixed seed uses common random numbers.
pub fn add_channel_error(
    sample: &ChannelSample,
    sigma_e2: f64,
    params: &SystemParams,
    seed: u64,
) -> ChannelSample {
    assert!(sigma_e2 >= 0.0, "error variance must be non-negative");
    let mut out = sample.clone();
    if sigma_e2 == 0.0 {
        return out;
    }
    let nt = sample.num_antennas;
    let norm = 1.0 / params.noise_power.sqrt();
    let scale = sigma_e2.sqrt();
    for k in 0..sample.num_users {
        let mut rng = stream_rng(seed, "csi-error", k as u64);
        let amplitude = 10f64.powf(-path_loss_db(sample.distances[k]) / 20.0);
        for a in 0..nt {
            let unit = complex_normal(&mut rng, std::f64::consts::FRAC_1_SQRT_2);
            let delta_raw = unit * scale * amplitude;
            out.raw_h[k * nt + a] += delta_raw;
            out.h[k * nt + a] += delta_raw * norm;
        }
    }
    out
}
