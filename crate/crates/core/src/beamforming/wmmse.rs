//! Weighted-MMSE sum-rate baseline.
//!
//! Alternating updates of MMSE receive scalars, inverse-MSE weights, and
//! transmit beams through a regularized inverse, with a bisection on the
//! power multiplier so the transmit power constraint binds. Initialized
//! with matched-filter beams at equal power. The rate history is
//! non-decreasing; non-convergence within `max_iter` is reported through
//! the `converged` flag rather than an error.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::{sinr, BeamMatrix, BeamformError, ChannelSample, SystemParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WmmseOptions {
    pub max_iter: usize,
    /// Stop when the rate improves by less than this between iterations.
    pub tol: f64,
    /// Relative accuracy of the power bisection.
    pub power_tol: f64,
}

impl Default for WmmseOptions {
    fn default() -> Self {
        WmmseOptions {
            max_iter: 200,
            tol: 1e-5,
            power_tol: 1e-11,
        }
    }
}

#[derive(Debug, Clone)]
pub struct WmmseResult {
    pub beams: BeamMatrix,
    /// Sum rate after every iteration, bits/s/Hz.
    pub rate_history: Vec<f64>,
    pub converged: bool,
}

impl WmmseResult {
    pub fn rate(&self) -> f64 {
        *self.rate_history.last().expect("at least one iteration")
    }
}

/// h_k† w_j for all pairs, K x K row-major.
fn coupling(sample: &ChannelSample, beams: &BeamMatrix) -> Vec<Complex64> {
    let k = sample.num_users;
    let mut g = vec![Complex64::new(0.0, 0.0); k * k];
    for row in 0..k {
        let h_row = sample.row(row);
        for col in 0..k {
            g[row * k + col] = h_row
                .iter()
                .zip(beams.column(col))
                .map(|(a, b)| a * b)
                .sum();
        }
    }
    g
}

fn rate_of(sample: &ChannelSample, beams: &BeamMatrix) -> f64 {
    sinr(sample, beams).iter().map(|g| (1.0 + g).log2()).sum()
}

/// Beams for a given regularizer mu: w_k = v_k conj(u_k) (B + mu I)^{-1} h_k.
fn beams_for_mu(
    sample: &ChannelSample,
    b: &DMatrix<Complex64>,
    coeff: &[Complex64],
    mu: f64,
) -> Option<BeamMatrix> {
    let nt = sample.num_antennas;
    let mut reg = b.clone();
    for i in 0..nt {
        reg[(i, i)] += Complex64::new(mu, 0.0);
    }
    let lu = reg.lu();
    let mut beams = BeamMatrix::zeros(nt, sample.num_users);
    for k in 0..sample.num_users {
        let rhs = DVector::<Complex64>::from_iterator(
            nt,
            sample.row(k).iter().map(|v| v.conj()),
        );
        let z = lu.solve(&rhs)?;
        for (dst, src) in beams.column_mut(k).iter_mut().zip(z.iter()) {
            *dst = coeff[k] * src;
        }
    }
    Some(beams)
}

/// Run the WMMSE algorithm on a noise-normalized channel.
pub fn wmmse(
    sample: &ChannelSample,
    params: &SystemParams,
    opts: &WmmseOptions,
) -> Result<WmmseResult, BeamformError> {
    let k = sample.num_users;
    let nt = sample.num_antennas;
    let power = params.power;

    // matched-filter init at equal power
    let mut beams = BeamMatrix::zeros(nt, k);
    for user in 0..k {
        let row = sample.row(user);
        let norm = row.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(BeamformError::ZeroChannelRow(user));
        }
        let scale = Complex64::new((power / k as f64).sqrt() / norm, 0.0);
        for (dst, src) in beams.column_mut(user).iter_mut().zip(row) {
            // beam along h_k = conj(row)
            *dst = src.conj() * scale;
        }
    }

    let mut history = vec![rate_of(sample, &beams)];
    let mut converged = false;

    for _ in 0..opts.max_iter {
        // receive scalars and MSE weights
        let g = coupling(sample, &beams);
        let mut u = vec![Complex64::new(0.0, 0.0); k];
        let mut v = vec![0.0f64; k];
        for i in 0..k {
            let total: f64 = (0..k).map(|j| g[i * k + j].norm_sqr()).sum::<f64>() + 1.0;
            u[i] = g[i * k + i] / total;
            let mse = 1.0 - (u[i].conj() * g[i * k + i]).re;
            v[i] = 1.0 / mse.max(1e-300);
        }

        // transmit update: B = Σ v_j |u_j|^2 h_j h_j†
        let mut b = DMatrix::<Complex64>::zeros(nt, nt);
        for j in 0..k {
            let row = sample.row(j);
            let w = Complex64::new(v[j] * u[j].norm_sqr(), 0.0);
            for x in 0..nt {
                for y in 0..nt {
                    b[(x, y)] += w * row[x].conj() * row[y];
                }
            }
        }
        let coeff: Vec<Complex64> = (0..k)
            .map(|j| Complex64::new(v[j], 0.0) * u[j].conj())
            .collect();

        // power multiplier: zero if feasible, otherwise bisect until the
        // constraint binds
        let unconstrained = beams_for_mu(sample, &b, &coeff, 0.0);
        beams = match unconstrained {
            Some(cand) if cand.total_power() <= power * (1.0 + 1e-12) => cand,
            _ => {
                let mut lo = 0.0f64;
                let mut hi = 1.0f64;
                while beams_for_mu(sample, &b, &coeff, hi)
                    .map(|w| w.total_power() > power)
                    .unwrap_or(true)
                {
                    hi *= 2.0;
                    if hi > 1e18 {
                        break;
                    }
                }
                let mut best = beams_for_mu(sample, &b, &coeff, hi).expect("regularized solve");
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    match beams_for_mu(sample, &b, &coeff, mid) {
                        Some(cand) => {
                            let p = cand.total_power();
                            if p > power {
                                lo = mid;
                            } else {
                                hi = mid;
                                best = cand;
                            }
                            if (p - power).abs() <= opts.power_tol * power {
                                best = beams_for_mu(sample, &b, &coeff, mid)
                                    .expect("regularized solve");
                                break;
                            }
                        }
                        None => lo = mid,
                    }
                }
                best
            }
        };

        let rate = rate_of(sample, &beams);
        let prev = *history.last().unwrap();
        history.push(rate);
        if (rate - prev).abs() < opts.tol {
            converged = true;
            break;
        }
    }

    Ok(WmmseResult {
        beams,
        rate_history: history,
        converged,
    })
}
