use super::*;
use num_complex::Complex64;
use rand::Rng;

fn assert_close(a: f64, b: f64, tol: f64) {
    assert!((a - b).abs() <= tol, "expected {b}, got {a} (tol {tol})");
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Hand-built sample on the normalized scale (raw == h, unit noise).
fn sample_from_rows(rows: Vec<Vec<Complex64>>) -> ChannelSample {
    let num_users = rows.len();
    let num_antennas = rows[0].len();
    let h: Vec<Complex64> = rows.into_iter().flatten().collect();
    ChannelSample {
        num_users,
        num_antennas,
        raw_h: h.clone(),
        h,
        distances: vec![250.0; num_users],
    }
}

fn random_sample(k: usize, nt: usize, seed: u64) -> ChannelSample {
    let mut rng = crate::rng::stream_rng(seed, "bf-test", 0);
    let rows = (0..k)
        .map(|_| {
            (0..nt)
                .map(|_| c(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)))
                .collect()
        })
        .collect();
    sample_from_rows(rows)
}

fn unit_noise_params(k: usize, nt: usize, power: f64) -> SystemParams {
    let mut params = SystemParams::new(k, nt);
    params.power = power;
    params.noise_power = 1.0;
    params
}

// --- path loss and generation -------------------------------------------------

#[test]
fn path_loss_reference_points() {
    assert_close(path_loss_db(100.0), 90.5, 1e-9);
    assert_close(path_loss_db(1000.0), 128.1, 1e-12);
}

#[test]
fn dataset_generation_is_deterministic_and_in_range() {
    let params = SystemParams::new(3, 4);
    let a = generate_dataset(32, &params, 7);
    let b = generate_dataset(32, &params, 7);
    assert_eq!(a, b);
    for s in &a {
        for &d in &s.distances {
            assert!((100.0..=500.0).contains(&d), "distance {d}");
        }
        assert!(s.h.iter().all(|v| v.is_finite()));
    }
    let other = generate_dataset(32, &params, 8);
    assert_ne!(a, other);
}

#[test]
fn link_budget_matches_closed_form() {
    // normalize each generated entry by its own distance's path loss, then
    // price the result back at a 100 m reference
    let params = SystemParams::new(1, 1);
    let samples = generate_dataset(10_000, &params, 3);
    let mut fading_power = 0.0;
    for s in &samples {
        let gain = 10f64.powf(-path_loss_db(s.distances[0]) / 10.0);
        fading_power += s.raw_h[0].norm_sqr() / gain;
    }
    fading_power /= samples.len() as f64;

    let measured_snr_db = 10.0
        * (params.power * fading_power * 10f64.powf(-path_loss_db(100.0) / 10.0)
            / params.noise_power)
            .log10();
    let expected_snr_db = 10.0
        * (params.power * 10f64.powf(-path_loss_db(100.0) / 10.0) / params.noise_power).log10();
    assert_close(expected_snr_db, 40.4897, 1e-3);
    assert_close(measured_snr_db, expected_snr_db, 0.5);
}

// --- SINR and rate --------------------------------------------------------------

#[test]
fn zero_beams_give_zero_sinr_and_rate() {
    let sample = random_sample(3, 4, 1);
    let w = BeamMatrix::zeros(4, 3);
    assert!(sinr(&sample, &w).iter().all(|&g| g == 0.0));
    assert_eq!(sum_rate(&sample, &w), 0.0);
}

#[test]
fn single_user_matched_filter_sinr() {
    let sample = sample_from_rows(vec![vec![c(0.6, 0.8), c(-1.0, 0.5)]]);
    let power = 2.5f64;
    let h_norm_sqr: f64 = sample.row(0).iter().map(|v| v.norm_sqr()).sum();
    // matched beam: w = sqrt(P) h / |h|, with h = conj(row)
    let mut w = BeamMatrix::zeros(2, 1);
    let scale = c(power.sqrt() / h_norm_sqr.sqrt(), 0.0);
    for (dst, src) in w.column_mut(0).iter_mut().zip(sample.row(0)) {
        *dst = src.conj() * scale;
    }
    let g = sinr(&sample, &w);
    assert_close(g[0], power * h_norm_sqr, 1e-10);
}

#[test]
fn orthogonal_channels_have_no_cross_interference() {
    // rows orthogonal by construction
    let sample = sample_from_rows(vec![
        vec![c(1.0, 0.0), c(0.0, 0.0)],
        vec![c(0.0, 0.0), c(0.0, 2.0)],
    ]);
    let p = [0.75f64, 1.25];
    let mut w = BeamMatrix::zeros(2, 2);
    for k in 0..2 {
        let norm: f64 = sample.row(k).iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let scale = c(p[k].sqrt() / norm, 0.0);
        for (dst, src) in w.column_mut(k).iter_mut().zip(sample.row(k)) {
            *dst = src.conj() * scale;
        }
    }
    let g = sinr(&sample, &w);
    assert_close(g[0], p[0] * 1.0, 1e-12);
    assert_close(g[1], p[1] * 4.0, 1e-12);

    // two users each at SINR 1 read a sum rate of exactly 2
    let mut w_unit = BeamMatrix::zeros(2, 2);
    for k in 0..2 {
        let h_norm_sqr: f64 = sample.row(k).iter().map(|v| v.norm_sqr()).sum();
        let scale = c((1.0 / h_norm_sqr).sqrt() / h_norm_sqr.sqrt(), 0.0);
        for (dst, src) in w_unit.column_mut(k).iter_mut().zip(sample.row(k)) {
            *dst = src.conj() * scale;
        }
    }
    assert_close(sum_rate(&sample, &w_unit), 2.0, 1e-10);
}

#[test]
fn sinr_is_invariant_under_joint_noise_rescaling() {
    let sample = random_sample(3, 3, 2);
    let mut rng = crate::rng::stream_rng(3, "bf-scale", 0);
    let mut w = BeamMatrix::zeros(3, 3);
    for v in w.w.iter_mut() {
        *v = c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    }
    let base = sinr_with_noise(&sample.h, 3, 3, &w, 1.0);
    for alpha in [0.5f64, 4.0, 100.0] {
        let scaled: Vec<Complex64> = sample.h.iter().map(|v| v * alpha).collect();
        let got = sinr_with_noise(&scaled, 3, 3, &w, alpha * alpha);
        for (a, b) in got.iter().zip(&base) {
            assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0), "{a} vs {b}");
        }
    }
}

// --- power normalization ----------------------------------------------------------

#[test]
fn normalize_power_examples() {
    let pv = normalize_power(&[0.5, 0.5, 0.5, 0.5], 1.0).unwrap();
    assert_eq!(pv.p, vec![0.5, 0.5]);
    assert_eq!(pv.q, vec![0.5, 0.5]);

    let pv = normalize_power(&[0.2, 0.6, 0.1, 0.3], 2.0).unwrap();
    assert_close(pv.p[0], 0.5, 1e-15);
    assert_close(pv.p[1], 1.5, 1e-15);

    let mut rng = crate::rng::stream_rng(4, "bf-power", 0);
    for _ in 0..20 {
        let raw: Vec<f64> = (0..8).map(|_| rng.gen_range(1e-6..1.0f64)).collect();
        let pv = normalize_power(&raw, 3.0).unwrap();
        assert_close(pv.p.iter().sum::<f64>(), 3.0, 1e-12);
        assert_close(pv.q.iter().sum::<f64>(), 3.0, 1e-12);
    }

    // guarded fallback for an all-zero half
    let pv = normalize_power(&[0.0, 0.0, 0.4, 0.6], 1.0).unwrap();
    assert_eq!(pv.p, vec![0.5, 0.5]);
}

// --- beam recovery ------------------------------------------------------------------

#[test]
fn single_user_recovery_is_matched_filtering_for_any_q() {
    let sample = sample_from_rows(vec![vec![c(0.3, -1.1), c(2.0, 0.4), c(-0.7, 0.2)]]);
    let params = unit_noise_params(1, 3, 2.0);
    for q in [0.0, 0.5, 2.0] {
        let pv = PowerVectors {
            p: vec![2.0],
            q: vec![q],
        };
        let beams = recover_beamforming(&sample, &pv, &params).unwrap();
        assert_close(beams.total_power(), 2.0, 1e-9);
        // direction parallel to h = conj(row)
        let h: Vec<Complex64> = sample.row(0).iter().map(|v| v.conj()).collect();
        let dot: Complex64 = beams
            .column(0)
            .iter()
            .zip(&h)
            .map(|(w, hv)| w.conj() * hv)
            .sum();
        let cosine = dot.norm()
            / (beams.total_power().sqrt() * h.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt());
        assert!(cosine >= 1.0 - 1e-12, "cosine {cosine}");
    }
}

#[test]
fn zero_uplink_powers_reduce_to_matched_filters() {
    let sample = random_sample(3, 4, 5);
    let params = unit_noise_params(3, 4, 1.0);
    let pv = PowerVectors {
        p: vec![1.0 / 3.0; 3],
        q: vec![0.0; 3],
    };
    let beams = recover_beamforming(&sample, &pv, &params).unwrap();
    for k in 0..3 {
        let h: Vec<Complex64> = sample.row(k).iter().map(|v| v.conj()).collect();
        let hn = h.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let wn = beams.column(k).iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let dot: Complex64 = beams
            .column(k)
            .iter()
            .zip(&h)
            .map(|(w, hv)| w.conj() * hv)
            .sum();
        assert!(dot.norm() / (hn * wn) >= 1.0 - 1e-12);
    }
}

#[test]
fn recovered_beams_meet_the_power_budget() {
    for seed in 0..10 {
        let sample = random_sample(2, 3, 100 + seed);
        let params = unit_noise_params(2, 3, 1.0);
        let pv = normalize_power(&[0.3, 0.9, 0.6, 0.2], params.power).unwrap();
        let beams = recover_beamforming(&sample, &pv, &params).unwrap();
        assert_close(beams.total_power(), params.power, 1e-9);
    }
}

#[test]
fn recovery_rejects_bad_inputs() {
    let sample = sample_from_rows(vec![
        vec![c(1.0, 0.0), c(0.0, 0.0)],
        vec![c(0.0, 0.0), c(0.0, 0.0)], // zero row
    ]);
    let params = unit_noise_params(2, 2, 1.0);
    let pv = PowerVectors {
        p: vec![0.5, 0.5],
        q: vec![0.5, 0.5],
    };
    assert_eq!(
        recover_beamforming(&sample, &pv, &params).unwrap_err(),
        BeamformError::ZeroChannelRow(1)
    );

    let good = random_sample(2, 2, 6);
    let bad_pv = PowerVectors {
        p: vec![0.5, 0.9],
        q: vec![0.5, 0.5],
    };
    assert_eq!(
        recover_beamforming(&good, &bad_pv, &params).unwrap_err(),
        BeamformError::UnnormalizedPowers
    );
}

// --- WMMSE -------------------------------------------------------------------------

#[test]
fn wmmse_single_user_converges_to_matched_filter_rate() {
    for seed in 0..5 {
        let sample = random_sample(1, 3, 200 + seed);
        let params = unit_noise_params(1, 3, 1.5);
        let result = wmmse(&sample, &params, &WmmseOptions::default()).unwrap();
        let h_norm_sqr: f64 = sample.row(0).iter().map(|v| v.norm_sqr()).sum();
        let optimal = (1.0 + params.power * h_norm_sqr).log2();
        assert_close(result.rate(), optimal, 1e-6);
        assert!(result.converged);
    }
}

#[test]
fn wmmse_rate_history_is_monotone() {
    for seed in 0..20 {
        let k = 2 + (seed as usize % 3);
        let sample = random_sample(k, k, 300 + seed);
        let params = unit_noise_params(k, k, 1.0);
        let result = wmmse(&sample, &params, &WmmseOptions::default()).unwrap();
        for pair in result.rate_history.windows(2) {
            assert!(
                pair[1] >= pair[0] - 1e-9,
                "seed {seed}: history decreased {} -> {}",
                pair[0],
                pair[1]
            );
        }
    }
}

#[test]
fn wmmse_beats_random_beam_search() {
    let mut rng = crate::rng::stream_rng(9, "bf-search", 0);
    for seed in 0..3 {
        let sample = random_sample(2, 2, 400 + seed);
        let params = unit_noise_params(2, 2, 1.0);
        let result = wmmse(&sample, &params, &WmmseOptions::default()).unwrap();

        let mut best = 0.0f64;
        for _ in 0..10_000 {
            let mut w = BeamMatrix::zeros(2, 2);
            for v in w.w.iter_mut() {
                *v = c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            }
            let scale = (params.power / w.total_power()).sqrt();
            for v in w.w.iter_mut() {
                *v *= scale;
            }
            best = best.max(sum_rate(&sample, &w));
        }
        assert!(
            result.rate() >= 0.99 * best,
            "seed {seed}: wmmse {} vs search {best}",
            result.rate()
        );
    }
}

// --- imperfect CSI -------------------------------------------------------------------

#[test]
fn zero_error_variance_is_identity() {
    let params = SystemParams::new(2, 3);
    let sample = generate_sample(&params, 1, 0);
    let perturbed = add_channel_error(&sample, 0.0, &params, 5);
    assert_eq!(sample, perturbed);
}

#[test]
fn error_variance_matches_request() {
    let params = SystemParams::new(1, 1);
    let sigma_e2 = 0.1;
    let n = 100_000;
    let mut acc = 0.0;
    for i in 0..n {
        let sample = generate_sample(&params, 2, i);
        let perturbed = add_channel_error(&sample, sigma_e2, &params, 1000 + i);
        // recover the fading-level delta by undoing the path loss scale
        let amp = 10f64.powf(-path_loss_db(sample.distances[0]) / 20.0);
        let delta = (perturbed.raw_h[0] - sample.raw_h[0]) / amp;
        acc += delta.norm_sqr();
    }
    let empirical = acc / n as f64;
    assert!(
        (empirical - sigma_e2).abs() <= 0.05 * sigma_e2,
        "empirical variance {empirical} vs {sigma_e2}"
    );
}

#[test]
fn error_sweep_uses_common_random_numbers() {
    let params = SystemParams::new(2, 2);
    let sample = generate_sample(&params, 3, 0);
    let small = add_channel_error(&sample, 0.01, &params, 7);
    let large = add_channel_error(&sample, 0.04, &params, 7);
    for ((b, s), l) in sample.h.iter().zip(&small.h).zip(&large.h) {
        let ds = s - b;
        let dl = l - b;
        // doubling the std doubles the same underlying draw
        assert!((dl - ds * 2.0).norm() < 1e-12);
    }
}

// --- dataset io -----------------------------------------------------------------------

#[test]
fn dataset_roundtrip_preserves_stored_fields() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("train.bfq");
    let params = SystemParams::new(3, 2);
    let samples = generate_dataset(17, &params, 11);
    write_dataset(&path, &samples).unwrap();
    let back = read_dataset(&path, params.noise_power).unwrap();
    assert_eq!(back.len(), samples.len());
    for (a, b) in samples.iter().zip(&back) {
        assert_eq!(a.h, b.h);
        assert_eq!(a.distances, b.distances);
        assert_eq!(a.num_users, b.num_users);
        assert_eq!(a.num_antennas, b.num_antennas);
    }
}

#[test]
fn dataset_rejects_foreign_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("junk.bfq");
    std::fs::write(&path, b"not a dataset").unwrap();
    assert!(matches!(
        read_dataset(&path, 1.0).unwrap_err(),
        DatasetIoError::BadMagic
    ));
}

#[test]
fn csv_mirror_reproduces_values_to_full_precision() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mirror.csv");
    let params = SystemParams::new(2, 2);
    let samples = generate_dataset(3, &params, 13);
    write_dataset_csv(&path, &samples).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    lines.next().unwrap(); // header
    for (si, sample) in samples.iter().enumerate() {
        for k in 0..sample.num_users {
            let line = lines.next().unwrap();
            let fields: Vec<&str> = line.split(',').collect();
            assert_eq!(fields[0], si.to_string());
            assert_eq!(fields[1], k.to_string());
            let d: f64 = fields[2].parse().unwrap();
            assert_eq!(d, sample.distances[k]);
            for (a, v) in sample.row(k).iter().enumerate() {
                let re: f64 = fields[3 + 2 * a].parse().unwrap();
                let im: f64 = fields[4 + 2 * a].parse().unwrap();
                assert_eq!(re, v.re, "17 significant digits round-trip");
                assert_eq!(im, v.im);
            }
        }
    }
}

#[test]
fn checksums_detect_content_changes() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.bfq");
    let b = dir.path().join("b.bfq");
    let params = SystemParams::new(2, 2);
    write_dataset(&a, &generate_dataset(4, &params, 1)).unwrap();
    write_dataset(&b, &generate_dataset(4, &params, 1)).unwrap();
    assert_eq!(dataset_checksum(&a).unwrap(), dataset_checksum(&b).unwrap());
    write_dataset(&b, &generate_dataset(4, &params, 2)).unwrap();
    assert_ne!(dataset_checksum(&a).unwrap(), dataset_checksum(&b).unwrap());
}
