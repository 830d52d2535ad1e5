use super::*;
use rand::Rng;

fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    crate::rng::stream_rng(seed, "nn-tests", 0)
}

fn random_tensor(shape: &[usize], rng: &mut rand_chacha::ChaCha8Rng) -> Tensor {
    let len = shape.iter().product();
    Tensor::from_vec(shape, (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Scalar probe: weighted sum of tensor entries with fixed weights.
fn probe(t: &Tensor, weights: &[f64]) -> f64 {
    t.data.iter().zip(weights).map(|(a, b)| a * b).sum()
}

// --- conv2d -----------------------------------------------------------------

#[test]
fn conv_identity_kernel_passes_input_through() {
    let mut r = rng(1);
    let mut conv = Conv2d::new(1, 1, 3, 1, &mut r);
    conv.weight.value.data.iter_mut().for_each(|w| *w = 0.0);
    conv.weight.value.data[4] = 1.0; // center tap
    conv.bias.value.data[0] = 0.0;
    let x = random_tensor(&[2, 1, 5, 4], &mut r);
    let y = conv.forward(&x).unwrap();
    assert_eq!(y.shape, x.shape);
    for (a, b) in x.data.iter().zip(&y.data) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn conv_zero_kernels_emit_bias() {
    let mut r = rng(2);
    let mut conv = Conv2d::new(3, 2, 3, 1, &mut r);
    conv.weight.value.data.iter_mut().for_each(|w| *w = 0.0);
    conv.bias.value.data = vec![0.25, -1.5];
    let x = random_tensor(&[1, 3, 4, 1], &mut r);
    let y = conv.forward(&x).unwrap();
    assert_eq!(y.shape, vec![1, 2, 4, 1]);
    for f in 0..2 {
        for k in 0..4 {
            assert_eq!(y.data[f * 4 + k], conv.bias.value.data[f]);
        }
    }
}

#[test]
fn conv_output_shape_formula() {
    // with padding 1 and stride 1: H -> H - m + 3, W -> W - m + 3
    let mut r = rng(3);
    for m in 1..=3usize {
        let conv = Conv2d::new(2, 4, m, 1, &mut r);
        let (h, w) = (6, 1);
        let x = random_tensor(&[1, 2, h, w], &mut r);
        let y = conv.forward(&x).unwrap();
        assert_eq!(y.shape, vec![1, 4, h + 3 - m, w + 3 - m]);
    }
}

#[test]
fn conv_gradients_match_finite_differences() {
    let mut r = rng(4);
    let mut conv = Conv2d::new(2, 3, 3, 1, &mut r);
    let x = random_tensor(&[2, 2, 6, 1], &mut r);
    let y = conv.forward(&x).unwrap();
    let upstream: Vec<f64> = (0..y.len()).map(|_| r.gen_range(-1.0..1.0)).collect();

    conv.weight.zero_grad();
    conv.bias.zero_grad();
    let gx = conv
        .backward(&x, &Tensor::from_vec(&y.shape, upstream.clone()).unwrap())
        .unwrap();

    // weights
    let analytic = conv.weight.grad.clone();
    let mut probe_conv = conv.clone();
    let mut params = conv.weight.value.data.clone();
    let err = grad_check(
        &mut params,
        &analytic,
        |p| {
            probe_conv.weight.value.data.copy_from_slice(p);
            probe(&probe_conv.forward(&x).unwrap(), &upstream)
        },
        1e-5,
    );
    assert!(err < 1e-6, "conv weight grad err {err}");

    // bias
    let analytic = conv.bias.grad.clone();
    let mut probe_conv = conv.clone();
    let mut params = conv.bias.value.data.clone();
    let err = grad_check(
        &mut params,
        &analytic,
        |p| {
            probe_conv.bias.value.data.copy_from_slice(p);
            probe(&probe_conv.forward(&x).unwrap(), &upstream)
        },
        1e-5,
    );
    assert!(err < 1e-6, "conv bias grad err {err}");

    // input
    let mut params = x.data.clone();
    let shape = x.shape.clone();
    let err = grad_check(
        &mut params,
        &gx.data,
        |p| {
            let xin = Tensor::from_vec(&shape, p.to_vec()).unwrap();
            probe(&conv.forward(&xin).unwrap(), &upstream)
        },
        1e-5,
    );
    assert!(err < 1e-6, "conv input grad err {err}");
}

// --- activations --------------------------------------------------------------

#[test]
fn activation_values() {
    let x = Tensor::from_vec(&[3], vec![-1.0, 0.0, 2.0]).unwrap();
    assert_eq!(relu(&x).data, vec![0.0, 0.0, 2.0]);

    let zero = Tensor::from_vec(&[1], vec![0.0]).unwrap();
    assert_eq!(sigmoid(&zero).data, vec![0.5]);

    // tanh'(0) = 1
    let y = tanh_act(&zero);
    let g = tanh_backward(&y, &Tensor::from_vec(&[1], vec![1.0]).unwrap());
    assert!((g.data[0] - 1.0).abs() < 1e-15);
}

// --- batchnorm ----------------------------------------------------------------

#[test]
fn batchnorm_train_mode_normalizes_per_channel() {
    let mut r = rng(5);
    let mut bn = BatchNorm2d::new(2);
    let x = random_tensor(&[4, 2, 3, 2], &mut r);
    let (y, _) = bn.forward(&x, BnMode::Train).unwrap();
    // gamma=1, beta=0 at init, so the output is the normalized activation
    let plane = 6;
    for c in 0..2 {
        let mut vals = Vec::new();
        for n in 0..4 {
            let base = (n * 2 + c) * plane;
            vals.extend_from_slice(&y.data[base..base + plane]);
        }
        let mean: f64 = vals.iter().sum::<f64>() / vals.len() as f64;
        let var: f64 = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64;
        assert!(mean.abs() < 1e-6, "channel {c} mean {mean}");
        assert!((var - 1.0).abs() < 1e-4, "channel {c} var {var}");
    }
}

#[test]
fn batchnorm_eval_mode_is_affine_only() {
    let mut r = rng(6);
    let mut bn = BatchNorm2d::new(1);
    bn.gamma.value.data[0] = 2.0;
    bn.beta.value.data[0] = 0.5;
    // running stats at the defaults (0, 1)
    let x = random_tensor(&[1, 1, 4, 1], &mut r);
    let (y, _) = bn.forward(&x, BnMode::Eval).unwrap();
    for (xi, yi) in x.data.iter().zip(&y.data) {
        let expect = 2.0 * xi / (1.0 + bn.epsilon).sqrt() + 0.5;
        assert!((yi - expect).abs() < 1e-12);
    }
}

#[test]
fn batchnorm_rejects_batch_of_one_in_train_mode() {
    let mut r = rng(7);
    let mut bn = BatchNorm2d::new(1);
    let x = random_tensor(&[1, 1, 2, 2], &mut r);
    assert_eq!(
        bn.forward(&x, BnMode::Train).unwrap_err(),
        NnError::BatchTooSmall
    );
}

#[test]
fn batchnorm_gradients_match_finite_differences() {
    let mut r = rng(8);
    let x = random_tensor(&[3, 2, 2, 2], &mut r);
    let upstream: Vec<f64> = (0..x.len()).map(|_| r.gen_range(-1.0..1.0)).collect();
    let mut bn = BatchNorm2d::new(2);
    bn.gamma.value.data = vec![1.3, 0.7];
    bn.beta.value.data = vec![-0.2, 0.4];

    let bn_probe = bn.clone();
    let run = |xdata: &[f64], gamma: &[f64], beta: &[f64]| -> f64 {
        let mut b = bn_probe.clone();
        b.gamma.value.data.copy_from_slice(gamma);
        b.beta.value.data.copy_from_slice(beta);
        let xin = Tensor::from_vec(&x.shape, xdata.to_vec()).unwrap();
        let (y, _) = b.forward(&xin, BnMode::Train).unwrap();
        probe(&y, &upstream)
    };

    let (_, cache) = bn.forward(&x, BnMode::Train).unwrap();
    let mut bn_back = bn.clone();
    bn_back.gamma.zero_grad();
    bn_back.beta.zero_grad();
    let gx = bn_back
        .backward(&cache, &Tensor::from_vec(&x.shape, upstream.clone()).unwrap())
        .unwrap();

    let gamma0 = bn.gamma.value.data.clone();
    let beta0 = bn.beta.value.data.clone();

    let mut params = x.data.clone();
    let err = grad_check(&mut params, &gx.data, |p| run(p, &gamma0, &beta0), 1e-5);
    assert!(err < 1e-5, "bn input grad err {err}");

    let mut params = gamma0.clone();
    let err = grad_check(
        &mut params,
        &bn_back.gamma.grad,
        |p| run(&x.data, p, &beta0),
        1e-5,
    );
    assert!(err < 1e-5, "bn gamma grad err {err}");

    let mut params = beta0.clone();
    let err = grad_check(
        &mut params,
        &bn_back.beta.grad,
        |p| run(&x.data, &gamma0, p),
        1e-5,
    );
    assert!(err < 1e-5, "bn beta grad err {err}");
}

// --- linear -------------------------------------------------------------------

#[test]
fn linear_identity_and_bias_behaviour() {
    let mut r = rng(9);
    let mut lin = Linear::new(3, 3, &mut r);
    lin.weight.value.data = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
    lin.bias.value.data = vec![0.0; 3];
    let x = random_tensor(&[2, 3], &mut r);
    let y = lin.forward(&x).unwrap();
    assert_eq!(x.data, y.data);

    lin.bias.value.data = vec![0.5, -1.0, 2.0];
    let zero = Tensor::zeros(&[1, 3]);
    let y = lin.forward(&zero).unwrap();
    assert_eq!(y.data, lin.bias.value.data);
}

#[test]
fn linear_gradients_match_finite_differences() {
    let mut r = rng(10);
    let mut lin = Linear::new(4, 3, &mut r);
    let x = random_tensor(&[2, 4], &mut r);
    let y = lin.forward(&x).unwrap();
    let upstream: Vec<f64> = (0..y.len()).map(|_| r.gen_range(-1.0..1.0)).collect();

    lin.weight.zero_grad();
    lin.bias.zero_grad();
    let gx = lin
        .backward(&x, &Tensor::from_vec(&y.shape, upstream.clone()).unwrap())
        .unwrap();

    let lin_probe = lin.clone();
    let mut params = lin.weight.value.data.clone();
    let err = grad_check(
        &mut params,
        &lin.weight.grad,
        |p| {
            let mut l = lin_probe.clone();
            l.weight.value.data.copy_from_slice(p);
            probe(&l.forward(&x).unwrap(), &upstream)
        },
        1e-5,
    );
    assert!(err < 1e-6, "linear weight grad err {err}");

    let mut params = x.data.clone();
    let err = grad_check(
        &mut params,
        &gx.data,
        |p| {
            let xin = Tensor::from_vec(&[2, 4], p.to_vec()).unwrap();
            probe(&lin.forward(&xin).unwrap(), &upstream)
        },
        1e-5,
    );
    assert!(err < 1e-6, "linear input grad err {err}");
}

// --- adam ---------------------------------------------------------------------

#[test]
fn adam_zero_gradient_leaves_parameters_unchanged() {
    let mut p = Param::new(Tensor::from_vec(&[2], vec![1.0, -2.0]).unwrap());
    let mut state = AdamState::new(2, AdamHyper::default());
    adam_step(&mut p, &mut state);
    assert_eq!(p.value.data, vec![1.0, -2.0]);
}

#[test]
fn adam_first_step_is_signed_learning_rate() {
    // bias correction makes m_hat = g and v_hat = g^2 on step one
    let mut p = Param::new(Tensor::from_vec(&[2], vec![0.0, 0.0]).unwrap());
    p.grad = vec![0.3, -7.0];
    let hyper = AdamHyper::default();
    let mut state = AdamState::new(2, hyper);
    adam_step(&mut p, &mut state);
    for (v, g) in p.value.data.iter().zip([0.3f64, -7.0]) {
        let expect = -hyper.lr * g.signum();
        assert!((v - expect).abs() < 1e-6, "got {v}, expected ~{expect}");
    }
}

#[test]
fn adam_two_constant_steps_follow_closed_form() {
    let g = 0.5;
    let hyper = AdamHyper::default();
    let mut p = Param::new(Tensor::from_vec(&[1], vec![0.0]).unwrap());
    p.grad = vec![g];
    let mut state = AdamState::new(1, hyper);
    adam_step(&mut p, &mut state);
    adam_step(&mut p, &mut state);
    assert_eq!(state.step_count, 2);

    // hand recursion
    let m1 = (1.0 - hyper.beta1) * g;
    let v1 = (1.0 - hyper.beta2) * g * g;
    let m2 = hyper.beta1 * m1 + (1.0 - hyper.beta1) * g;
    let v2 = hyper.beta2 * v1 + (1.0 - hyper.beta2) * g * g;
    assert!((state.first_moment[0] - m2).abs() < 1e-15);
    assert!((state.second_moment[0] - v2).abs() < 1e-15);

    let step1 = hyper.lr * (m1 / (1.0 - hyper.beta1)) / ((v1 / (1.0 - hyper.beta2)).sqrt() + hyper.epsilon);
    let step2 = hyper.lr * (m2 / (1.0 - hyper.beta1.powi(2)))
        / ((v2 / (1.0 - hyper.beta2.powi(2))).sqrt() + hyper.epsilon);
    assert!((p.value.data[0] + step1 + step2).abs() < 1e-12);
}

#[test]
fn adam_first_step_direction_is_scale_invariant() {
    // keep |g| well above epsilon so the sign(g) limit is exact to 1e-10
    for scale in [10.0, 1e3] {
        let grads = [400.0, -1200.0, 150.0];
        let mut a = Param::new(Tensor::zeros(&[3]));
        a.grad = grads.to_vec();
        let mut b = Param::new(Tensor::zeros(&[3]));
        b.grad = grads.iter().map(|g| g * scale).collect();
        let mut sa = AdamState::new(3, AdamHyper::default());
        let mut sb = AdamState::new(3, AdamHyper::default());
        adam_step(&mut a, &mut sa);
        adam_step(&mut b, &mut sb);
        for (x, y) in a.value.data.iter().zip(&b.value.data) {
            assert!((x - y).abs() < 1e-10, "scale {scale}: {x} vs {y}");
        }
    }
}

#[test]
fn adam_skips_frozen_parameters() {
    let mut p = Param::new(Tensor::from_vec(&[1], vec![3.0]).unwrap());
    p.grad = vec![1.0];
    p.frozen = true;
    let mut state = AdamState::new(1, AdamHyper::default());
    adam_step(&mut p, &mut state);
    assert_eq!(p.value.data, vec![3.0]);
    assert_eq!(state.step_count, 0);
}

// --- grad_check utility ---------------------------------------------------------

#[test]
fn grad_check_is_exact_for_linear_maps() {
    let coeff = [2.0, -0.5, 1.25];
    let mut params = vec![0.3, 0.7, -0.2];
    let analytic = coeff.to_vec();
    let err = grad_check(
        &mut params,
        &analytic,
        |p| p.iter().zip(coeff).map(|(x, c)| c * x).sum(),
        1e-5,
    );
    assert!(err < 1e-8, "linear grad_check err {err}");
}

#[test]
fn conv_relu_stack_passes_grad_check() {
    let mut r = rng(11);
    let conv = Conv2d::new(1, 2, 3, 1, &mut r);
    let x = random_tensor(&[2, 1, 5, 1], &mut r);
    let y0 = conv.forward(&x).unwrap();
    let upstream: Vec<f64> = (0..y0.len()).map(|_| r.gen_range(-1.0..1.0)).collect();

    // analytic: relu backward then conv backward
    let mut conv_b = conv.clone();
    conv_b.weight.zero_grad();
    conv_b.bias.zero_grad();
    let g = relu_backward(&y0, &Tensor::from_vec(&y0.shape, upstream.clone()).unwrap());
    conv_b.backward(&x, &g).unwrap();

    let mut params = conv.weight.value.data.clone();
    let err = grad_check(
        &mut params,
        &conv_b.weight.grad,
        |p| {
            let mut c = conv.clone();
            c.weight.value.data.copy_from_slice(p);
            probe(&relu(&c.forward(&x).unwrap()), &upstream)
        },
        1e-5,
    );
    assert!(err < 1e-5, "conv+relu grad_check err {err}");
}

// --- layer property sweep ---------------------------------------------------------

#[test]
fn every_layer_backward_matches_finite_differences_over_seeds() {
    for seed in 0..50u64 {
        let mut r = rng(100 + seed);
        let n = r.gen_range(2..4usize);
        let c = r.gen_range(1..3usize);
        let h = r.gen_range(2..5usize);
        let m = r.gen_range(1..4usize);

        // conv input gradient
        let conv = Conv2d::new(c, 2, m, 1, &mut r);
        let x = random_tensor(&[n, c, h, 1], &mut r);
        let y = conv.forward(&x).unwrap();
        let upstream: Vec<f64> = (0..y.len()).map(|_| r.gen_range(-1.0..1.0)).collect();
        let mut conv_b = conv.clone();
        let gx = conv_b
            .backward(&x, &Tensor::from_vec(&y.shape, upstream.clone()).unwrap())
            .unwrap();
        let mut params = x.data.clone();
        let shape = x.shape.clone();
        let err = grad_check(
            &mut params,
            &gx.data,
            |p| {
                let xin = Tensor::from_vec(&shape, p.to_vec()).unwrap();
                probe(&conv.forward(&xin).unwrap(), &upstream)
            },
            1e-5,
        );
        assert!(err < 1e-5, "seed {seed}: conv err {err}");

        // tanh/sigmoid input gradients
        let x = random_tensor(&[n, 4], &mut r);
        let upstream: Vec<f64> = (0..x.len()).map(|_| r.gen_range(-1.0..1.0)).collect();
        let y = tanh_act(&x);
        let g = tanh_backward(&y, &Tensor::from_vec(&x.shape, upstream.clone()).unwrap());
        let mut params = x.data.clone();
        let shape = x.shape.clone();
        let err = grad_check(
            &mut params,
            &g.data,
            |p| probe(&tanh_act(&Tensor::from_vec(&shape, p.to_vec()).unwrap()), &upstream),
            1e-5,
        );
        assert!(err < 1e-5, "seed {seed}: tanh err {err}");

        let y = sigmoid(&x);
        let g = sigmoid_backward(&y, &Tensor::from_vec(&x.shape, upstream.clone()).unwrap());
        let mut params = x.data.clone();
        let err = grad_check(
            &mut params,
            &g.data,
            |p| probe(&sigmoid(&Tensor::from_vec(&shape, p.to_vec()).unwrap()), &upstream),
            1e-5,
        );
        assert!(err < 1e-5, "seed {seed}: sigmoid err {err}");
    }
}
