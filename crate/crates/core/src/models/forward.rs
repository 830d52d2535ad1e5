//! Batched forward and backward passes through the four architectures.
//!
//! The complex channel is split into a real image per sample: channel k of
//! the input holds [Re(h_k); Im(h_k)] along the height axis. Quantum
//! sublayers evaluate per sample (data-parallel) with a fixed-order
//! reduction of angle gradients.

use super::{Model, ModelError, ModelKind};
use crate::beamforming::ChannelSample;
use crate::exec;
use crate::nn::{
    relu, relu_backward, sigmoid, sigmoid_backward, tanh_act, tanh_backward, BnCache, BnMode,
    Tensor,
};
use crate::qlayers::{
    pqc_forward_from_input, pqc_input_grad_fd, pqc_param_shift_grad, quanvolution_forward,
    quanvolution_grad, EmbeddingKind, PqcParams, QuantumLayerConfig,
};
use crate::qsim::NoiseKind;
use crate::rng::derive_seed;

/// Test-time options for the quantum sublayers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantumRunMode {
    /// 0 = exact expectations.
    pub shots: usize,
    pub noise: Option<(NoiseKind, f64)>,
    pub shot_seed: u64,
}

impl QuantumRunMode {
    pub fn exact() -> Self {
        QuantumRunMode {
            shots: 0,
            noise: None,
            shot_seed: 0,
        }
    }

    pub fn is_exact(&self) -> bool {
        self.shots == 0 && self.noise.is_none()
    }
}

/// Everything the backward pass needs, plus the exposed outputs.
pub struct ForwardOutput {
    /// `[N, 2K]` sigmoid outputs (raw power scores).
    pub raw: Tensor,
    /// Post-measurement values of the quantum sublayer, when one exists:
    /// `[N, Q]` for the QNN variants, the flattened quanvolution output for
    /// the QCNN.
    pub measurements: Option<Tensor>,
    trace: Trace,
}

struct Trace {
    /// Conv input `[N, C, H, W]`.
    x: Tensor,
    /// Per-sample quanvolution inputs (QCNN only).
    quanv_in: Option<Vec<Tensor>>,
    conv_out: Tensor,
    bn_cache: BnCache,
    /// `[N, flat]` after the conv stack.
    flat: Tensor,
    /// Pre-tanh FC1 output (QNN variants).
    angles: Option<Tensor>,
    /// Input to the output dense layer.
    fc_out_in: Tensor,
}

/// Channel sample -> real input image `[K, 2N_t]` (row k = user k).
fn sample_image(sample: &ChannelSample) -> Tensor {
    let (k, nt) = (sample.num_users, sample.num_antennas);
    let mut data = Vec::with_capacity(k * 2 * nt);
    for user in 0..k {
        let row = sample.row(user);
        // stored rows are conjugate-transposed channels; undo the conjugation
        data.extend(row.iter().map(|v| v.re));
        data.extend(row.iter().map(|v| -v.im));
    }
    Tensor::from_vec(&[k, 2 * nt], data).unwrap()
}

/// Stack samples into the conv input `[N, K, 2N_t, 1]`.
pub(crate) fn assemble_input(samples: &[ChannelSample]) -> Tensor {
    let n = samples.len();
    let (k, nt) = (samples[0].num_users, samples[0].num_antennas);
    let mut data = Vec::with_capacity(n * k * 2 * nt);
    for s in samples {
        data.extend_from_slice(&sample_image(s).data);
    }
    Tensor::from_vec(&[n, k, 2 * nt, 1], data).unwrap()
}

fn check_samples(model: &Model, samples: &[ChannelSample]) -> Result<(), ModelError> {
    if samples.is_empty() {
        return Err(ModelError::SampleMismatch {
            expected: "a non-empty batch".into(),
            got: "0 samples".into(),
        });
    }
    let cfg = &model.cfg;
    for s in samples {
        if s.num_users != cfg.num_users || s.num_antennas != cfg.num_antennas {
            return Err(ModelError::SampleMismatch {
                expected: format!("K={} N_t={}", cfg.num_users, cfg.num_antennas),
                got: format!("K={} N_t={}", s.num_users, s.num_antennas),
            });
        }
    }
    Ok(())
}

fn quantum_cfg(
    embedding: EmbeddingKind,
    num_qubits: usize,
    num_layers: usize,
    qmode: &QuantumRunMode,
    sample_index: usize,
) -> QuantumLayerConfig {
    QuantumLayerConfig {
        num_qubits,
        num_layers,
        embedding,
        shots: qmode.shots,
        noise: qmode.noise,
        shot_seed: derive_seed(qmode.shot_seed, "sample", sample_index as u64),
    }
}

fn pqc_params(thetas: &[f64], num_layers: usize, num_qubits: usize) -> PqcParams {
    PqcParams::new(num_layers, num_qubits, thetas.to_vec()).expect("theta buffer shape")
}

/// Run the model on a batch. `bn_mode` picks batch or running statistics
/// (a transfer model's frozen front-end always uses running statistics);
/// `qmode` configures the quantum sublayers.
pub fn forward(
    model: &mut Model,
    samples: &[ChannelSample],
    bn_mode: BnMode,
    qmode: &QuantumRunMode,
) -> Result<ForwardOutput, ModelError> {
    check_samples(model, samples)?;
    let n = samples.len();
    let cfg = model.cfg.clone();
    let effective_bn = if cfg.kind == ModelKind::HybridQnnTransfer {
        BnMode::Eval
    } else {
        bn_mode
    };

    // quanvolution front-end (QCNN)
    let (x, quanv_in, quanv_meas) = if let Some(quanv) = &model.quanv {
        let params = pqc_params(&quanv.thetas.value.data, quanv.num_layers, 2);
        let images: Vec<Tensor> = samples.iter().map(sample_image).collect();
        let outputs: Vec<Result<Tensor, ModelError>> = exec::map_indices(n, |i| {
            let qcfg = quantum_cfg(EmbeddingKind::Amplitude, 2, quanv.num_layers, qmode, i);
            Ok(quanvolution_forward(&images[i], &params, &qcfg)?)
        });
        let (c, h, w) = cfg.conv_input_chw();
        let mut data = Vec::with_capacity(n * c * h * w);
        for out in outputs {
            data.extend_from_slice(&out?.data);
        }
        let meas = Tensor::from_vec(&[n, c * h * w], data.clone()).unwrap();
        (
            Tensor::from_vec(&[n, c, h, w], data).unwrap(),
            Some(images),
            Some(meas),
        )
    } else {
        (assemble_input(samples), None, None)
    };

    // conv stack
    let conv_out = model.conv.forward(&x)?;
    let activated = relu(&conv_out);
    let (bn_out, bn_cache) = model.bn.forward(&activated, effective_bn)?;
    let flat = bn_out.reshaped(&[n, cfg.conv_flat_len()])?;

    // dense / quantum head
    let (fc_out_in, angles, qnn_meas) = match cfg.kind {
        ModelKind::HybridQnn | ModelKind::HybridQnnTransfer => {
            let fc1 = model.fc1.as_ref().expect("qnn has fc1");
            let pqc = model.pqc.as_ref().expect("qnn has a quantum layer");
            let pre = fc1.forward(&flat)?;
            let angles = tanh_act(&pre);
            let params = pqc_params(&pqc.thetas.value.data, pqc.num_layers, pqc.num_qubits);
            let width = cfg.quantum_input_len();
            let rows: Vec<Result<Vec<f64>, ModelError>> = exec::map_indices(n, |i| {
                let qcfg =
                    quantum_cfg(pqc.embedding, pqc.num_qubits, pqc.num_layers, qmode, i);
                let c = &angles.data[i * width..(i + 1) * width];
                Ok(pqc_forward_from_input(c, &params, &qcfg)?)
            });
            let mut meas = Vec::with_capacity(n * pqc.num_qubits);
            for row in rows {
                meas.extend_from_slice(&row?);
            }
            let meas = Tensor::from_vec(&[n, pqc.num_qubits], meas).unwrap();
            (meas.clone(), Some(angles), Some(meas))
        }
        _ => (flat.clone(), None, None),
    };

    let pre_out = model.fc_out.forward(&fc_out_in)?;
    let raw = sigmoid(&pre_out);

    let measurements = qnn_meas.or(quanv_meas);
    Ok(ForwardOutput {
        raw: raw.clone(),
        measurements,
        trace: Trace {
            x,
            quanv_in,
            conv_out,
            bn_cache,
            flat,
            angles,
            fc_out_in,
        },
    })
}

/// Backpropagate `grad_raw` (d loss / d sigmoid outputs, `[N, 2K]`) through
/// the model, accumulating parameter gradients. Quantum angles use the
/// parameter-shift rule; amplitude-embedded inputs fall back to central
/// finite differences.
pub fn backward(
    model: &mut Model,
    output: &ForwardOutput,
    grad_raw: &Tensor,
) -> Result<(), ModelError> {
    let cfg = model.cfg.clone();
    let trace = &output.trace;
    let n = output.raw.shape[0];

    let g = sigmoid_backward(&output.raw, grad_raw);
    let g = model.fc_out.backward(&trace.fc_out_in, &g)?;

    // through the quantum head (QNN variants)
    let g_flat = match cfg.kind {
        ModelKind::HybridQnn | ModelKind::HybridQnnTransfer => {
            let pqc = model.pqc.as_mut().expect("qnn has a quantum layer");
            let angles = trace.angles.as_ref().expect("qnn trace has angles");
            let params = pqc_params(&pqc.thetas.value.data, pqc.num_layers, pqc.num_qubits);
            let width = cfg.quantum_input_len();
            let q = pqc.num_qubits;
            let embedding = pqc.embedding;
            let layers = pqc.num_layers;

            type Grads = (Vec<f64>, Vec<f64>);
            let per_sample: Vec<Result<Grads, ModelError>> = exec::map_indices(n, |i| {
                let qcfg = QuantumLayerConfig::exact(q, layers, embedding);
                let c = &angles.data[i * width..(i + 1) * width];
                let upstream = &g.data[i * q..(i + 1) * q];
                if embedding == EmbeddingKind::Amplitude {
                    let gt = crate::qlayers::param_shift_thetas(c, &params, &qcfg, upstream)?;
                    let gc = pqc_input_grad_fd(c, &params, &qcfg, upstream, 1e-5)?;
                    Ok((gt, gc))
                } else {
                    Ok(pqc_param_shift_grad(c, &params, &qcfg, upstream)?)
                }
            });

            let mut g_angles = Tensor::zeros(&[n, width]);
            for (i, res) in per_sample.into_iter().enumerate() {
                let (gt, gc) = res?;
                for (acc, v) in pqc.thetas.grad.iter_mut().zip(gt) {
                    *acc += v;
                }
                g_angles.data[i * width..(i + 1) * width].copy_from_slice(&gc);
            }
            let g_pre = tanh_backward(angles, &g_angles);
            let fc1 = model.fc1.as_mut().expect("qnn has fc1");
            fc1.backward(&trace.flat, &g_pre)?
        }
        _ => g,
    };

    // back through the conv stack
    let g_bn = g_flat.reshaped(&trace.conv_out.shape)?;
    let g_act = model.bn.backward(&trace.bn_cache, &g_bn)?;
    let g_conv = relu_backward(&trace.conv_out, &g_act);
    let g_x = model.conv.backward(&trace.x, &g_conv)?;

    // back into the quanvolution filter (QCNN)
    if let Some(quanv) = &mut model.quanv {
        let images = trace.quanv_in.as_ref().expect("qcnn trace has images");
        let params = pqc_params(&quanv.thetas.value.data, quanv.num_layers, 2);
        let (c, h, w) = cfg.conv_input_chw();
        let layers = quanv.num_layers;
        let per_sample: Vec<Result<Vec<f64>, ModelError>> = exec::map_indices(n, |i| {
            let qcfg = QuantumLayerConfig::exact(2, layers, EmbeddingKind::Amplitude);
            let upstream = Tensor::from_vec(
                &[c, h, w],
                g_x.data[i * c * h * w..(i + 1) * c * h * w].to_vec(),
            )
            .unwrap();
            let (gt, _) = quanvolution_grad(&images[i], &params, &qcfg, &upstream)?;
            Ok(gt)
        });
        for res in per_sample {
            for (acc, v) in quanv.thetas.grad.iter_mut().zip(res?) {
                *acc += v;
            }
        }
    }
    Ok(())
}
