//! Quantum neural-network building blocks.
//!
//! Data embeddings (angle, angle-with-Hadamard, amplitude), the layered
//! parameterized circuit (a CNOT chain followed by per-qubit Ry rotations,
//! repeated L times), the 2x2 quanvolution filter, and exact
//! parameter-shift gradients.
//!
//! Forward evaluation runs on the statevector when noiseless and switches
//! to the density-matrix path when a noise channel is configured; in that
//! case the channel acts on every qubit right after the embedding and
//! again after each circuit layer. Gradients require exact, noiseless
//! evaluation: shots and noise are test-time options.

mod quanv;

pub use quanv::{quanvolution_forward, quanvolution_grad};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;
use thiserror::Error;

use crate::qsim::{
    apply_channel, expectation_z, make_noise_channel, sample_expectation_z, to_density,
    DensityMatrix, GateOp, NoiseKind, QsimError, StateVector,
};

#[derive(Debug, Error, PartialEq)]
pub enum QlayerError {
    #[error(transparent)]
    Sim(#[from] QsimError),
    #[error("input length {got} does not match {expected} required by {context}")]
    LengthMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("parameter shape ({l}, {q}) does not match layer config ({cfg_l}, {cfg_q})")]
    ParamShapeMismatch {
        l: usize,
        q: usize,
        cfg_l: usize,
        cfg_q: usize,
    },
    #[error("input-angle gradients are not defined under amplitude embedding")]
    AmplitudeInputGradUnsupported,
    #[error("gradients require exact expectations (shots = 0) and no noise")]
    GradRequiresExactMode,
    #[error("quanvolution input {rows}x{cols} is not divisible into 2x2 blocks")]
    NonDivisibleInput { rows: usize, cols: usize },
    #[error("non-finite parameter value")]
    NonFiniteParam,
}

/// How classical values become a quantum state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingKind {
    /// ⊗ Ry(c_i)|0⟩; needs Q values for Q qubits.
    Angle,
    /// ⊗ Ry(c_i) H |0⟩; needs Q values for Q qubits.
    AngleWithHadamard,
    /// L2-normalized values become amplitudes; needs 2^Q values.
    Amplitude,
}

impl std::fmt::Display for EmbeddingKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EmbeddingKind::Angle => write!(f, "angle"),
            EmbeddingKind::AngleWithHadamard => write!(f, "angle_with_hadamard"),
            EmbeddingKind::Amplitude => write!(f, "amplitude"),
        }
    }
}

impl std::str::FromStr for EmbeddingKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "angle" => Ok(EmbeddingKind::Angle),
            "angle_with_hadamard" | "angle_hadamard" => Ok(EmbeddingKind::AngleWithHadamard),
            "amplitude" => Ok(EmbeddingKind::Amplitude),
            other => Err(format!("unknown embedding '{other}'")),
        }
    }
}

/// Trainable rotation angles of the circuit, one per (layer, qubit).
#[derive(Debug, Clone, PartialEq)]
pub struct PqcParams {
    num_layers: usize,
    num_qubits: usize,
    thetas: Vec<f64>,
}

impl PqcParams {
    pub fn new(num_layers: usize, num_qubits: usize, thetas: Vec<f64>) -> Result<Self, QlayerError> {
        if thetas.len() != num_layers * num_qubits {
            return Err(QlayerError::LengthMismatch {
                context: "PqcParams",
                expected: num_layers * num_qubits,
                got: thetas.len(),
            });
        }
        if thetas.iter().any(|t| !t.is_finite()) {
            return Err(QlayerError::NonFiniteParam);
        }
        Ok(PqcParams {
            num_layers,
            num_qubits,
            thetas,
        })
    }

    pub fn zeros(num_layers: usize, num_qubits: usize) -> Self {
        PqcParams {
            num_layers,
            num_qubits,
            thetas: vec![0.0; num_layers * num_qubits],
        }
    }

    /// Uniform init over [-2π, 2π].
    pub fn random(num_layers: usize, num_qubits: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 2.0 * std::f64::consts::PI;
        PqcParams {
            num_layers,
            num_qubits,
            thetas: (0..num_layers * num_qubits)
                .map(|_| rng.gen_range(-bound..bound))
                .collect(),
        }
    }

    pub fn num_layers(&self) -> usize {
        self.num_layers
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn get(&self, layer: usize, qubit: usize) -> f64 {
        self.thetas[layer * self.num_qubits + qubit]
    }

    pub fn set(&mut self, layer: usize, qubit: usize, value: f64) {
        self.thetas[layer * self.num_qubits + qubit] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.thetas
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.thetas
    }
}

/// Evaluation settings for a quantum layer.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumLayerConfig {
    pub num_qubits: usize,
    pub num_layers: usize,
    pub embedding: EmbeddingKind,
    /// 0 = exact expectation values.
    pub shots: usize,
    pub noise: Option<(NoiseKind, f64)>,
    /// Base seed for shot sampling; callers vary it per evaluation.
    pub shot_seed: u64,
}

impl QuantumLayerConfig {
    pub fn exact(num_qubits: usize, num_layers: usize, embedding: EmbeddingKind) -> Self {
        QuantumLayerConfig {
            num_qubits,
            num_layers,
            embedding,
            shots: 0,
            noise: None,
            shot_seed: 0,
        }
    }

    fn check_params(&self, params: &PqcParams) -> Result<(), QlayerError> {
        if params.num_layers != self.num_layers || params.num_qubits != self.num_qubits {
            return Err(QlayerError::ParamShapeMismatch {
                l: params.num_layers,
                q: params.num_qubits,
                cfg_l: self.num_layers,
                cfg_q: self.num_qubits,
            });
        }
        Ok(())
    }

    fn is_exact(&self) -> bool {
        self.shots == 0 && self.noise.is_none()
    }
}

// ---------------------------------------------------------------------------
// Embedding
// ---------------------------------------------------------------------------

/// Embed a classical vector into a `num_qubits`-qubit state.
///
/// Amplitude inputs are L2-normalized first; an all-zero input maps to the
/// |0...0⟩ basis state so the map is total.
pub fn embed(c: &[f64], kind: EmbeddingKind, num_qubits: usize) -> Result<StateVector, QlayerError> {
    match kind {
        EmbeddingKind::Angle | EmbeddingKind::AngleWithHadamard => {
            if c.len() != num_qubits {
                return Err(QlayerError::LengthMismatch {
                    context: "angle embedding",
                    expected: num_qubits,
                    got: c.len(),
                });
            }
            let mut state = StateVector::zero_state(num_qubits);
            for (qubit, &angle) in c.iter().enumerate() {
                if kind == EmbeddingKind::AngleWithHadamard {
                    state.apply_mut(&GateOp::H { target: qubit })?;
                }
                state.apply_mut(&GateOp::Ry {
                    theta: angle,
                    target: qubit,
                })?;
            }
            Ok(state)
        }
        EmbeddingKind::Amplitude => {
            let dim = 1usize << num_qubits;
            if c.len() != dim {
                return Err(QlayerError::LengthMismatch {
                    context: "amplitude embedding",
                    expected: dim,
                    got: c.len(),
                });
            }
            let norm_sqr: f64 = c.iter().map(|v| v * v).sum();
            if norm_sqr == 0.0 {
                return Ok(StateVector::zero_state(num_qubits));
            }
            let norm = norm_sqr.sqrt();
            let amps = c
                .iter()
                .map(|&v| num_complex::Complex64::new(v / norm, 0.0))
                .collect();
            Ok(StateVector::from_amplitudes(amps)?)
        }
    }
}

// ---------------------------------------------------------------------------
// PQC forward
// ---------------------------------------------------------------------------

fn layer_gates(layer: usize, params: &PqcParams) -> Vec<GateOp> {
    let q = params.num_qubits;
    let mut gates = Vec::with_capacity(2 * q);
    for i in 0..q.saturating_sub(1) {
        gates.push(GateOp::Cnot {
            control: i,
            target: i + 1,
        });
    }
    for i in 0..q {
        gates.push(GateOp::Ry {
            theta: params.get(layer, i),
            target: i,
        });
    }
    gates
}

fn measure_all<S: crate::qsim::ZReadout>(
    state: &S,
    cfg: &QuantumLayerConfig,
) -> Result<Vec<f64>, QlayerError> {
    let mut out = Vec::with_capacity(cfg.num_qubits);
    for qubit in 0..cfg.num_qubits {
        let v = if cfg.shots == 0 {
            expectation_z(state, qubit)?
        } else {
            sample_expectation_z(state, qubit, cfg.shots, cfg.shot_seed)?
        };
        out.push(v);
    }
    Ok(out)
}

fn forward_density(
    input: &StateVector,
    params: &PqcParams,
    cfg: &QuantumLayerConfig,
    kind: NoiseKind,
    p: f64,
) -> Result<Vec<f64>, QlayerError> {
    let channel = make_noise_channel(kind, p)?;
    let apply_noise = |rho: &DensityMatrix| -> Result<DensityMatrix, QlayerError> {
        let mut out = rho.clone();
        for qubit in 0..cfg.num_qubits {
            out = apply_channel(&out, &channel, qubit)?;
        }
        Ok(out)
    };
    let mut rho = apply_noise(&to_density(input))?;
    for layer in 0..cfg.num_layers {
        for gate in layer_gates(layer, params) {
            rho.apply_gate_mut(&gate)?;
        }
        rho = apply_noise(&rho)?;
    }
    measure_all(&rho, cfg)
}

/// Run the layered circuit on an embedded state and measure every qubit in
/// the Z basis. Returns the Q expectation values.
pub fn pqc_forward(
    input: &StateVector,
    params: &PqcParams,
    cfg: &QuantumLayerConfig,
) -> Result<Vec<f64>, QlayerError> {
    cfg.check_params(params)?;
    if input.num_qubits() != cfg.num_qubits {
        return Err(QlayerError::LengthMismatch {
            context: "pqc input state",
            expected: cfg.num_qubits,
            got: input.num_qubits(),
        });
    }
    if let Some((kind, p)) = cfg.noise {
        return forward_density(input, params, cfg, kind, p);
    }
    let mut state = input.clone();
    for layer in 0..cfg.num_layers {
        for gate in layer_gates(layer, params) {
            state.apply_mut(&gate)?;
        }
    }
    measure_all(&state, cfg)
}

/// Embed `c` per the config and run [`pqc_forward`].
pub fn pqc_forward_from_input(
    c: &[f64],
    params: &PqcParams,
    cfg: &QuantumLayerConfig,
) -> Result<Vec<f64>, QlayerError> {
    let state = embed(c, cfg.embedding, cfg.num_qubits)?;
    pqc_forward(&state, params, cfg)
}

// ---------------------------------------------------------------------------
// Parameter-shift gradients
// ---------------------------------------------------------------------------

/// Gradients of `upstream · outputs` with respect to every circuit angle,
/// by the parameter-shift rule (Ry generator Y/2, eigenvalues ±1/2, shift
/// π/2, scale 1/2). Works under any embedding.
pub(crate) fn param_shift_thetas(
    c: &[f64],
    params: &PqcParams,
    cfg: &QuantumLayerConfig,
    upstream: &[f64],
) -> Result<Vec<f64>, QlayerError> {
    let input = embed(c, cfg.embedding, cfg.num_qubits)?;
    let mut grads = vec![0.0; params.thetas.len()];
    let mut shifted = params.clone();
    for idx in 0..params.thetas.len() {
        let saved = shifted.thetas[idx];
        shifted.thetas[idx] = saved + FRAC_PI_2;
        let up = pqc_forward(&input, &shifted, cfg)?;
        shifted.thetas[idx] = saved - FRAC_PI_2;
        let down = pqc_forward(&input, &shifted, cfg)?;
        shifted.thetas[idx] = saved;
        grads[idx] = upstream
            .iter()
            .zip(up.iter().zip(&down))
            .map(|(u, (a, b))| u * 0.5 * (a - b))
            .sum();
    }
    Ok(grads)
}

/// Parameter-shift gradients of `upstream · outputs` with respect to the
/// circuit angles and the embedding angles.
///
/// Input-angle gradients use the same rule applied to the embedding Ry
/// angles, so amplitude embedding is rejected. Requires exact mode.
pub fn pqc_param_shift_grad(
    c: &[f64],
    params: &PqcParams,
    cfg: &QuantumLayerConfig,
    upstream: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), QlayerError> {
    cfg.check_params(params)?;
    if !cfg.is_exact() {
        return Err(QlayerError::GradRequiresExactMode);
    }
    if cfg.embedding == EmbeddingKind::Amplitude {
        return Err(QlayerError::AmplitudeInputGradUnsupported);
    }
    if upstream.len() != cfg.num_qubits {
        return Err(QlayerError::LengthMismatch {
            context: "upstream gradient",
            expected: cfg.num_qubits,
            got: upstream.len(),
        });
    }
    let grad_thetas = param_shift_thetas(c, params, cfg, upstream)?;

    let mut grad_inputs = vec![0.0; c.len()];
    let mut shifted = c.to_vec();
    for (i, slot) in grad_inputs.iter_mut().enumerate() {
        let saved = shifted[i];
        shifted[i] = saved + FRAC_PI_2;
        let up = pqc_forward_from_input(&shifted, params, cfg)?;
        shifted[i] = saved - FRAC_PI_2;
        let down = pqc_forward_from_input(&shifted, params, cfg)?;
        shifted[i] = saved;
        *slot = upstream
            .iter()
            .zip(up.iter().zip(&down))
            .map(|(u, (a, b))| u * 0.5 * (a - b))
            .sum();
    }
    Ok((grad_thetas, grad_inputs))
}

/// Central-finite-difference gradient of `upstream · outputs` with respect
/// to the raw embedding inputs. Covers amplitude embedding, where the
/// shift rule does not apply; exact mode only.
pub fn pqc_input_grad_fd(
    c: &[f64],
    params: &PqcParams,
    cfg: &QuantumLayerConfig,
    upstream: &[f64],
    h: f64,
) -> Result<Vec<f64>, QlayerError> {
    cfg.check_params(params)?;
    if !cfg.is_exact() {
        return Err(QlayerError::GradRequiresExactMode);
    }
    let mut grads = vec![0.0; c.len()];
    let mut shifted = c.to_vec();
    for (i, slot) in grads.iter_mut().enumerate() {
        let saved = shifted[i];
        shifted[i] = saved + h;
        let up = pqc_forward_from_input(&shifted, params, cfg)?;
        shifted[i] = saved - h;
        let down = pqc_forward_from_input(&shifted, params, cfg)?;
        shifted[i] = saved;
        *slot = upstream
            .iter()
            .zip(up.iter().zip(&down))
            .map(|(u, (a, b))| u * (a - b) / (2.0 * h))
            .sum();
    }
    Ok(grads)
}
