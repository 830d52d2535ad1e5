//! The four beamforming predictors and their parameter accounting.
//!
//! * classical CNN: conv -> ReLU -> batchnorm -> flatten -> FC(2K) -> sigmoid
//! * hybrid QNN: conv stack -> FC1 -> tanh -> quantum layer -> FC2(2K) -> sigmoid
//! * QNN with transfer learning: same, with the conv front-end (batchnorm
//!   included) loaded from a classical checkpoint and frozen
//! * hybrid QCNN: quanvolution -> conv stack -> FC(2K) -> sigmoid
//!
//! Every network maps a K x 2N_t real channel image (channel = user, height
//! = stacked real and imaginary parts) to 2K sigmoid outputs, the raw
//! downlink/uplink power scores.

mod checkpoint;
mod forward;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError, TrainingMeta};
pub use forward::{backward, forward, ForwardOutput, QuantumRunMode};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{BatchNorm2d, Conv2d, Linear, NnError, Param, Tensor};
use crate::qlayers::{EmbeddingKind, QlayerError};
use crate::rng::stream_rng;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Quantum(#[from] QlayerError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("model has no quantum layer")]
    NotQuantum,
    #[error("sample dimensions {got} do not match the model ({expected})")]
    SampleMismatch { expected: String, got: String },
}

/// Architecture selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    ClassicalCnn,
    HybridQnn,
    HybridQnnTransfer,
    HybridQcnn,
}

impl ModelKind {
    pub fn is_quantum(self) -> bool {
        !matches!(self, ModelKind::ClassicalCnn)
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            ModelKind::ClassicalCnn => "classical",
            ModelKind::HybridQnn => "qnn",
            ModelKind::HybridQnnTransfer => "qnn_transfer",
            ModelKind::HybridQcnn => "qcnn",
        };
        write!(f, "{name}")
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "classical" | "classical_cnn" | "cnn" => Ok(ModelKind::ClassicalCnn),
            "qnn" | "hybrid_qnn" => Ok(ModelKind::HybridQnn),
            "qnn_transfer" | "transfer" | "hybrid_qnn_transfer" => Ok(ModelKind::HybridQnnTransfer),
            "qcnn" | "hybrid_qcnn" => Ok(ModelKind::HybridQcnn),
            other => Err(format!("unknown model kind '{other}'")),
        }
    }
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub num_users: usize,
    pub num_antennas: usize,
    /// Convolution filters F.
    pub filters: usize,
    /// Convolution kernel size m.
    pub kernel: usize,
    /// Qubits in the quantum layer.
    pub num_qubits: usize,
    /// Quantum circuit layers L.
    pub num_quantum_layers: usize,
    pub embedding: EmbeddingKind,
    /// Quanvolution kernel edge (always 2).
    pub quanv_kernel: usize,
    pub pretrained_checkpoint: Option<String>,
}

impl ModelConfig {
    /// Defaults: F=8, m=3, L=2, Q=4 for the QNN variants and Q=2 for the
    /// QCNN; angle-with-Hadamard embedding for QNN, amplitude for QCNN.
    pub fn new(kind: ModelKind, num_users: usize, num_antennas: usize) -> Self {
        let (num_qubits, embedding) = match kind {
            ModelKind::HybridQcnn => (2, EmbeddingKind::Amplitude),
            _ => (4, EmbeddingKind::AngleWithHadamard),
        };
        ModelConfig {
            kind,
            num_users,
            num_antennas,
            filters: 8,
            kernel: 3,
            num_qubits,
            num_quantum_layers: 2,
            embedding,
            quanv_kernel: 2,
            pretrained_checkpoint: None,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let invalid = |msg: String| Err(ModelError::InvalidConfig(msg));
        if self.num_users == 0 || self.num_antennas == 0 {
            return invalid("users and antennas must be positive".into());
        }
        if self.filters == 0 {
            return invalid("filters must be positive".into());
        }
        if !(1..=3).contains(&self.kernel) {
            return invalid(format!("kernel {} outside 1..=3", self.kernel));
        }
        if self.kind.is_quantum() && (self.num_qubits == 0 || self.num_quantum_layers == 0) {
            return invalid("quantum layer needs qubits and layers".into());
        }
        match self.kind {
            ModelKind::HybridQcnn => {
                if self.quanv_kernel != 2 {
                    return invalid("quanvolution kernel must be 2".into());
                }
                if self.num_qubits != 2 {
                    return invalid("quanvolution uses exactly 2 qubits".into());
                }
                if self.num_users % 2 != 0 {
                    return invalid(format!(
                        "quanvolution tiling needs an even user count, got {}",
                        self.num_users
                    ));
                }
                if self.embedding != EmbeddingKind::Amplitude {
                    return invalid("a 2x2 block only fits two qubits via amplitude embedding".into());
                }
                if self.kernel > self.num_qubits + 2 {
                    return invalid(format!(
                        "kernel {} too large for quanvolution output width {}",
                        self.kernel, self.num_qubits
                    ));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Flattened length after the classical conv stack.
    pub fn conv_flat_len(&self) -> usize {
        let (h, w) = self.conv_input_hw();
        self.filters * (h + 3 - self.kernel) * (w + 3 - self.kernel)
    }

    /// Conv input (channels, height, width).
    pub fn conv_input_chw(&self) -> (usize, usize, usize) {
        match self.kind {
            ModelKind::HybridQcnn => (
                self.num_users / self.quanv_kernel,
                2 * self.num_antennas / self.quanv_kernel,
                self.num_qubits,
            ),
            _ => (self.num_users, 2 * self.num_antennas, 1),
        }
    }

    fn conv_input_hw(&self) -> (usize, usize) {
        let (_, h, w) = self.conv_input_chw();
        (h, w)
    }

    /// Width of the dense layer feeding the quantum circuit.
    pub fn quantum_input_len(&self) -> usize {
        match self.embedding {
            EmbeddingKind::Amplitude => 1 << self.num_qubits,
            _ => self.num_qubits,
        }
    }
}

/// Quantum dense block of the QNN variants: trainable circuit angles plus
/// the embedding choice.
#[derive(Debug, Clone)]
pub struct QuantumDense {
    /// `[L, Q]` circuit angles.
    pub thetas: Param,
    pub num_layers: usize,
    pub num_qubits: usize,
    pub embedding: EmbeddingKind,
}

/// Quanvolution front-end of the QCNN: shared two-qubit filter angles.
#[derive(Debug, Clone)]
pub struct QuanvModule {
    /// `[L, 2]` circuit angles.
    pub thetas: Param,
    pub num_layers: usize,
}

/// A built predictor. Layer fields are populated according to the kind.
#[derive(Debug, Clone)]
pub struct Model {
    pub cfg: ModelConfig,
    pub quanv: Option<QuanvModule>,
    pub conv: Conv2d,
    pub bn: BatchNorm2d,
    pub fc1: Option<Linear>,
    pub pqc: Option<QuantumDense>,
    pub fc_out: Linear,
    /// Seed the parameters were initialized from.
    pub init_seed: u64,
    pub meta: TrainingMeta,
}

impl Model {
    /// Named parameters in a fixed order (the checkpoint and optimizer
    /// order).
    pub fn named_params(&self) -> Vec<(&'static str, &Param)> {
        let mut out: Vec<(&'static str, &Param)> = Vec::new();
        if let Some(quanv) = &self.quanv {
            out.push(("quanv.thetas", &quanv.thetas));
        }
        out.push(("conv.weight", &self.conv.weight));
        out.push(("conv.bias", &self.conv.bias));
        out.push(("bn.gamma", &self.bn.gamma));
        out.push(("bn.beta", &self.bn.beta));
        if let Some(fc1) = &self.fc1 {
            out.push(("fc1.weight", &fc1.weight));
            out.push(("fc1.bias", &fc1.bias));
        }
        if let Some(pqc) = &self.pqc {
            out.push(("pqc.thetas", &pqc.thetas));
        }
        out.push(("fc_out.weight", &self.fc_out.weight));
        out.push(("fc_out.bias", &self.fc_out.bias));
        out
    }

    pub fn named_params_mut(&mut self) -> Vec<(&'static str, &mut Param)> {
        let mut out: Vec<(&'static str, &mut Param)> = Vec::new();
        if let Some(quanv) = &mut self.quanv {
            out.push(("quanv.thetas", &mut quanv.thetas));
        }
        out.push(("conv.weight", &mut self.conv.weight));
        out.push(("conv.bias", &mut self.conv.bias));
        out.push(("bn.gamma", &mut self.bn.gamma));
        out.push(("bn.beta", &mut self.bn.beta));
        if let Some(fc1) = &mut self.fc1 {
            out.push(("fc1.weight", &mut fc1.weight));
            out.push(("fc1.bias", &mut fc1.bias));
        }
        if let Some(pqc) = &mut self.pqc {
            out.push(("pqc.thetas", &mut pqc.thetas));
        }
        out.push(("fc_out.weight", &mut self.fc_out.weight));
        out.push(("fc_out.bias", &mut self.fc_out.bias));
        out
    }

    pub fn zero_grad(&mut self) {
        for (_, p) in self.named_params_mut() {
            p.zero_grad();
        }
    }

    /// Number of scalars training may update.
    pub fn trainable_scalar_count(&self) -> usize {
        self.named_params()
            .iter()
            .filter(|(_, p)| !p.frozen)
            .map(|(_, p)| p.len())
            .sum()
    }

    pub fn is_quantum(&self) -> bool {
        self.cfg.kind.is_quantum()
    }
}

/// Build a model with parameters drawn from `seed`. Transfer models load
/// and freeze their conv front-end from `cfg.pretrained_checkpoint`.
pub fn build_model(cfg: &ModelConfig, seed: u64) -> Result<Model, ModelError> {
    cfg.validate()?;
    if cfg.kind == ModelKind::HybridQnnTransfer {
        let path = cfg.pretrained_checkpoint.as_ref().ok_or_else(|| {
            ModelError::InvalidConfig("transfer model requires a pretrained checkpoint".into())
        })?;
        let source = load_checkpoint(std::path::Path::new(path))?;
        return build_transfer_from(&source, cfg, seed);
    }
    Ok(build_fresh(cfg, seed))
}

fn build_fresh(cfg: &ModelConfig, seed: u64) -> Model {
    let mut rng: ChaCha8Rng = stream_rng(seed, "model-init", 0);
    let quanv = match cfg.kind {
        ModelKind::HybridQcnn => Some(QuanvModule {
            thetas: random_thetas(cfg.num_quantum_layers, cfg.num_qubits, &mut rng),
            num_layers: cfg.num_quantum_layers,
        }),
        _ => None,
    };
    let (c, _, _) = cfg.conv_input_chw();
    let conv = Conv2d::new(c, cfg.filters, cfg.kernel, 1, &mut rng);
    let bn = BatchNorm2d::new(cfg.filters);
    let (fc1, pqc) = match cfg.kind {
        ModelKind::HybridQnn | ModelKind::HybridQnnTransfer => {
            let fc1 = Linear::new(cfg.conv_flat_len(), cfg.quantum_input_len(), &mut rng);
            let pqc = QuantumDense {
                thetas: random_thetas(cfg.num_quantum_layers, cfg.num_qubits, &mut rng),
                num_layers: cfg.num_quantum_layers,
                num_qubits: cfg.num_qubits,
                embedding: cfg.embedding,
            };
            (Some(fc1), Some(pqc))
        }
        _ => (None, None),
    };
    let fc_out_in = match cfg.kind {
        ModelKind::HybridQnn | ModelKind::HybridQnnTransfer => cfg.num_qubits,
        _ => cfg.conv_flat_len(),
    };
    let fc_out = Linear::new(fc_out_in, 2 * cfg.num_users, &mut rng);
    Model {
        cfg: cfg.clone(),
        quanv,
        conv,
        bn,
        fc1,
        pqc,
        fc_out,
        init_seed: seed,
        meta: TrainingMeta::default(),
    }
}

/// Circuit angles initialized uniformly over [-2π, 2π], stored flat `[L, Q]`.
fn random_thetas(layers: usize, qubits: usize, rng: &mut ChaCha8Rng) -> Param {
    let params = crate::qlayers::PqcParams::random(layers, qubits, rng);
    Param::new(Tensor::from_vec(&[layers, qubits], params.as_slice().to_vec()).unwrap())
}

/// Build the transfer variant from an in-memory classical model: the conv
/// layer and batch normalization (affine parameters and running statistics)
/// are copied and frozen; everything else is freshly initialized.
pub fn build_transfer_from(
    source: &Model,
    cfg: &ModelConfig,
    seed: u64,
) -> Result<Model, ModelError> {
    if cfg.kind != ModelKind::HybridQnnTransfer {
        return Err(ModelError::InvalidConfig(
            "build_transfer_from requires the transfer kind".into(),
        ));
    }
    cfg.validate()?;
    if source.cfg.num_users != cfg.num_users
        || source.cfg.num_antennas != cfg.num_antennas
        || source.cfg.filters != cfg.filters
        || source.cfg.kernel != cfg.kernel
        || source.cfg.kind == ModelKind::HybridQcnn
    {
        return Err(ModelError::InvalidConfig(
            "pretrained front-end does not match the requested dimensions".into(),
        ));
    }
    let mut model = build_fresh(cfg, seed);
    model.conv = source.conv.clone();
    model.bn = source.bn.clone();
    model.conv.weight.frozen = true;
    model.conv.bias.frozen = true;
    model.bn.gamma.frozen = true;
    model.bn.beta.frozen = true;
    Ok(model)
}

// ---------------------------------------------------------------------------
// Parameter accounting
// ---------------------------------------------------------------------------

/// Closed-form trainable-parameter count for the power-vector-output
/// networks (conv weights and biases, batchnorm affine pair, dense layers,
/// circuit angles).
pub fn count_params(cfg: &ModelConfig) -> usize {
    let k = cfg.num_users;
    let nt = cfg.num_antennas;
    let f = cfg.filters;
    let m = cfg.kernel;
    let q = cfg.num_qubits;
    let l = cfg.num_quantum_layers;
    let fq = cfg.quanv_kernel;
    let flat = f * (2 * nt + 3 - m) * (4 - m);
    match cfg.kind {
        ModelKind::ClassicalCnn => (k * m * m + 3) * f + 2 * k * (flat + 1),
        ModelKind::HybridQnn => (k * m * m + 3) * f + (flat + 1) * q + l * q + 2 * k * (q + 1),
        ModelKind::HybridQnnTransfer => (flat + 1) * q + l * q + 2 * k * (q + 1),
        ModelKind::HybridQcnn => {
            l * q
                + ((k / fq) * m * m + 3) * f
                + 2 * k * (f * (2 * nt / fq + 3 - m) * (q + 3 - m) + 1)
        }
    }
}

/// Counts for the variant whose final layer emits the 2·N_t·K beamforming
/// entries directly. No such model is built; the counts are exposed for
/// comparison tables.
pub fn count_params_direct_output(cfg: &ModelConfig) -> usize {
    let k = cfg.num_users;
    let nt = cfg.num_antennas;
    let f = cfg.filters;
    let m = cfg.kernel;
    let q = cfg.num_qubits;
    let l = cfg.num_quantum_layers;
    let fq = cfg.quanv_kernel;
    let flat = f * (2 * nt + 3 - m) * (4 - m);
    match cfg.kind {
        ModelKind::ClassicalCnn => (k * m * m + 3) * f + 2 * nt * k * (flat + 1),
        ModelKind::HybridQnn => (k * m * m + 3) * f + (flat + 1) * q + l * q + 2 * k * (q + 1),
        ModelKind::HybridQnnTransfer => (flat + 1) * q + l * q + 2 * k * (q + 1),
        ModelKind::HybridQcnn => {
            l * q
                + ((k / fq) * m * m + 3) * f
                + 2 * nt * k * (f * (2 * nt / fq + 3 - m) * (q + 3 - m) + 1)
        }
    }
}

#[cfg(test)]
mod tests;
