//! Quanvolution: a convolution-like layer whose 2x2 filter is a shared
//! two-qubit parameterized circuit.
//!
//! The input matrix is tiled into non-overlapping 2x2 blocks, row-major
//! over tile rows then tile columns. Each block's four values are
//! amplitude-embedded into two qubits, run through the shared circuit, and
//! the two Z expectations become the output cell. Output layout is
//! `[rows/2, cols/2, 2]` = (channels, height, width) for the downstream
//! convolution.

use super::{
    param_shift_thetas, pqc_forward_from_input, EmbeddingKind, PqcParams, QlayerError,
    QuantumLayerConfig,
};
use crate::exec;
use crate::nn::Tensor;

const BLOCK: usize = 2;

fn check_quanv(input: &Tensor, params: &PqcParams, cfg: &QuantumLayerConfig) -> Result<(usize, usize), QlayerError> {
    if input.shape.len() != 2 {
        return Err(QlayerError::LengthMismatch {
            context: "quanvolution input rank",
            expected: 2,
            got: input.shape.len(),
        });
    }
    let (rows, cols) = (input.shape[0], input.shape[1]);
    if rows % BLOCK != 0 || cols % BLOCK != 0 || rows == 0 || cols == 0 {
        return Err(QlayerError::NonDivisibleInput { rows, cols });
    }
    if cfg.num_qubits != BLOCK {
        return Err(QlayerError::LengthMismatch {
            context: "quanvolution qubit count",
            expected: BLOCK,
            got: cfg.num_qubits,
        });
    }
    cfg.check_params(params)?;
    Ok((rows, cols))
}

fn block_values(input: &Tensor, cols: usize, tile_row: usize, tile_col: usize) -> [f64; 4] {
    let r = tile_row * BLOCK;
    let c = tile_col * BLOCK;
    [
        input.data[r * cols + c],
        input.data[r * cols + c + 1],
        input.data[(r + 1) * cols + c],
        input.data[(r + 1) * cols + c + 1],
    ]
}

fn block_cfg(cfg: &QuantumLayerConfig, block_index: usize) -> QuantumLayerConfig {
    let mut local = cfg.clone();
    local.embedding = EmbeddingKind::Amplitude;
    if cfg.shots > 0 {
        local.shot_seed = crate::rng::derive_seed(cfg.shot_seed, "quanv-block", block_index as u64);
    }
    local
}

/// Apply the shared two-qubit filter to every 2x2 block of `input`
/// (`[rows, cols]`), producing `[rows/2, cols/2, 2]`.
pub fn quanvolution_forward(
    input: &Tensor,
    params: &PqcParams,
    cfg: &QuantumLayerConfig,
) -> Result<Tensor, QlayerError> {
    let (rows, cols) = check_quanv(input, params, cfg)?;
    let (tile_rows, tile_cols) = (rows / BLOCK, cols / BLOCK);
    let per_block: Vec<Result<Vec<f64>, QlayerError>> =
        exec::map_indices(tile_rows * tile_cols, |b| {
            let values = block_values(input, cols, b / tile_cols, b % tile_cols);
            pqc_forward_from_input(&values, params, &block_cfg(cfg, b))
        });
    let mut data = Vec::with_capacity(tile_rows * tile_cols * BLOCK);
    for meas in per_block {
        data.extend_from_slice(&meas?);
    }
    Ok(Tensor {
        shape: vec![tile_rows, tile_cols, BLOCK],
        data,
    })
}

/// Backward pass of the quanvolution layer for upstream gradients of shape
/// `[rows/2, cols/2, 2]`.
///
/// Angle gradients are parameter-shift sums over all blocks (fixed block
/// order); input gradients go through the normalize-then-embed map by
/// central finite differences, since the shift rule does not apply to
/// amplitudes.
pub fn quanvolution_grad(
    input: &Tensor,
    params: &PqcParams,
    cfg: &QuantumLayerConfig,
    upstream: &Tensor,
) -> Result<(Vec<f64>, Tensor), QlayerError> {
    let (rows, cols) = check_quanv(input, params, cfg)?;
    if !cfg.is_exact() {
        return Err(QlayerError::GradRequiresExactMode);
    }
    let (tile_rows, tile_cols) = (rows / BLOCK, cols / BLOCK);
    if upstream.shape != [tile_rows, tile_cols, BLOCK] {
        return Err(QlayerError::LengthMismatch {
            context: "quanvolution upstream",
            expected: tile_rows * tile_cols * BLOCK,
            got: upstream.data.len(),
        });
    }
    let h = 1e-5;

    type BlockGrads = (Vec<f64>, [f64; 4]);
    let per_block: Vec<Result<BlockGrads, QlayerError>> =
        exec::map_indices(tile_rows * tile_cols, |b| {
            let local = block_cfg(cfg, b);
            let mut values = block_values(input, cols, b / tile_cols, b % tile_cols);
            let up = &upstream.data[b * BLOCK..(b + 1) * BLOCK];

            let grad_thetas = param_shift_thetas(&values, params, &local, up)?;

            let mut grad_in = [0.0; 4];
            for (v, slot) in grad_in.iter_mut().enumerate() {
                let saved = values[v];
                values[v] = saved + h;
                let plus = pqc_forward_from_input(&values, params, &local)?;
                values[v] = saved - h;
                let minus = pqc_forward_from_input(&values, params, &local)?;
                values[v] = saved;
                *slot = up
                    .iter()
                    .zip(plus.iter().zip(&minus))
                    .map(|(u, (a, b))| u * (a - b) / (2.0 * h))
                    .sum();
            }
            Ok((grad_thetas, grad_in))
        });

    let mut grad_thetas = vec![0.0; params.as_slice().len()];
    let mut grad_input = Tensor::zeros(&[rows, cols]);
    for (b, res) in per_block.into_iter().enumerate() {
        let (gt, gi) = res?;
        for (acc, v) in grad_thetas.iter_mut().zip(gt) {
            *acc += v;
        }
        let (r, c) = ((b / tile_cols) * BLOCK, (b % tile_cols) * BLOCK);
        grad_input.data[r * cols + c] = gi[0];
        grad_input.data[r * cols + c + 1] = gi[1];
        grad_input.data[(r + 1) * cols + c] = gi[2];
        grad_input.data[(r + 1) * cols + c + 1] = gi[3];
    }
    Ok((grad_thetas, grad_input))
}
