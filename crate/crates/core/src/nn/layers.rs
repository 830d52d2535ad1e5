//! Layers of the predictor networks, with explicit backward passes.
//!
//! All batched tensors are `[N, C, H, W]` (conv stack) or `[N, features]`
//! (dense stack), row-major. Forward passes are pure; backward passes
//! accumulate parameter gradients in a fixed sample order so batch results
//! do not depend on thread count.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{NnError, Param, Tensor};
use crate::exec;

fn uniform_init(rng: &mut ChaCha8Rng, len: usize, bound: f64) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-bound..bound)).collect()
}

// ---------------------------------------------------------------------------
// Conv2d
// ---------------------------------------------------------------------------

/// 2-D cross-correlation with zero padding, stride 1.
#[derive(Debug, Clone)]
pub struct Conv2d {
    /// `[filters, in_channels, m, m]`
    pub weight: Param,
    /// `[filters]`
    pub bias: Param,
    pub padding: usize,
}

impl Conv2d {
    pub fn new(in_channels: usize, filters: usize, kernel: usize, padding: usize, rng: &mut ChaCha8Rng) -> Self {
        let fan_in = in_channels * kernel * kernel;
        let bound = (1.0 / fan_in as f64).sqrt();
        let weight = Param::new(
            Tensor::from_vec(
                &[filters, in_channels, kernel, kernel],
                uniform_init(rng, filters * in_channels * kernel * kernel, bound),
            )
            .unwrap(),
        );
        let bias = Param::new(Tensor::from_vec(&[filters], uniform_init(rng, filters, bound)).unwrap());
        Conv2d {
            weight,
            bias,
            padding,
        }
    }

    pub fn kernel(&self) -> usize {
        self.weight.value.shape[2]
    }

    fn check_input(&self, x: &Tensor) -> Result<(usize, usize, usize, usize), NnError> {
        if x.shape.len() != 4 || x.shape[1] != self.weight.value.shape[1] {
            return Err(NnError::ShapeMismatch(format!(
                "conv2d expects [N, {}, H, W], got {:?}",
                self.weight.value.shape[1], x.shape
            )));
        }
        let (n, c, h, w) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
        let m = self.kernel();
        if h + 2 * self.padding + 1 <= m || w + 2 * self.padding + 1 <= m {
            return Err(NnError::ShapeMismatch(format!(
                "kernel {m} too large for input {h}x{w} with padding {}",
                self.padding
            )));
        }
        Ok((n, c, h, w))
    }

    pub fn output_spatial(&self, h: usize, w: usize) -> (usize, usize) {
        let m = self.kernel();
        (h + 2 * self.padding + 1 - m, w + 2 * self.padding + 1 - m)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor, NnError> {
        let (n, c, h, w) = self.check_input(x)?;
        let f = self.weight.value.shape[0];
        let m = self.kernel();
        let (oh, ow) = self.output_spatial(h, w);
        let pad = self.padding as isize;
        let wgt = &self.weight.value.data;
        let bias = &self.bias.value.data;

        let per_sample: Vec<Vec<f64>> = exec::map_indices(n, |ni| {
            let xin = &x.data[ni * c * h * w..(ni + 1) * c * h * w];
            let mut out = vec![0.0; f * oh * ow];
            for fi in 0..f {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = bias[fi];
                        for ci in 0..c {
                            for ky in 0..m {
                                let iy = oy as isize + ky as isize - pad;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                for kx in 0..m {
                                    let ix = ox as isize + kx as isize - pad;
                                    if ix < 0 || ix >= w as isize {
                                        continue;
                                    }
                                    acc += wgt[((fi * c + ci) * m + ky) * m + kx]
                                        * xin[(ci * h + iy as usize) * w + ix as usize];
                                }
                            }
                        }
                        out[(fi * oh + oy) * ow + ox] = acc;
                    }
                }
            }
            out
        });

        let mut data = Vec::with_capacity(n * f * oh * ow);
        for s in per_sample {
            data.extend_from_slice(&s);
        }
        Tensor::from_vec(&[n, f, oh, ow], data)
    }

    /// Backward pass; accumulates weight/bias gradients and returns the
    /// input gradient.
    pub fn backward(&mut self, x: &Tensor, grad_out: &Tensor) -> Result<Tensor, NnError> {
        let (n, c, h, w) = self.check_input(x)?;
        let f = self.weight.value.shape[0];
        let m = self.kernel();
        let (oh, ow) = self.output_spatial(h, w);
        if grad_out.shape != [n, f, oh, ow] {
            return Err(NnError::ShapeMismatch(format!(
                "conv2d backward expects [{n}, {f}, {oh}, {ow}], got {:?}",
                grad_out.shape
            )));
        }
        let pad = self.padding as isize;
        let wgt = &self.weight.value.data;

        type SampleGrads = (Vec<f64>, Vec<f64>, Vec<f64>); // (gx, gw, gb)
        let per_sample: Vec<SampleGrads> = exec::map_indices(n, |ni| {
            let xin = &x.data[ni * c * h * w..(ni + 1) * c * h * w];
            let gout = &grad_out.data[ni * f * oh * ow..(ni + 1) * f * oh * ow];
            let mut gx = vec![0.0; c * h * w];
            let mut gw = vec![0.0; f * c * m * m];
            let mut gb = vec![0.0; f];
            for fi in 0..f {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let g = gout[(fi * oh + oy) * ow + ox];
                        if g == 0.0 {
                            continue;
                        }
                        gb[fi] += g;
                        for ci in 0..c {
                            for ky in 0..m {
                                let iy = oy as isize + ky as isize - pad;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                for kx in 0..m {
                                    let ix = ox as isize + kx as isize - pad;
                                    if ix < 0 || ix >= w as isize {
                                        continue;
                                    }
                                    let xi = (ci * h + iy as usize) * w + ix as usize;
                                    gw[((fi * c + ci) * m + ky) * m + kx] += g * xin[xi];
                                    gx[xi] += g * wgt[((fi * c + ci) * m + ky) * m + kx];
                                }
                            }
                        }
                    }
                }
            }
            (gx, gw, gb)
        });

        let mut gx_all = Vec::with_capacity(n * c * h * w);
        for (gx, gw, gb) in per_sample {
            gx_all.extend_from_slice(&gx);
            for (acc, v) in self.weight.grad.iter_mut().zip(gw) {
                *acc += v;
            }
            for (acc, v) in self.bias.grad.iter_mut().zip(gb) {
                *acc += v;
            }
        }
        Tensor::from_vec(&[n, c, h, w], gx_all)
    }
}

// ---------------------------------------------------------------------------
// BatchNorm2d
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    Train,
    Eval,
}

/// Per-channel batch normalization over `[N, C, H, W]`.
#[derive(Debug, Clone)]
pub struct BatchNorm2d {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub epsilon: f64,
}

/// Values saved by the forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct BnCache {
    x_hat: Tensor,
    inv_std: Vec<f64>,
    mode: BnMode,
}

impl BatchNorm2d {
    pub fn new(channels: usize) -> Self {
        BatchNorm2d {
            gamma: Param::new(Tensor::from_vec(&[channels], vec![1.0; channels]).unwrap()),
            beta: Param::new(Tensor::zeros(&[channels])),
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            momentum: 0.1,
            epsilon: 1e-5,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    fn check_input(&self, x: &Tensor) -> Result<(usize, usize, usize, usize), NnError> {
        if x.shape.len() != 4 || x.shape[1] != self.channels() {
            return Err(NnError::ShapeMismatch(format!(
                "batchnorm expects [N, {}, H, W], got {:?}",
                self.channels(),
                x.shape
            )));
        }
        Ok((x.shape[0], x.shape[1], x.shape[2], x.shape[3]))
    }

    pub fn forward(&mut self, x: &Tensor, mode: BnMode) -> Result<(Tensor, BnCache), NnError> {
        let (n, c, h, w) = self.check_input(x)?;
        if mode == BnMode::Train && n < 2 {
            return Err(NnError::BatchTooSmall);
        }
        let count = (n * h * w) as f64;
        let plane = h * w;
        let mut x_hat = Tensor::zeros(&x.shape);
        let mut inv_std = vec![0.0; c];
        let mut out = Tensor::zeros(&x.shape);

        for ci in 0..c {
            let (mean, var) = match mode {
                BnMode::Train => {
                    let mut sum = 0.0;
                    for ni in 0..n {
                        let base = (ni * c + ci) * plane;
                        sum += x.data[base..base + plane].iter().sum::<f64>();
                    }
                    let mean = sum / count;
                    let mut ss = 0.0;
                    for ni in 0..n {
                        let base = (ni * c + ci) * plane;
                        for &v in &x.data[base..base + plane] {
                            ss += (v - mean) * (v - mean);
                        }
                    }
                    let var = ss / count;
                    // running stats use the unbiased variance
                    self.running_mean[ci] =
                        (1.0 - self.momentum) * self.running_mean[ci] + self.momentum * mean;
                    let unbiased = if count > 1.0 { var * count / (count - 1.0) } else { var };
                    self.running_var[ci] =
                        (1.0 - self.momentum) * self.running_var[ci] + self.momentum * unbiased;
                    (mean, var)
                }
                BnMode::Eval => (self.running_mean[ci], self.running_var[ci]),
            };
            let istd = 1.0 / (var + self.epsilon).sqrt();
            inv_std[ci] = istd;
            let gamma = self.gamma.value.data[ci];
            let beta = self.beta.value.data[ci];
            for ni in 0..n {
                let base = (ni * c + ci) * plane;
                for k in 0..plane {
                    let xh = (x.data[base + k] - mean) * istd;
                    x_hat.data[base + k] = xh;
                    out.data[base + k] = gamma * xh + beta;
                }
            }
        }
        Ok((
            out,
            BnCache {
                x_hat,
                inv_std,
                mode,
            },
        ))
    }

    pub fn backward(&mut self, cache: &BnCache, grad_out: &Tensor) -> Result<Tensor, NnError> {
        let (n, c, h, w) = self.check_input(grad_out)?;
        let plane = h * w;
        let count = (n * h * w) as f64;
        let mut gx = Tensor::zeros(&grad_out.shape);

        for ci in 0..c {
            let gamma = self.gamma.value.data[ci];
            let istd = cache.inv_std[ci];
            let mut sum_g = 0.0;
            let mut sum_gx = 0.0;
            for ni in 0..n {
                let base = (ni * c + ci) * plane;
                for k in 0..plane {
                    let g = grad_out.data[base + k];
                    sum_g += g;
                    sum_gx += g * cache.x_hat.data[base + k];
                }
            }
            self.beta.grad[ci] += sum_g;
            self.gamma.grad[ci] += sum_gx;
            for ni in 0..n {
                let base = (ni * c + ci) * plane;
                for k in 0..plane {
                    let g = grad_out.data[base + k];
                    gx.data[base + k] = match cache.mode {
                        BnMode::Train => {
                            gamma
                                * istd
                                * (g - sum_g / count - cache.x_hat.data[base + k] * sum_gx / count)
                        }
                        // eval mode normalizes with constants
                        BnMode::Eval => gamma * istd * g,
                    };
                }
            }
        }
        Ok(gx)
    }
}

// ---------------------------------------------------------------------------
// Linear
// ---------------------------------------------------------------------------

/// Fully-connected layer `y = W x + b` over `[N, in]`.
#[derive(Debug, Clone)]
pub struct Linear {
    /// `[out, in]`
    pub weight: Param,
    /// `[out]`
    pub bias: Param,
}

impl Linear {
    pub fn new(in_features: usize, out_features: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = (1.0 / in_features as f64).sqrt();
        Linear {
            weight: Param::new(
                Tensor::from_vec(
                    &[out_features, in_features],
                    uniform_init(rng, out_features * in_features, bound),
                )
                .unwrap(),
            ),
            bias: Param::new(
                Tensor::from_vec(&[out_features], uniform_init(rng, out_features, bound)).unwrap(),
            ),
        }
    }

    pub fn in_features(&self) -> usize {
        self.weight.value.shape[1]
    }

    pub fn out_features(&self) -> usize {
        self.weight.value.shape[0]
    }

    fn check_input(&self, x: &Tensor) -> Result<usize, NnError> {
        if x.shape.len() != 2 || x.shape[1] != self.in_features() {
            return Err(NnError::ShapeMismatch(format!(
                "linear expects [N, {}], got {:?}",
                self.in_features(),
                x.shape
            )));
        }
        Ok(x.shape[0])
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor, NnError> {
        let n = self.check_input(x)?;
        let (o, i) = (self.out_features(), self.in_features());
        let mut out = Tensor::zeros(&[n, o]);
        for ni in 0..n {
            let xin = &x.data[ni * i..(ni + 1) * i];
            for oi in 0..o {
                let row = &self.weight.value.data[oi * i..(oi + 1) * i];
                let mut acc = self.bias.value.data[oi];
                for (wv, xv) in row.iter().zip(xin) {
                    acc += wv * xv;
                }
                out.data[ni * o + oi] = acc;
            }
        }
        Ok(out)
    }

    pub fn backward(&mut self, x: &Tensor, grad_out: &Tensor) -> Result<Tensor, NnError> {
        let n = self.check_input(x)?;
        let (o, i) = (self.out_features(), self.in_features());
        if grad_out.shape != [n, o] {
            return Err(NnError::ShapeMismatch(format!(
                "linear backward expects [{n}, {o}], got {:?}",
                grad_out.shape
            )));
        }
        let mut gx = Tensor::zeros(&[n, i]);
        for ni in 0..n {
            let xin = &x.data[ni * i..(ni + 1) * i];
            let gout = &grad_out.data[ni * o..(ni + 1) * o];
            for oi in 0..o {
                let g = gout[oi];
                self.bias.grad[oi] += g;
                for ii in 0..i {
                    self.weight.grad[oi * i + ii] += g * xin[ii];
                    gx.data[ni * i + ii] += g * self.weight.value.data[oi * i + ii];
                }
            }
        }
        Ok(gx)
    }
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

pub fn relu(x: &Tensor) -> Tensor {
    Tensor {
        shape: x.shape.clone(),
        data: x.data.iter().map(|&v| v.max(0.0)).collect(),
    }
}

/// Backward through ReLU; `x` is the forward input.
pub fn relu_backward(x: &Tensor, grad_out: &Tensor) -> Tensor {
    Tensor {
        shape: x.shape.clone(),
        data: x
            .data
            .iter()
            .zip(&grad_out.data)
            .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
            .collect(),
    }
}

pub fn tanh_act(x: &Tensor) -> Tensor {
    Tensor {
        shape: x.shape.clone(),
        data: x.data.iter().map(|&v| v.tanh()).collect(),
    }
}

/// Backward through tanh; `y` is the forward output.
pub fn tanh_backward(y: &Tensor, grad_out: &Tensor) -> Tensor {
    Tensor {
        shape: y.shape.clone(),
        data: y
            .data
            .iter()
            .zip(&grad_out.data)
            .map(|(&v, &g)| g * (1.0 - v * v))
            .collect(),
    }
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    Tensor {
        shape: x.shape.clone(),
        data: x.data.iter().map(|&v| 1.0 / (1.0 + (-v).exp())).collect(),
    }
}

/// Backward through sigmoid; `y` is the forward output.
pub fn sigmoid_backward(y: &Tensor, grad_out: &Tensor) -> Tensor {
    Tensor {
        shape: y.shape.clone(),
        data: y
            .data
            .iter()
            .zip(&grad_out.data)
            .map(|(&v, &g)| g * v * (1.0 - v))
            .collect(),
    }
}
