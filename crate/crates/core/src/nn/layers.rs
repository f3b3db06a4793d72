//! Layers with explicit forward/backward passes.
//!
//! Forward passes return a cache value instead of storing it in the layer, so
//! one layer can be evaluated on several batches (the two Siamese branches)
//! before any backward pass runs. Backward passes accumulate into the
//! parameter gradients.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::param::Param;
use super::tensor::{gemm, Matrix, Tensor};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    /// `[out_channels, in_channels * kernel * kernel]`
    pub weight: Param,
    pub bias: Param,
}

#[derive(Debug, Clone)]
pub struct ConvCache {
    col: Vec<f64>,
    in_shape: (usize, usize, usize, usize),
    out_hw: (usize, usize),
}

impl Conv2d {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut Rng,
    ) -> Self {
        let fan_in = in_channels * kernel * kernel;
        let std = (2.0 / fan_in as f64).sqrt();
        let weight = (0..out_channels * fan_in)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                z * std
            })
            .collect();
        Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            weight: Param::new(weight),
            bias: Param::zeros(out_channels),
        }
    }

    pub fn output_size(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let (ph, pw) = (h + 2 * self.padding, w + 2 * self.padding);
        if ph < self.kernel || pw < self.kernel {
            return Err(Error::Shape(format!(
                "input {h}x{w} too small for kernel {} with padding {}",
                self.kernel, self.padding
            )));
        }
        Ok((
            (ph - self.kernel) / self.stride + 1,
            (pw - self.kernel) / self.stride + 1,
        ))
    }

    fn im2col(&self, x: &Tensor, ho: usize, wo: usize) -> Vec<f64> {
        let k = self.kernel;
        let m = x.batch * ho * wo;
        let mut col = vec![0.0; self.in_channels * k * k * m];
        let (s, p) = (self.stride as isize, self.padding as isize);
        for ci in 0..self.in_channels {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    let dst = &mut col[row * m..(row + 1) * m];
                    for n in 0..x.batch {
                        let src = &x.data[(ci * x.batch + n) * x.plane()..][..x.plane()];
                        for oy in 0..ho {
                            let iy = oy as isize * s + ky as isize - p;
                            if iy < 0 || iy >= x.height as isize {
                                continue;
                            }
                            let srow = &src[iy as usize * x.width..][..x.width];
                            let drow = &mut dst[(n * ho + oy) * wo..][..wo];
                            for (ox, d) in drow.iter_mut().enumerate() {
                                let ix = ox as isize * s + kx as isize - p;
                                if ix >= 0 && ix < x.width as isize {
                                    *d = srow[ix as usize];
                                }
                            }
                        }
                    }
                }
            }
        }
        col
    }

    fn col2im(&self, dcol: &[f64], shape: (usize, usize, usize, usize), ho: usize, wo: usize) -> Tensor {
        let (c, nb, h, w) = shape;
        let k = self.kernel;
        let m = nb * ho * wo;
        let mut dx = Tensor::zeros(c, nb, h, w);
        let plane = h * w;
        let (s, p) = (self.stride as isize, self.padding as isize);
        for ci in 0..c {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    let src = &dcol[row * m..(row + 1) * m];
                    for n in 0..nb {
                        let dst = &mut dx.data[(ci * nb + n) * plane..][..plane];
                        for oy in 0..ho {
                            let iy = oy as isize * s + ky as isize - p;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let srow = &src[(n * ho + oy) * wo..][..wo];
                            for (ox, &g) in srow.iter().enumerate() {
                                let ix = ox as isize * s + kx as isize - p;
                                if ix >= 0 && ix < w as isize {
                                    dst[iy as usize * w + ix as usize] += g;
                                }
                            }
                        }
                    }
                }
            }
        }
        dx
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, ConvCache)> {
        if x.channels != self.in_channels {
            return Err(Error::Shape(format!(
                "conv expects {} input channels, got {}",
                self.in_channels, x.channels
            )));
        }
        let (ho, wo) = self.output_size(x.height, x.width)?;
        let col = self.im2col(x, ho, wo);
        let kk = self.in_channels * self.kernel * self.kernel;
        let m = x.batch * ho * wo;
        let mut y = Tensor::zeros(self.out_channels, x.batch, ho, wo);
        gemm(self.out_channels, kk, m, &self.weight.value, false, &col, false, 0.0, &mut y.data);
        for (co, b) in self.bias.value.iter().enumerate() {
            y.data[co * m..(co + 1) * m].iter_mut().for_each(|v| *v += b);
        }
        let cache = ConvCache {
            col,
            in_shape: (x.channels, x.batch, x.height, x.width),
            out_hw: (ho, wo),
        };
        Ok((y, cache))
    }

    /// Accumulates weight/bias gradients; returns the input gradient when asked.
    pub fn backward(&mut self, cache: &ConvCache, dy: &Tensor, need_input_grad: bool) -> Option<Tensor> {
        let kk = self.in_channels * self.kernel * self.kernel;
        let (ho, wo) = cache.out_hw;
        let m = cache.in_shape.1 * ho * wo;
        gemm(self.out_channels, m, kk, &dy.data, false, &cache.col, true, 1.0, &mut self.weight.grad);
        for (co, g) in self.bias.grad.iter_mut().enumerate() {
            *g += dy.data[co * m..(co + 1) * m].iter().sum::<f64>();
        }
        if !need_input_grad {
            return None;
        }
        let mut dcol = vec![0.0; kk * m];
        gemm(kk, self.out_channels, m, &self.weight.value, true, &dy.data, false, 0.0, &mut dcol);
        Some(self.col2im(&dcol, cache.in_shape, ho, wo))
    }
}

/// Per-channel batch normalization over (batch, height, width).
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm2d {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
}

#[derive(Debug, Clone)]
pub struct BatchNormCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    mode: Mode,
    batch_mean: Vec<f64>,
    batch_var_unbiased: Vec<f64>,
}

impl BatchNorm2d {
    pub fn new(channels: usize) -> Self {
        BatchNorm2d {
            gamma: Param::new(vec![1.0; channels]),
            beta: Param::zeros(channels),
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    /// Train mode normalizes with the batch statistics, eval mode with the
    /// running estimates. Running estimates are only changed by
    /// [`BatchNorm2d::update_running`].
    pub fn forward(&self, x: &Tensor, mode: Mode) -> (Tensor, BatchNormCache) {
        let m = x.batch * x.plane();
        let mut y = x.clone();
        let mut xhat = vec![0.0; x.len()];
        let mut inv_std = vec![0.0; x.channels];
        let mut batch_mean = Vec::new();
        let mut batch_var_unbiased = Vec::new();
        for c in 0..x.channels {
            let xs = &x.data[c * m..(c + 1) * m];
            let (mean, var) = match mode {
                Mode::Train => {
                    let mean = xs.iter().sum::<f64>() / m as f64;
                    let var = xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m as f64;
                    let unbiased = if m > 1 { var * m as f64 / (m - 1) as f64 } else { var };
                    batch_mean.push(mean);
                    batch_var_unbiased.push(unbiased);
                    (mean, var)
                }
                Mode::Eval => (self.running_mean[c], self.running_var[c]),
            };
            let is = 1.0 / (var + self.eps).sqrt();
            inv_std[c] = is;
            let (g, b) = (self.gamma.value[c], self.beta.value[c]);
            for (i, v) in xs.iter().enumerate() {
                let h = (v - mean) * is;
                xhat[c * m + i] = h;
                y.data[c * m + i] = g * h + b;
            }
        }
        let cache = BatchNormCache {
            xhat,
            inv_std,
            mode,
            batch_mean,
            batch_var_unbiased,
        };
        (y, cache)
    }

    /// Fold the batch statistics of a train-mode pass into the running estimates.
    pub fn update_running(&mut self, cache: &BatchNormCache) {
        if cache.mode != Mode::Train {
            return;
        }
        for c in 0..self.running_mean.len() {
            self.running_mean[c] = (1.0 - self.momentum) * self.running_mean[c] + self.momentum * cache.batch_mean[c];
            self.running_var[c] =
                (1.0 - self.momentum) * self.running_var[c] + self.momentum * cache.batch_var_unbiased[c];
        }
    }

    pub fn backward(&mut self, cache: &BatchNormCache, dy: &Tensor) -> Tensor {
        let m = dy.batch * dy.plane();
        let mut dx = dy.clone();
        for c in 0..dy.channels {
            let g = &dy.data[c * m..(c + 1) * m];
            let h = &cache.xhat[c * m..(c + 1) * m];
            let sum_g: f64 = g.iter().sum();
            let sum_gh: f64 = g.iter().zip(h).map(|(a, b)| a * b).sum();
            self.gamma.grad[c] += sum_gh;
            self.beta.grad[c] += sum_g;
            let scale = self.gamma.value[c] * cache.inv_std[c];
            let out = &mut dx.data[c * m..(c + 1) * m];
            match cache.mode {
                Mode::Train => {
                    let mf = m as f64;
                    for i in 0..m {
                        out[i] = scale * (g[i] - sum_g / mf - h[i] * sum_gh / mf);
                    }
                }
                Mode::Eval => out.iter_mut().zip(g).for_each(|(o, gi)| *o = scale * gi),
            }
        }
        dx
    }
}

pub fn relu(x: &mut Tensor) {
    x.data.iter_mut().for_each(|v| *v = v.max(0.0));
}

/// Gradient of ReLU given its output.
pub fn relu_backward(y: &Tensor, dy: &mut Tensor) {
    dy.data
        .iter_mut()
        .zip(&y.data)
        .for_each(|(g, &v)| if v <= 0.0 { *g = 0.0 });
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaxPool2d {
    pub kernel: usize,
    pub stride: usize,
}

#[derive(Debug, Clone)]
pub struct PoolCache {
    argmax: Vec<usize>,
    in_shape: (usize, usize, usize, usize),
}

impl MaxPool2d {
    pub fn output_size(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        if h < self.kernel || w < self.kernel {
            return Err(Error::Shape(format!(
                "input {h}x{w} too small for pooling window {}",
                self.kernel
            )));
        }
        Ok(((h - self.kernel) / self.stride + 1, (w - self.kernel) / self.stride + 1))
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, PoolCache)> {
        let (ho, wo) = self.output_size(x.height, x.width)?;
        let mut y = Tensor::zeros(x.channels, x.batch, ho, wo);
        let mut argmax = vec![0; y.len()];
        let plane = x.plane();
        for cn in 0..x.channels * x.batch {
            let base = cn * plane;
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = f64::NEG_INFINITY;
                    let mut at = 0;
                    for ky in 0..self.kernel {
                        for kx in 0..self.kernel {
                            let idx = base + (oy * self.stride + ky) * x.width + ox * self.stride + kx;
                            if x.data[idx] > best {
                                best = x.data[idx];
                                at = idx;
                            }
                        }
                    }
                    let o = (cn * ho + oy) * wo + ox;
                    y.data[o] = best;
                    argmax[o] = at;
                }
            }
        }
        Ok((
            y,
            PoolCache {
                argmax,
                in_shape: (x.channels, x.batch, x.height, x.width),
            },
        ))
    }

    pub fn backward(&self, cache: &PoolCache, dy: &Tensor) -> Tensor {
        let (c, n, h, w) = cache.in_shape;
        let mut dx = Tensor::zeros(c, n, h, w);
        for (g, &at) in dy.data.iter().zip(&cache.argmax) {
            dx.data[at] += g;
        }
        dx
    }
}

/// Mean over spatial positions: `[C, N, H, W]` to an `N x C` matrix.
pub fn global_avg_pool(x: &Tensor) -> Matrix {
    let mut out = Matrix::zeros(x.batch, x.channels);
    let plane = x.plane();
    for c in 0..x.channels {
        for n in 0..x.batch {
            let s: f64 = x.data[(c * x.batch + n) * plane..][..plane].iter().sum();
            out.data[n * x.channels + c] = s / plane as f64;
        }
    }
    out
}

pub fn global_avg_pool_backward(dy: &Matrix, shape: (usize, usize, usize, usize)) -> Tensor {
    let (c, n, h, w) = shape;
    let plane = h * w;
    let mut dx = Tensor::zeros(c, n, h, w);
    for ci in 0..c {
        for ni in 0..n {
            let g = dy.data[ni * c + ci] / plane as f64;
            dx.data[(ci * n + ni) * plane..][..plane].iter_mut().for_each(|v| *v = g);
        }
    }
    dx
}

/// Affine map `y = x W^T + b` on row-per-sample matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub in_features: usize,
    pub out_features: usize,
    /// `[out_features, in_features]`
    pub weight: Param,
    pub bias: Param,
}

impl Linear {
    pub fn new(in_features: usize, out_features: usize, rng: &mut Rng) -> Self {
        let bound = 1.0 / (in_features as f64).sqrt();
        let mut draw = |len: usize| -> Vec<f64> { (0..len).map(|_| rng.random_range(-bound..bound)).collect() };
        let weight = draw(out_features * in_features);
        let bias = draw(out_features);
        Linear {
            in_features,
            out_features,
            weight: Param::new(weight),
            bias: Param::new(bias),
        }
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols != self.in_features {
            return Err(Error::Shape(format!(
                "linear layer expects {} features, got {}",
                self.in_features, x.cols
            )));
        }
        let mut y = Matrix::zeros(x.rows, self.out_features);
        gemm(x.rows, self.in_features, self.out_features, &x.data, false, &self.weight.value, true, 0.0, &mut y.data);
        for r in 0..x.rows {
            y.row_mut(r).iter_mut().zip(&self.bias.value).for_each(|(v, b)| *v += b);
        }
        Ok(y)
    }

    pub fn backward(&mut self, x: &Matrix, dy: &Matrix) -> Matrix {
        gemm(self.out_features, x.rows, self.in_features, &dy.data, true, &x.data, false, 1.0, &mut self.weight.grad);
        for r in 0..dy.rows {
            self.bias.grad.iter_mut().zip(dy.row(r)).for_each(|(g, d)| *g += d);
        }
        let mut dx = Matrix::zeros(x.rows, self.in_features);
        gemm(x.rows, self.out_features, self.in_features, &dy.data, false, &self.weight.value, false, 0.0, &mut dx.data);
        dx
    }
}

pub fn leaky_relu(x: &Matrix, slope: f64) -> Matrix {
    Matrix {
        rows: x.rows,
        cols: x.cols,
        data: x.data.iter().map(|&v| if v > 0.0 { v } else { slope * v }).collect(),
    }
}

/// Gradient of leaky ReLU given its input.
pub fn leaky_relu_backward(x: &Matrix, dy: &Matrix, slope: f64) -> Matrix {
    Matrix {
        rows: dy.rows,
        cols: dy.cols,
        data: x
            .data
            .iter()
            .zip(&dy.data)
            .map(|(&v, &g)| if v > 0.0 { g } else { slope * g })
            .collect(),
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Row-wise softmax.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows {
        let row = out.row_mut(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        row.iter_mut().for_each(|v| *v /= total);
    }
    out
}
