//! Trainable frame encoder: a strided 1-D convolution over input frames
//! followed by a tanh MLP and a linear output head.
//!
//! All parameters live in one flat vector so that the optimizer, the
//! checkpoint format and the finite-difference checks can treat them
//! uniformly. The order is: conv weights `[H][k][F]`, conv bias `[H]`, then
//! for each hidden layer weights `[H][H]` and bias `[H]`, then output
//! weights `[C][H]` and output bias `[C]`.

mod checkpoint;
mod optim;

pub use checkpoint::FORMAT_VERSION;
pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
pub use optim::{optimizer_step, OptimizerState};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderDims {
    /// Input feature dimension F.
    pub features: usize,
    /// Hidden width H.
    pub hidden: usize,
    /// Output classes C.
    pub classes: usize,
    /// Convolution kernel width k.
    pub kernel: usize,
    /// Convolution stride s.
    pub stride: usize,
    /// Number of H -> H feedforward layers d.
    pub depth: usize,
}

impl EncoderDims {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.features,
            self.hidden,
            self.classes,
            self.kernel,
            self.stride,
            self.depth,
        ];
        if all.contains(&0) {
            return Err(Error::invalid("encoder dimensions must be at least 1"));
        }
        if self.kernel < self.stride {
            return Err(Error::invalid("kernel width must be at least the stride"));
        }
        if self.param_count_checked().is_none() {
            return Err(Error::invalid("encoder too large"));
        }
        Ok(())
    }

    fn param_count_checked(&self) -> Option<usize> {
        let conv = self
            .features
            .checked_mul(self.kernel)?
            .checked_mul(self.hidden)?
            .checked_add(self.hidden)?;
        let layer = self
            .hidden
            .checked_mul(self.hidden)?
            .checked_add(self.hidden)?;
        let layers = layer.checked_mul(self.depth)?;
        let head = self
            .hidden
            .checked_mul(self.classes)?
            .checked_add(self.classes)?;
        conv.checked_add(layers)?.checked_add(head)
    }

    /// `F·k·H + H + d·(H·H + H) + H·C + C`.
    pub fn param_count(&self) -> usize {
        self.param_count_checked().expect("validated dims")
    }

    /// Output frames for `input_frames` inputs, `None` when shorter than the kernel.
    pub fn output_frames(&self, input_frames: usize) -> Option<usize> {
        if input_frames < self.kernel {
            None
        } else {
            Some((input_frames - self.kernel) / self.stride + 1)
        }
    }

    fn window(&self) -> usize {
        self.kernel * self.features
    }

    fn conv_w(&self) -> std::ops::Range<usize> {
        0..self.hidden * self.window()
    }

    fn conv_b(&self) -> std::ops::Range<usize> {
        let s = self.conv_w().end;
        s..s + self.hidden
    }

    fn layer_w(&self, l: usize) -> std::ops::Range<usize> {
        let h = self.hidden;
        let s = self.conv_b().end + l * (h * h + h);
        s..s + h * h
    }

    fn layer_b(&self, l: usize) -> std::ops::Range<usize> {
        let s = self.layer_w(l).end;
        s..s + self.hidden
    }

    fn out_w(&self) -> std::ops::Range<usize> {
        let s = self.layer_b(self.depth - 1).end;
        s..s + self.hidden * self.classes
    }

    fn out_b(&self) -> std::ops::Range<usize> {
        let s = self.out_w().end;
        s..s + self.classes
    }
}

/// Encoder weights (or a gradient with the same layout).
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    dims: EncoderDims,
    seed: u64,
    values: Vec<f64>,
}

/// Uniform initialization in `±1/sqrt(fan_in)`, reproducible from `seed`.
pub fn init_encoder(seed: u64, dims: EncoderDims) -> Result<EncoderParams> {
    dims.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = vec![0.0; dims.param_count()];
    let mut fill = |range: std::ops::Range<usize>, fan_in: usize, rng: &mut ChaCha8Rng| {
        let bound = 1.0 / (fan_in as f64).sqrt();
        for v in &mut values[range] {
            *v = rng.gen_range(-bound..bound);
        }
    };
    fill(dims.conv_w(), dims.window(), &mut rng);
    fill(dims.conv_b(), dims.window(), &mut rng);
    for l in 0..dims.depth {
        fill(dims.layer_w(l), dims.hidden, &mut rng);
        fill(dims.layer_b(l), dims.hidden, &mut rng);
    }
    fill(dims.out_w(), dims.hidden, &mut rng);
    fill(dims.out_b(), dims.hidden, &mut rng);
    Ok(EncoderParams { dims, seed, values })
}

impl EncoderParams {
    pub fn zeros(dims: EncoderDims) -> Result<Self> {
        dims.validate()?;
        Ok(EncoderParams {
            dims,
            seed: 0,
            values: vec![0.0; dims.param_count()],
        })
    }

    pub(crate) fn from_parts(dims: EncoderDims, seed: u64, values: Vec<f64>) -> Result<Self> {
        dims.validate()?;
        if values.len() != dims.param_count() {
            return Err(Error::DimensionMismatch {
                expected: dims.param_count(),
                actual: values.len(),
            });
        }
        Ok(EncoderParams { dims, seed, values })
    }

    pub fn dims(&self) -> EncoderDims {
        self.dims
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn param_count(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Same layout, all zeros.
    pub fn zeros_like(&self) -> Self {
        EncoderParams {
            dims: self.dims,
            seed: self.seed,
            values: vec![0.0; self.values.len()],
        }
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &EncoderParams, scale: f64) {
        assert_eq!(self.values.len(), other.values.len());
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += scale * b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.values.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Hidden activations kept from the forward pass for backpropagation.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    /// `acts[0]` is the conv output, `acts[l]` the output of hidden layer `l`.
    acts: Vec<Matrix>,
}

fn check_input(dims: &EncoderDims, features: &Matrix) -> Result<usize> {
    if features.cols() != dims.features {
        return Err(Error::DimensionMismatch {
            expected: dims.features,
            actual: features.cols(),
        });
    }
    dims.output_frames(features.rows())
        .ok_or(Error::InputTooShort {
            frames: features.rows(),
            kernel: dims.kernel,
        })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Logits for every output frame; `T = ceil((T_in - k + 1) / s)`.
pub fn forward(params: &EncoderParams, features: &Matrix) -> Result<Matrix> {
    forward_with_cache(params, features).map(|(logits, _)| logits)
}

pub fn forward_with_cache(
    params: &EncoderParams,
    features: &Matrix,
) -> Result<(Matrix, ForwardCache)> {
    let d = params.dims;
    let t_out = check_input(&d, features)?;
    let v = &params.values;
    let x = features.as_slice();
    let win = d.window();
    let (h, c) = (d.hidden, d.classes);

    let conv_w = &v[d.conv_w()];
    let conv_b = &v[d.conv_b()];
    let mut a0 = Matrix::zeros(t_out, h);
    for t in 0..t_out {
        let start = t * d.stride * d.features;
        let window = &x[start..start + win];
        let row = a0.row_mut(t);
        for (j, out) in row.iter_mut().enumerate() {
            *out = (conv_b[j] + dot(&conv_w[j * win..(j + 1) * win], window)).tanh();
        }
    }
    let mut acts = vec![a0];
    for l in 0..d.depth {
        let w = &v[d.layer_w(l)];
        let b = &v[d.layer_b(l)];
        let prev = acts.last().unwrap();
        let mut next = Matrix::zeros(t_out, h);
        for t in 0..t_out {
            let input = prev.row(t);
            let row = next.row_mut(t);
            for (i, out) in row.iter_mut().enumerate() {
                *out = (b[i] + dot(&w[i * h..(i + 1) * h], input)).tanh();
            }
        }
        acts.push(next);
    }
    let w = &v[d.out_w()];
    let b = &v[d.out_b()];
    let last = acts.last().unwrap();
    let mut logits = Matrix::zeros(t_out, c);
    for t in 0..t_out {
        let input = last.row(t);
        let row = logits.row_mut(t);
        for (k, out) in row.iter_mut().enumerate() {
            *out = b[k] + dot(&w[k * h..(k + 1) * h], input);
        }
    }
    Ok((logits, ForwardCache { acts }))
}

/// Gradient of a scalar loss with respect to all parameters, given the
/// loss gradient with respect to the logits.
pub fn backward(
    params: &EncoderParams,
    features: &Matrix,
    grad_logits: &Matrix,
) -> Result<EncoderParams> {
    let (_, cache) = forward_with_cache(params, features)?;
    backward_with_cache(params, features, &cache, grad_logits)
}

pub fn backward_with_cache(
    params: &EncoderParams,
    features: &Matrix,
    cache: &ForwardCache,
    grad_logits: &Matrix,
) -> Result<EncoderParams> {
    let d = params.dims;
    let t_out = check_input(&d, features)?;
    if grad_logits.rows() != t_out || grad_logits.cols() != d.classes {
        return Err(Error::DimensionMismatch {
            expected: t_out * d.classes,
            actual: grad_logits.rows() * grad_logits.cols(),
        });
    }
    let v = &params.values;
    let mut g = params.zeros_like();
    let (h, c) = (d.hidden, d.classes);

    // output head
    let last = cache.acts.last().unwrap();
    let out_w = &v[d.out_w()];
    let mut delta = Matrix::zeros(t_out, h);
    {
        let (gw_range, gb_range) = (d.out_w(), d.out_b());
        for t in 0..t_out {
            let gl = grad_logits.row(t);
            let a = last.row(t);
            let dr = delta.row_mut(t);
            for k in 0..c {
                let gk = gl[k];
                if gk == 0.0 {
                    continue;
                }
                g.values[gb_range.start + k] += gk;
                let gw = &mut g.values[gw_range.start + k * h..gw_range.start + (k + 1) * h];
                let wrow = &out_w[k * h..(k + 1) * h];
                for i in 0..h {
                    gw[i] += gk * a[i];
                    dr[i] += gk * wrow[i];
                }
            }
        }
    }

    // hidden layers, last to first
    for l in (0..d.depth).rev() {
        let a_out = &cache.acts[l + 1];
        let a_in = &cache.acts[l];
        let w = &v[d.layer_w(l)];
        let (gw_range, gb_range) = (d.layer_w(l), d.layer_b(l));
        let mut prev_delta = Matrix::zeros(t_out, h);
        for t in 0..t_out {
            let ao = a_out.row(t);
            let ai = a_in.row(t);
            let dr = delta.row(t);
            let pd = prev_delta.row_mut(t);
            for i in 0..h {
                let gz = dr[i] * (1.0 - ao[i] * ao[i]);
                if gz == 0.0 {
                    continue;
                }
                g.values[gb_range.start + i] += gz;
                let gw = &mut g.values[gw_range.start + i * h..gw_range.start + (i + 1) * h];
                let wrow = &w[i * h..(i + 1) * h];
                for j in 0..h {
                    gw[j] += gz * ai[j];
                    pd[j] += gz * wrow[j];
                }
            }
        }
        delta = prev_delta;
    }

    // convolution
    let a0 = &cache.acts[0];
    let x = features.as_slice();
    let win = d.window();
    let (gw_range, gb_range) = (d.conv_w(), d.conv_b());
    for t in 0..t_out {
        let start = t * d.stride * d.features;
        let window = &x[start..start + win];
        let ar = a0.row(t);
        let dr = delta.row(t);
        for j in 0..h {
            let gz = dr[j] * (1.0 - ar[j] * ar[j]);
            if gz == 0.0 {
                continue;
            }
            g.values[gb_range.start + j] += gz;
            let gw = &mut g.values[gw_range.start + j * win..gw_range.start + (j + 1) * win];
            for (gwi, xi) in gw.iter_mut().zip(window) {
                *gwi += gz * xi;
            }
        }
    }
    Ok(g)
}

/// Repeats every input frame `factor` times along the time axis.
pub fn upsample_frames(features: &Matrix, factor: usize) -> Matrix {
    if factor <= 1 {
        return features.clone();
    }
    let mut data = Vec::with_capacity(features.rows() * factor * features.cols());
    for row in features.iter_rows() {
        for _ in 0..factor {
            data.extend_from_slice(row);
        }
    }
    Matrix::from_vec(features.rows() * factor, features.cols(), data)
}

/// Adds `left` and `right` zero (silence) frames around the input.
pub fn pad_frames(features: &Matrix, left: usize, right: usize) -> Matrix {
    let f = features.cols();
    let mut data = vec![0.0; left * f];
    data.extend_from_slice(features.as_slice());
    data.resize(data.len() + right * f, 0.0);
    Matrix::from_vec(features.rows() + left + right, f, data)
}

/// Upsamples by `factor`, then pads so that a stride-1 encoder with this
/// kernel emits one output frame per upsampled input frame.
pub fn prepare_input(features: &Matrix, factor: usize, kernel: usize) -> Matrix {
    let up = upsample_frames(features, factor);
    let left = kernel.saturating_sub(1) / 2;
    pad_frames(&up, left, kernel.saturating_sub(1) - left)
}
