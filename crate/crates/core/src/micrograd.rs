//! Small explicit-backward layer kit: tensors, 3×3 convolutions with
//! replicate padding, activations, pooling, dense layers, MSE, Adam, a
//! finite-difference gradient checker and the `FCKPT1` checkpoint format.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Dense row-major tensor. Image-like tensors use shape `[C, H, W]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::Shape(format!("invalid shape {shape:?}")));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!("shape {shape:?} needs {n} values, got {}", data.len())));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self { shape: shape.to_vec(), data: vec![0.0; shape.iter().product()] }
    }

    pub fn randn(shape: &[usize], std: f64, rng: &mut impl Rng) -> Self {
        let normal = Normal::new(0.0, std).expect("finite std");
        let n = shape.iter().product();
        Self { shape: shape.to_vec(), data: (0..n).map(|_| normal.sample(rng)).collect() }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `(C, H, W)` of a rank-3 tensor.
    pub fn chw(&self) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [c, h, w] => Ok((c, h, w)),
            _ => Err(Error::Shape(format!("expected [C,H,W], got {:?}", self.shape))),
        }
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        same_shape(self, other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }
}

fn same_shape(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape != b.shape {
        return Err(Error::Shape(format!("{:?} vs {:?}", a.shape, b.shape)));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// conv2d (3×3, replicate padding 1)
// ---------------------------------------------------------------------------

/// Trainable 3×3 convolution, weights `[C_out, C_in, 3, 3]`, bias `[C_out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Conv2d {
    pub fn zeros(c_in: usize, c_out: usize) -> Self {
        Self { weight: Tensor::zeros(&[c_out, c_in, 3, 3]), bias: Tensor::zeros(&[c_out]) }
    }

    /// He-normal weights, zero bias.
    pub fn he(c_in: usize, c_out: usize, rng: &mut impl Rng) -> Self {
        let std = (2.0 / (9 * c_in) as f64).sqrt();
        Self::gaussian(c_in, c_out, std, rng)
    }

    pub fn gaussian(c_in: usize, c_out: usize, std: f64, rng: &mut impl Rng) -> Self {
        Self { weight: Tensor::randn(&[c_out, c_in, 3, 3], std, rng), bias: Tensor::zeros(&[c_out]) }
    }

    pub fn c_in(&self) -> usize {
        self.weight.shape[1]
    }

    pub fn c_out(&self) -> usize {
        self.weight.shape[0]
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        conv2d_forward(input, &self.weight, &self.bias)
    }

    pub fn backward(&self, input: &Tensor, grad_out: &Tensor) -> Result<ConvGrads> {
        conv2d_backward(grad_out, input, &self.weight)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
}

fn check_conv_shapes(input: &Tensor, kernels: &Tensor) -> Result<(usize, usize, usize, usize)> {
    let (c_in, h, w) = input.chw()?;
    match kernels.shape[..] {
        [c_out, k_in, 3, 3] if k_in == c_in => Ok((c_in, c_out, h, w)),
        _ => Err(Error::Shape(format!(
            "kernels {:?} incompatible with input {:?}",
            kernels.shape, input.shape
        ))),
    }
}

/// Clamped source index for each of the three taps along an axis of length `n`.
#[inline]
fn taps(i: usize, n: usize) -> [usize; 3] {
    [i.saturating_sub(1), i, (i + 1).min(n - 1)]
}

pub fn conv2d_forward(input: &Tensor, kernels: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (c_in, c_out, h, w) = check_conv_shapes(input, kernels)?;
    if bias.shape != [c_out] {
        return Err(Error::Shape(format!("bias {:?} for {c_out} output channels", bias.shape)));
    }
    let x = &input.data;
    let k = &kernels.data;
    let mut out = vec![0.0; c_out * h * w];
    for o in 0..c_out {
        let plane = &mut out[o * h * w..(o + 1) * h * w];
        plane.fill(bias.data[o]);
        for c in 0..c_in {
            let src = &x[c * h * w..(c + 1) * h * w];
            let kk = &k[(o * c_in + c) * 9..(o * c_in + c + 1) * 9];
            for i in 0..h {
                let rows = taps(i, h);
                for j in 0..w {
                    let cols = taps(j, w);
                    let mut acc = 0.0;
                    for (a, &r) in rows.iter().enumerate() {
                        let base = r * w;
                        acc += kk[a * 3] * src[base + cols[0]]
                            + kk[a * 3 + 1] * src[base + cols[1]]
                            + kk[a * 3 + 2] * src[base + cols[2]];
                    }
                    plane[i * w + j] += acc;
                }
            }
        }
    }
    Tensor::new(vec![c_out, h, w], out)
}

pub fn conv2d_backward(grad_out: &Tensor, input: &Tensor, kernels: &Tensor) -> Result<ConvGrads> {
    let (c_in, c_out, h, w) = check_conv_shapes(input, kernels)?;
    if grad_out.shape != [c_out, h, w] {
        return Err(Error::Shape(format!(
            "grad_out {:?}, expected [{c_out}, {h}, {w}]",
            grad_out.shape
        )));
    }
    let x = &input.data;
    let k = &kernels.data;
    let g = &grad_out.data;
    let mut gx = vec![0.0; c_in * h * w];
    let mut gk = vec![0.0; c_out * c_in * 9];
    let mut gb = vec![0.0; c_out];
    for o in 0..c_out {
        let go = &g[o * h * w..(o + 1) * h * w];
        gb[o] = go.iter().sum();
        for c in 0..c_in {
            let src = &x[c * h * w..(c + 1) * h * w];
            let kk = &k[(o * c_in + c) * 9..(o * c_in + c + 1) * 9];
            let gsrc = &mut gx[c * h * w..(c + 1) * h * w];
            let gkk = &mut gk[(o * c_in + c) * 9..(o * c_in + c + 1) * 9];
            for i in 0..h {
                let rows = taps(i, h);
                for j in 0..w {
                    let gv = go[i * w + j];
                    if gv == 0.0 {
                        continue;
                    }
                    let cols = taps(j, w);
                    for (a, &r) in rows.iter().enumerate() {
                        for (b, &cc) in cols.iter().enumerate() {
                            let idx = r * w + cc;
                            gkk[a * 3 + b] += gv * src[idx];
                            // padding adjoint: clamped taps accumulate into the edge pixel
                            gsrc[idx] += gv * kk[a * 3 + b];
                        }
                    }
                }
            }
        }
    }
    Ok(ConvGrads {
        input: Tensor::new(vec![c_in, h, w], gx)?,
        weight: Tensor::new(vec![c_out, c_in, 3, 3], gk)?,
        bias: Tensor::new(vec![c_out], gb)?,
    })
}

// ---------------------------------------------------------------------------
// element-wise and pooling
// ---------------------------------------------------------------------------

pub fn relu_forward(x: &Tensor) -> Tensor {
    Tensor { shape: x.shape.clone(), data: x.data.iter().map(|v| v.max(0.0)).collect() }
}

/// Passes gradient where the forward input was strictly positive.
pub fn relu_backward(grad_out: &Tensor, input: &Tensor) -> Result<Tensor> {
    same_shape(grad_out, input)?;
    let data = grad_out
        .data
        .iter()
        .zip(&input.data)
        .map(|(g, x)| if *x > 0.0 { *g } else { 0.0 })
        .collect();
    Ok(Tensor { shape: input.shape.clone(), data })
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid_forward(x: &Tensor) -> Tensor {
    Tensor { shape: x.shape.clone(), data: x.data.iter().map(|&v| sigmoid(v)).collect() }
}

/// Uses the forward *output* `y`: dy/dx = y(1 − y).
pub fn sigmoid_backward(grad_out: &Tensor, output: &Tensor) -> Result<Tensor> {
    same_shape(grad_out, output)?;
    let data = grad_out.data.iter().zip(&output.data).map(|(g, y)| g * y * (1.0 - y)).collect();
    Ok(Tensor { shape: output.shape.clone(), data })
}

pub fn avgpool2_forward(x: &Tensor) -> Result<Tensor> {
    let (c, h, w) = x.chw()?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Shape(format!("avgpool2 needs even H, W; got {h}x{w}")));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![0.0; c * oh * ow];
    for ch in 0..c {
        let src = &x.data[ch * h * w..(ch + 1) * h * w];
        for i in 0..oh {
            for j in 0..ow {
                let (r, s) = (2 * i, 2 * j);
                out[ch * oh * ow + i * ow + j] =
                    0.25 * (src[r * w + s] + src[r * w + s + 1] + src[(r + 1) * w + s] + src[(r + 1) * w + s + 1]);
            }
        }
    }
    Tensor::new(vec![c, oh, ow], out)
}

pub fn avgpool2_backward(grad_out: &Tensor, input_shape: &[usize]) -> Result<Tensor> {
    let (c, oh, ow) = grad_out.chw()?;
    if input_shape != [c, 2 * oh, 2 * ow] {
        return Err(Error::Shape(format!("grad {:?} vs input {input_shape:?}", grad_out.shape)));
    }
    let (h, w) = (2 * oh, 2 * ow);
    let mut gx = vec![0.0; c * h * w];
    for ch in 0..c {
        for i in 0..h {
            for j in 0..w {
                gx[ch * h * w + i * w + j] = 0.25 * grad_out.data[ch * oh * ow + (i / 2) * ow + j / 2];
            }
        }
    }
    Tensor::new(input_shape.to_vec(), gx)
}

/// Stacks along the channel axis.
pub fn concat_channels(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (ca, h, w) = a.chw()?;
    let (cb, hb, wb) = b.chw()?;
    if (h, w) != (hb, wb) {
        return Err(Error::Shape(format!("concat {:?} with {:?}", a.shape, b.shape)));
    }
    let mut data = Vec::with_capacity(a.len() + b.len());
    data.extend_from_slice(&a.data);
    data.extend_from_slice(&b.data);
    Tensor::new(vec![ca + cb, h, w], data)
}

/// Adjoint of [`concat_channels`]: splits after the first `c_first` channels.
pub fn split_channels_grad(grad: &Tensor, c_first: usize) -> Result<(Tensor, Tensor)> {
    let (c, h, w) = grad.chw()?;
    if c_first == 0 || c_first >= c {
        return Err(Error::Shape(format!("cannot split {c} channels at {c_first}")));
    }
    let cut = c_first * h * w;
    Ok((
        Tensor::new(vec![c_first, h, w], grad.data[..cut].to_vec())?,
        Tensor::new(vec![c - c_first, h, w], grad.data[cut..].to_vec())?,
    ))
}

// ---------------------------------------------------------------------------
// dense
// ---------------------------------------------------------------------------

/// `y = W x + b` with `W: [out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearGrads {
    pub input: Vec<f64>,
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Self { weight: Tensor::zeros(&[n_out, n_in]), bias: Tensor::zeros(&[n_out]) }
    }

    pub fn he(n_in: usize, n_out: usize, rng: &mut impl Rng) -> Self {
        let std = (2.0 / n_in as f64).sqrt();
        Self { weight: Tensor::randn(&[n_out, n_in], std, rng), bias: Tensor::zeros(&[n_out]) }
    }

    pub fn n_in(&self) -> usize {
        self.weight.shape[1]
    }

    pub fn n_out(&self) -> usize {
        self.weight.shape[0]
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        linear_forward(x, &self.weight, &self.bias)
    }

    pub fn backward(&self, x: &[f64], grad_out: &[f64]) -> Result<LinearGrads> {
        linear_backward(grad_out, x, &self.weight)
    }
}

pub fn linear_forward(x: &[f64], weight: &Tensor, bias: &Tensor) -> Result<Vec<f64>> {
    let (n_out, n_in) = match weight.shape[..] {
        [o, i] => (o, i),
        _ => return Err(Error::Shape(format!("weight {:?} is not a matrix", weight.shape))),
    };
    if x.len() != n_in || bias.shape != [n_out] {
        return Err(Error::Shape(format!(
            "linear {n_in}->{n_out} with input {} and bias {:?}",
            x.len(),
            bias.shape
        )));
    }
    Ok((0..n_out)
        .map(|o| {
            let row = &weight.data[o * n_in..(o + 1) * n_in];
            bias.data[o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
        })
        .collect())
}

pub fn linear_backward(grad_out: &[f64], x: &[f64], weight: &Tensor) -> Result<LinearGrads> {
    let (n_out, n_in) = match weight.shape[..] {
        [o, i] => (o, i),
        _ => return Err(Error::Shape(format!("weight {:?} is not a matrix", weight.shape))),
    };
    if grad_out.len() != n_out || x.len() != n_in {
        return Err(Error::Shape(format!(
            "linear {n_in}->{n_out} backward with grad {} and input {}",
            grad_out.len(),
            x.len()
        )));
    }
    let mut gx = vec![0.0; n_in];
    let mut gw = vec![0.0; n_out * n_in];
    for o in 0..n_out {
        let g = grad_out[o];
        let row = &weight.data[o * n_in..(o + 1) * n_in];
        for i in 0..n_in {
            gx[i] += g * row[i];
            gw[o * n_in + i] = g * x[i];
        }
    }
    Ok(LinearGrads {
        input: gx,
        weight: Tensor::new(vec![n_out, n_in], gw)?,
        bias: Tensor::new(vec![n_out], grad_out.to_vec())?,
    })
}

pub fn relu_vec(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.max(0.0)).collect()
}

pub fn relu_vec_backward(grad_out: &[f64], input: &[f64]) -> Vec<f64> {
    grad_out.iter().zip(input).map(|(g, x)| if *x > 0.0 { *g } else { 0.0 }).collect()
}

// ---------------------------------------------------------------------------
// loss
// ---------------------------------------------------------------------------

/// Mean squared error and its gradient with respect to `a`.
pub fn mse_loss(a: &Tensor, b: &Tensor) -> Result<(f64, Tensor)> {
    same_shape(a, b)?;
    let n = a.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(a.len());
    for (x, y) in a.data.iter().zip(&b.data) {
        let d = x - y;
        loss += d * d;
        grad.push(2.0 * d / n);
    }
    Ok((loss / n, Tensor { shape: a.shape.clone(), data: grad }))
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Moment buffers for one parameter list; shapes are fixed on the first step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step: u64,
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Bias-corrected Adam descent step: `p ← p − lr·m̂/(√v̂ + ε)`.
    pub fn update(&mut self, params: &mut [&mut Tensor], grads: &[Tensor], lr: f64) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::Shape(format!("{} params vs {} grads", params.len(), grads.len())));
        }
        for (p, g) in params.iter().zip(grads) {
            same_shape(p, g)?;
        }
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| Tensor::zeros(&g.shape)).collect();
            self.v = self.m.clone();
        } else if self.m.len() != grads.len() || self.m.iter().zip(grads).any(|(m, g)| m.shape != g.shape) {
            return Err(Error::Shape("parameter list changed between Adam steps".into()));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - ADAM_BETA1.powi(t);
        let c2 = 1.0 - ADAM_BETA2.powi(t);
        for (k, p) in params.iter_mut().enumerate() {
            let (m, v, g) = (&mut self.m[k].data, &mut self.v[k].data, &grads[k].data);
            for i in 0..g.len() {
                m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
                v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                p.data[i] -= lr * mh / (vh.sqrt() + ADAM_EPS);
            }
        }
        Ok(())
    }
}

/// Functional form of [`AdamState::update`].
pub fn adam_step(params: &[Tensor], grads: &[Tensor], state: &AdamState, lr: f64) -> Result<(Vec<Tensor>, AdamState)> {
    let mut p = params.to_vec();
    let mut s = state.clone();
    let mut refs: Vec<&mut Tensor> = p.iter_mut().collect();
    s.update(&mut refs, grads, lr)?;
    Ok((p, s))
}

// ---------------------------------------------------------------------------
// gradient checking
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Largest `|analytic − numeric| / max(|analytic|, |numeric|, floor)`.
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tolerance
    }
}

pub const FD_STEP: f64 = 1e-4;
/// Magnitudes below this are compared absolutely.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

pub fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(GRAD_CHECK_FLOOR)
}

/// Compares `f`'s analytic gradient at `params` against central differences
/// with step [`FD_STEP`]. `f` returns `(value, gradient)`.
pub fn grad_check<F>(mut f: F, params: &[f64], tolerance: f64) -> GradCheckReport
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let (_, analytic) = f(params);
    assert_eq!(analytic.len(), params.len(), "gradient length must match parameters");
    let mut x = params.to_vec();
    let mut numeric = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let orig = x[i];
        x[i] = orig + FD_STEP;
        let (fp, _) = f(&x);
        x[i] = orig - FD_STEP;
        let (fm, _) = f(&x);
        x[i] = orig;
        numeric.push((fp - fm) / (2.0 * FD_STEP));
    }
    let (worst_index, max_rel_error) = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| relative_error(*a, *n))
        .enumerate()
        .fold((0, 0.0), |acc, (i, e)| if e > acc.1 { (i, e) } else { acc });
    GradCheckReport { max_rel_error, worst_index, analytic, numeric, tolerance }
}

// ---------------------------------------------------------------------------
// FCKPT1 checkpoints
// ---------------------------------------------------------------------------

pub const CKPT_MAGIC: &[u8; 6] = b"FCKPT1";

/// Serialises named tensors: magic, then per record `u32` name length,
/// UTF-8 name, `u32` rank, `u64` dims, `f64` values, all little-endian.
pub fn encode_checkpoint(tensors: &[(String, Tensor)]) -> Vec<u8> {
    let mut out = CKPT_MAGIC.to_vec();
    for (name, t) in tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
        for &d in &t.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct ByteCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteCursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Parse("truncated checkpoint".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Vec<(String, Tensor)>> {
    if bytes.len() < CKPT_MAGIC.len() || &bytes[..CKPT_MAGIC.len()] != CKPT_MAGIC {
        return Err(Error::Parse("missing FCKPT1 magic".into()));
    }
    let mut rd = ByteCursor { bytes, pos: CKPT_MAGIC.len() };
    let mut out = Vec::new();
    while rd.pos < bytes.len() {
        let name_len = u32::from_le_bytes(rd.take(4)?.try_into().unwrap()) as usize;
        let name = String::from_utf8(rd.take(name_len)?.to_vec())
            .map_err(|_| Error::Parse("tensor name is not UTF-8".into()))?;
        let rank = u32::from_le_bytes(rd.take(4)?.try_into().unwrap()) as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(u64::from_le_bytes(rd.take(8)?.try_into().unwrap()) as usize);
        }
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(f64::from_le_bytes(rd.take(8)?.try_into().unwrap()));
        }
        let t = Tensor::new(shape, data).map_err(|e| Error::Parse(format!("tensor {name}: {e}")))?;
        out.push((name, t));
    }
    Ok(out)
}

pub fn save_checkpoint(tensors: &[(String, Tensor)], path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_checkpoint(tensors))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Vec<(String, Tensor)>> {
    decode_checkpoint(&fs::read(path)?)
}

/// Looks up `name` in a decoded checkpoint and checks its shape.
pub fn take_tensor(records: &[(String, Tensor)], name: &str, shape: &[usize]) -> Result<Tensor> {
    let t = records
        .iter()
        .find(|(n, _)| n == name)
        .map(|(_, t)| t.clone())
        .ok_or_else(|| Error::Parse(format!("checkpoint lacks tensor {name}")))?;
    if t.shape != shape {
        return Err(Error::Shape(format!("tensor {name} has shape {:?}, expected {shape:?}", t.shape)));
    }
    Ok(t)
}
