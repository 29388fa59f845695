//! Student fusion network, teacher stand-ins, the frozen feature pyramid
//! and the distillation / self-learning losses.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::degrade::gaussian_blur;
use crate::error::{Error, Result};
use crate::filters;
use crate::imgio::{load_pgm, require_same_dims, Image};
use crate::micrograd::{
    avgpool2_backward, avgpool2_forward, concat_channels, load_checkpoint, relu_backward, relu_forward,
    save_checkpoint, sigmoid_backward, sigmoid_forward, split_channels_grad, take_tensor, Conv2d, Tensor,
};

pub fn image_to_tensor(img: &Image) -> Tensor {
    Tensor::new(vec![1, img.height(), img.width()], img.data().to_vec()).expect("image is non-empty")
}

/// Converts a single-channel tensor to an [`Image`], clamping into `[0, 1]`.
pub fn tensor_to_image(t: &Tensor) -> Result<Image> {
    let (c, h, w) = t.chw()?;
    if c != 1 {
        return Err(Error::Shape(format!("expected one channel, got {c}")));
    }
    Image::from_clamped(h, w, t.data().to_vec())
}

// ---------------------------------------------------------------------------
// student
// ---------------------------------------------------------------------------

const ENC_WIDTH: usize = 8;

/// Two-conv encoder, ReLU after each conv.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub conv1: Conv2d,
    pub conv2: Conv2d,
}

#[derive(Debug, Clone)]
struct EncoderCache {
    input: Tensor,
    pre1: Tensor,
    act1: Tensor,
    pre2: Tensor,
}

impl Encoder {
    fn forward(&self, x: &Tensor) -> Result<(Tensor, EncoderCache)> {
        let pre1 = self.conv1.forward(x)?;
        let act1 = relu_forward(&pre1);
        let pre2 = self.conv2.forward(&act1)?;
        let out = relu_forward(&pre2);
        Ok((out, EncoderCache { input: x.clone(), pre1, act1, pre2 }))
    }

    /// Returns `[conv1.w, conv1.b, conv2.w, conv2.b]` gradients.
    fn backward(&self, cache: &EncoderCache, grad_out: &Tensor) -> Result<Vec<Tensor>> {
        let g = relu_backward(grad_out, &cache.pre2)?;
        let c2 = self.conv2.backward(&cache.act1, &g)?;
        let g = relu_backward(&c2.input, &cache.pre1)?;
        let c1 = self.conv1.backward(&cache.input, &g)?;
        Ok(vec![c1.weight, c1.bias, c2.weight, c2.bias])
    }
}

/// Dual-branch micro fusion network: separate IR/VI encoders, channel
/// concatenation (VI first), and a two-conv decoder ending in a sigmoid.
#[derive(Debug, Clone, PartialEq)]
pub struct StudentNet {
    pub encoder_vi: Encoder,
    pub encoder_ir: Encoder,
    pub dec1: Conv2d,
    pub dec2: Conv2d,
}

/// Intermediate activations of one student forward pass.
#[derive(Debug, Clone)]
pub struct StudentCache {
    vi: EncoderCache,
    ir: EncoderCache,
    cat: Tensor,
    pre3: Tensor,
    act3: Tensor,
    out: Tensor,
}

impl StudentCache {
    pub fn output(&self) -> &Tensor {
        &self.out
    }
}

pub const STUDENT_PARAM_NAMES: [&str; 12] = [
    "student.enc_vi.conv1.weight",
    "student.enc_vi.conv1.bias",
    "student.enc_vi.conv2.weight",
    "student.enc_vi.conv2.bias",
    "student.enc_ir.conv1.weight",
    "student.enc_ir.conv1.bias",
    "student.enc_ir.conv2.weight",
    "student.enc_ir.conv2.bias",
    "student.dec.conv1.weight",
    "student.dec.conv1.bias",
    "student.dec.conv2.weight",
    "student.dec.conv2.bias",
];

impl StudentNet {
    /// He-initialised weights from a seeded ChaCha8 stream.
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut enc = || Encoder {
            conv1: Conv2d::he(1, ENC_WIDTH, &mut rng),
            conv2: Conv2d::he(ENC_WIDTH, ENC_WIDTH, &mut rng),
        };
        let encoder_vi = enc();
        let encoder_ir = enc();
        Self {
            encoder_vi,
            encoder_ir,
            dec1: Conv2d::he(2 * ENC_WIDTH, ENC_WIDTH, &mut rng),
            dec2: Conv2d::he(ENC_WIDTH, 1, &mut rng),
        }
    }

    pub fn zeros() -> Self {
        let enc = || Encoder { conv1: Conv2d::zeros(1, ENC_WIDTH), conv2: Conv2d::zeros(ENC_WIDTH, ENC_WIDTH) };
        Self {
            encoder_vi: enc(),
            encoder_ir: enc(),
            dec1: Conv2d::zeros(2 * ENC_WIDTH, ENC_WIDTH),
            dec2: Conv2d::zeros(ENC_WIDTH, 1),
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut v = Vec::with_capacity(12);
        for c in [
            &self.encoder_vi.conv1,
            &self.encoder_vi.conv2,
            &self.encoder_ir.conv1,
            &self.encoder_ir.conv2,
            &self.dec1,
            &self.dec2,
        ] {
            v.push(&c.weight);
            v.push(&c.bias);
        }
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = Vec::with_capacity(12);
        for c in [
            &mut self.encoder_vi.conv1,
            &mut self.encoder_vi.conv2,
            &mut self.encoder_ir.conv1,
            &mut self.encoder_ir.conv2,
            &mut self.dec1,
            &mut self.dec2,
        ] {
            v.push(&mut c.weight);
            v.push(&mut c.bias);
        }
        v
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    /// All parameters concatenated in [`STUDENT_PARAM_NAMES`] order.
    pub fn flat_params(&self) -> Vec<f64> {
        self.params().iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Shape(format!("{} values for {} parameters", flat.len(), self.param_count())));
        }
        let mut off = 0;
        for t in self.params_mut() {
            let n = t.len();
            t.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    pub fn forward_tensors(&self, ir: &Tensor, vi: &Tensor) -> Result<StudentCache> {
        if ir.shape() != vi.shape() {
            return Err(Error::Dimension(format!("ir {:?} vs vi {:?}", ir.shape(), vi.shape())));
        }
        let (fv, vi_cache) = self.encoder_vi.forward(vi)?;
        let (fi, ir_cache) = self.encoder_ir.forward(ir)?;
        let cat = concat_channels(&fv, &fi)?;
        let pre3 = self.dec1.forward(&cat)?;
        let act3 = relu_forward(&pre3);
        let pre4 = self.dec2.forward(&act3)?;
        let out = sigmoid_forward(&pre4);
        Ok(StudentCache { vi: vi_cache, ir: ir_cache, cat, pre3, act3, out })
    }

    /// Parameter gradients (in [`Self::params`] order) for `grad_out`, the
    /// loss gradient with respect to the fused output.
    pub fn backward(&self, cache: &StudentCache, grad_out: &Tensor) -> Result<Vec<Tensor>> {
        let g = sigmoid_backward(grad_out, &cache.out)?;
        let d2 = self.dec2.backward(&cache.act3, &g)?;
        let g = relu_backward(&d2.input, &cache.pre3)?;
        let d1 = self.dec1.backward(&cache.cat, &g)?;
        let (g_vi, g_ir) = split_channels_grad(&d1.input, ENC_WIDTH)?;
        let mut grads = self.encoder_vi.backward(&cache.vi, &g_vi)?;
        grads.extend(self.encoder_ir.backward(&cache.ir, &g_ir)?);
        grads.extend([d1.weight, d1.bias, d2.weight, d2.bias]);
        Ok(grads)
    }

    pub fn forward(&self, ir: &Image, vi: &Image) -> Result<Image> {
        require_same_dims(ir, vi)?;
        let (h, w) = (ir.height(), ir.width());
        if h < 16 || w < 16 || h % 2 != 0 || w % 2 != 0 {
            return Err(Error::Dimension(format!("student needs even dimensions >= 16, got {h}x{w}")));
        }
        let cache = self.forward_tensors(&image_to_tensor(ir), &image_to_tensor(vi))?;
        tensor_to_image(&cache.out)
    }

    pub fn named_tensors(&self) -> Vec<(String, Tensor)> {
        STUDENT_PARAM_NAMES.iter().zip(self.params()).map(|(n, t)| (n.to_string(), t.clone())).collect()
    }

    pub fn from_named(records: &[(String, Tensor)]) -> Result<Self> {
        let mut net = Self::zeros();
        let names = STUDENT_PARAM_NAMES;
        for (name, slot) in names.iter().zip(net.params_mut()) {
            *slot = take_tensor(records, name, slot.shape())?;
        }
        Ok(net)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_checkpoint(&self.named_tensors(), path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_named(&load_checkpoint(path)?)
    }
}

// ---------------------------------------------------------------------------
// feature pyramid
// ---------------------------------------------------------------------------

pub const PYRAMID_WIDTHS: [usize; 5] = [8, 16, 32, 32, 32];
pub const PYRAMID_INIT_STD: f64 = 0.2;
pub const PYRAMID_SEED: u64 = 0x5EED_F00D;

/// Frozen five-stage random conv stack standing in for the VGG tap layers.
/// Stage ℓ > 1 is preceded by a 2×2 average pool.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePyramid {
    pub stages: Vec<Conv2d>,
}

#[derive(Debug, Clone)]
pub struct PyramidCache {
    /// Input to each stage's convolution.
    inputs: Vec<Tensor>,
    /// Pre-activation of each stage.
    pre: Vec<Tensor>,
    /// Stage outputs (the compared features).
    pub features: Vec<Tensor>,
}

impl Default for FeaturePyramid {
    fn default() -> Self {
        Self::new(PYRAMID_SEED)
    }
}

impl FeaturePyramid {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut c_in = 1;
        let stages = PYRAMID_WIDTHS
            .iter()
            .map(|&c_out| {
                let s = Conv2d::gaussian(c_in, c_out, PYRAMID_INIT_STD, &mut rng);
                c_in = c_out;
                s
            })
            .collect();
        Self { stages }
    }

    pub fn forward(&self, x: &Tensor) -> Result<PyramidCache> {
        let mut inputs = Vec::with_capacity(5);
        let mut pre = Vec::with_capacity(5);
        let mut features: Vec<Tensor> = Vec::with_capacity(5);
        for (l, stage) in self.stages.iter().enumerate() {
            let input = if l == 0 { x.clone() } else { avgpool2_forward(&features[l - 1])? };
            let p = stage.forward(&input)?;
            features.push(relu_forward(&p));
            pre.push(p);
            inputs.push(input);
        }
        Ok(PyramidCache { inputs, pre, features })
    }

    /// Gradient with respect to the pyramid input given per-stage feature gradients.
    pub fn backward(&self, cache: &PyramidCache, stage_grads: &[Tensor]) -> Result<Tensor> {
        if stage_grads.len() != self.stages.len() {
            return Err(Error::Shape(format!("{} stage gradients for 5 stages", stage_grads.len())));
        }
        let mut carry: Option<Tensor> = None;
        for l in (0..self.stages.len()).rev() {
            let mut g = stage_grads[l].clone();
            if let Some(c) = carry.take() {
                g.add_assign(&c)?;
            }
            let g = relu_backward(&g, &cache.pre[l])?;
            let gin = self.stages[l].backward(&cache.inputs[l], &g)?.input;
            carry = Some(if l == 0 { gin } else { avgpool2_backward(&gin, cache.features[l - 1].shape())? });
        }
        Ok(carry.expect("five stages"))
    }
}

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

fn check_pyramid_dims(img: &Image) -> Result<()> {
    if !img.height().is_multiple_of(16) || !img.width().is_multiple_of(16) {
        return Err(Error::Dimension(format!(
            "teacher-guidance loss needs dimensions divisible by 16, got {}x{}",
            img.height(),
            img.width()
        )));
    }
    Ok(())
}

/// Sum over stages of the Euclidean norm of the feature difference, with
/// the gradient with respect to `student` (teacher features are constants).
pub fn teacher_guidance_from_features(
    pyr: &FeaturePyramid,
    student: &Tensor,
    teacher_features: &[Tensor],
) -> Result<(f64, Tensor)> {
    let cache = pyr.forward(student)?;
    let mut loss = 0.0;
    let mut stage_grads = Vec::with_capacity(5);
    for (fs, ft) in cache.features.iter().zip(teacher_features) {
        if fs.shape() != ft.shape() {
            return Err(Error::Shape(format!("feature {:?} vs {:?}", fs.shape(), ft.shape())));
        }
        let diff: Vec<f64> = fs.data().iter().zip(ft.data()).map(|(a, b)| a - b).collect();
        let norm = diff.iter().map(|d| d * d).sum::<f64>().sqrt();
        loss += norm;
        let g = if norm > 0.0 { diff.iter().map(|d| d / norm).collect() } else { vec![0.0; diff.len()] };
        stage_grads.push(Tensor::new(fs.shape().to_vec(), g)?);
    }
    let grad = pyr.backward(&cache, &stage_grads)?;
    Ok((loss, grad))
}

/// Feature-level distillation loss and its gradient with respect to the
/// student's fused image.
pub fn loss_teacher_guidance(pyr: &FeaturePyramid, student_fused: &Image, teacher_fused: &Image) -> Result<(f64, Tensor)> {
    require_same_dims(student_fused, teacher_fused)?;
    check_pyramid_dims(student_fused)?;
    let teacher = pyr.forward(&image_to_tensor(teacher_fused))?;
    teacher_guidance_from_features(pyr, &image_to_tensor(student_fused), &teacher.features)
}

/// Mean squared difference between the student's fusions of the original
/// and degraded inputs; gradients flow to both.
pub fn loss_self_learning(fused_original: &Tensor, fused_degraded: &Tensor) -> Result<(f64, Tensor, Tensor)> {
    if fused_original.shape() != fused_degraded.shape() {
        return Err(Error::Dimension(format!(
            "{:?} vs {:?}",
            fused_original.shape(),
            fused_degraded.shape()
        )));
    }
    let (loss, g) = crate::micrograd::mse_loss(fused_original, fused_degraded)?;
    let mut neg = g.clone();
    neg.scale(-1.0);
    Ok((loss, g, neg))
}

pub fn loss_self_learning_images(a: &Image, b: &Image) -> Result<(f64, Tensor, Tensor)> {
    require_same_dims(a, b)?;
    loss_self_learning(&image_to_tensor(a), &image_to_tensor(b))
}

pub const WEIGHT_TOL: f64 = 1e-9;

pub fn check_weights(alpha_t: f64, alpha_s: f64) -> Result<()> {
    if !(alpha_t >= 0.0 && alpha_s >= 0.0 && ((alpha_t + alpha_s) - 1.0).abs() <= WEIGHT_TOL) {
        return Err(Error::Weight { alpha_t, alpha_s });
    }
    Ok(())
}

/// `α_t·L_t + α_s·L_s`.
pub fn loss_total(lt: f64, ls: f64, alpha_t: f64, alpha_s: f64) -> Result<f64> {
    check_weights(alpha_t, alpha_s)?;
    Ok(alpha_t * lt + alpha_s * ls)
}

// ---------------------------------------------------------------------------
// teachers
// ---------------------------------------------------------------------------

const SALIENCY_BOX: usize = 5;
const SHARPEN_AMOUNT: f64 = 0.5;
/// Blur strength whose kernel size is 5.
const SHARPEN_BLUR: f64 = 2.0 / 3.0;

/// Unsharp masking: `x + 0.5·(x − blur₅(x))`, unclamped.
fn unsharp(img: &Image) -> Vec<f64> {
    let blurred = gaussian_blur(img, SHARPEN_BLUR);
    img.data()
        .iter()
        .zip(blurred.data())
        .map(|(x, b)| x + SHARPEN_AMOUNT * (x - b))
        .collect()
}

/// Saliency-weighted average of the sources followed by mild sharpening.
pub fn rule_teacher_fuse(ir: &Image, vi: &Image) -> Result<Image> {
    require_same_dims(ir, vi)?;
    let (h, w) = (ir.height(), ir.width());
    let s_ir = filters::box_filter(&filters::sobel_magnitude(ir.data(), h, w), h, w, SALIENCY_BOX);
    let s_vi = filters::box_filter(&filters::sobel_magnitude(vi.data(), h, w), h, w, SALIENCY_BOX);
    let fused: Vec<f64> = (0..h * w)
        .map(|k| {
            let wt = s_ir[k] / (s_ir[k] + s_vi[k] + 1e-6);
            wt * ir.data()[k] + (1.0 - wt) * vi.data()[k]
        })
        .collect();
    let fused = Image::from_clamped(h, w, fused)?;
    Image::from_clamped(h, w, unsharp(&fused))
}

/// Source of teacher fusions.
#[derive(Debug, Clone, PartialEq)]
pub enum Teacher {
    /// Parameter-free [`rule_teacher_fuse`].
    Rule,
    /// Precomputed `<stem>.pgm` files in a directory.
    Files(PathBuf),
}

impl Teacher {
    /// `"rule"` selects [`Teacher::Rule`]; anything else is a directory.
    pub fn parse(spec: &str) -> Self {
        if spec == "rule" {
            Teacher::Rule
        } else {
            Teacher::Files(PathBuf::from(spec))
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Teacher::Rule => "rule".into(),
            Teacher::Files(p) => p.display().to_string(),
        }
    }

    pub fn fuse(&self, stem: &str, ir: &Image, vi: &Image) -> Result<Image> {
        match self {
            Teacher::Rule => rule_teacher_fuse(ir, vi),
            Teacher::Files(dir) => {
                let img = load_pgm(dir.join(format!("{stem}.pgm")))?;
                require_same_dims(&img, ir)?;
                Ok(img)
            }
        }
    }
}
