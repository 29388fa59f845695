//! Parametric degradations that turn a clean IR/VI pair into a harder
//! training sample. Every knob lives in `[0, 1]`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::filters;
use crate::imgio::Image;

/// Degradation strengths chosen by the agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegradationParams {
    pub blur: f64,
    pub compress: f64,
    pub brightness: f64,
    pub contrast: f64,
    pub noise: f64,
}

impl DegradationParams {
    /// The point at which every operator is (near) the identity.
    pub const IDENTITY: DegradationParams = DegradationParams {
        blur: 0.0,
        compress: 0.0,
        brightness: 0.5,
        contrast: 0.5,
        noise: 0.0,
    };

    pub fn new(blur: f64, compress: f64, brightness: f64, contrast: f64, noise: f64) -> Result<Self> {
        Self::from_array([blur, compress, brightness, contrast, noise])
    }

    pub fn from_array(a: [f64; 5]) -> Result<Self> {
        if let Some(bad) = a.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Value(format!("degradation parameter {bad} outside [0, 1]")));
        }
        Ok(Self { blur: a[0], compress: a[1], brightness: a[2], contrast: a[3], noise: a[4] })
    }

    pub fn to_array(&self) -> [f64; 5] {
        [self.blur, self.compress, self.brightness, self.contrast, self.noise]
    }

    /// L1 distance from [`Self::IDENTITY`].
    pub fn distance_from_identity(&self) -> f64 {
        self.to_array()
            .iter()
            .zip(Self::IDENTITY.to_array())
            .map(|(a, b)| (a - b).abs())
            .sum()
    }
}

impl Default for DegradationParams {
    fn default() -> Self {
        Self::IDENTITY
    }
}

/// Blur kernel size `{1, 3, 5, 7}` for strength `d`.
pub fn blur_kernel_size(d: f64) -> usize {
    2 * (3.0 * d.clamp(0.0, 1.0)).round() as usize + 1
}

pub fn gaussian_blur(img: &Image, d: f64) -> Image {
    let k = blur_kernel_size(d);
    if k == 1 {
        return img.clone();
    }
    let kernel = filters::gaussian_kernel_1d(k, k as f64 / 6.0);
    let out = filters::separable(img.data(), img.height(), img.width(), &kernel);
    Image::from_clamped(img.height(), img.width(), out).expect("blur preserves shape and finiteness")
}

// ---------------------------------------------------------------------------
// 8x8 DCT quantization
// ---------------------------------------------------------------------------

/// Quantization step for strength `d`; spans `0.2/255 ..= 50/255`.
pub fn dct_step(d: f64) -> f64 {
    (0.2 + 49.8 * d.clamp(0.0, 1.0)) / 255.0
}

/// Orthonormal 8-point DCT-II basis, `basis[u][x]`.
fn dct_basis() -> [[f64; 8]; 8] {
    let mut b = [[0.0; 8]; 8];
    for (u, row) in b.iter_mut().enumerate() {
        let c = if u == 0 { (1.0f64 / 8.0).sqrt() } else { (2.0f64 / 8.0).sqrt() };
        for (x, v) in row.iter_mut().enumerate() {
            *v = c * ((2 * x + 1) as f64 * u as f64 * std::f64::consts::PI / 16.0).cos();
        }
    }
    b
}

pub fn dct8x8_forward(block: &[f64; 64]) -> [f64; 64] {
    let b = dct_basis();
    let mut tmp = [0.0; 64];
    // rows
    for y in 0..8 {
        for u in 0..8 {
            tmp[y * 8 + u] = (0..8).map(|x| b[u][x] * block[y * 8 + x]).sum();
        }
    }
    let mut out = [0.0; 64];
    for v in 0..8 {
        for u in 0..8 {
            out[v * 8 + u] = (0..8).map(|y| b[v][y] * tmp[y * 8 + u]).sum();
        }
    }
    out
}

pub fn dct8x8_inverse(coeffs: &[f64; 64]) -> [f64; 64] {
    let b = dct_basis();
    let mut tmp = [0.0; 64];
    for y in 0..8 {
        for u in 0..8 {
            tmp[y * 8 + u] = (0..8).map(|v| b[v][y] * coeffs[v * 8 + u]).sum();
        }
    }
    let mut out = [0.0; 64];
    for y in 0..8 {
        for x in 0..8 {
            out[y * 8 + x] = (0..8).map(|u| b[u][x] * tmp[y * 8 + u]).sum();
        }
    }
    out
}

/// Blockwise DCT with uniform coefficient quantization.
pub fn dct_compress(img: &Image, d: f64) -> Image {
    let q = dct_step(d);
    let (h, w) = (img.height(), img.width());
    let mut out = vec![0.0; h * w];
    for by in (0..h).step_by(8) {
        for bx in (0..w).step_by(8) {
            let mut block = [0.0; 64];
            for y in 0..8 {
                for x in 0..8 {
                    block[y * 8 + x] = img.get_clamped((by + y) as isize, (bx + x) as isize);
                }
            }
            let mut c = dct8x8_forward(&block);
            for v in &mut c {
                *v = (*v / q).round() * q;
            }
            let rec = dct8x8_inverse(&c);
            for y in 0..8.min(h - by) {
                for x in 0..8.min(w - bx) {
                    out[(by + y) * w + bx + x] = rec[y * 8 + x].clamp(0.0, 1.0);
                }
            }
        }
    }
    Image::new(h, w, out).expect("compression preserves shape")
}

/// Brightness factor `0.5 + b`, then contrast `0.5 + c` about the mean.
pub fn color_jitter(img: &Image, b: f64, c: f64) -> Image {
    let beta = 0.5 + b;
    let gamma = 0.5 + c;
    let scaled: Vec<f64> = img.data().iter().map(|p| p * beta).collect();
    let mu = scaled.iter().sum::<f64>() / scaled.len() as f64;
    let out = scaled.iter().map(|p| ((p - mu) * gamma + mu).clamp(0.0, 1.0)).collect();
    Image::new(img.height(), img.width(), out).expect("jitter output is clamped")
}

/// Additive Gaussian noise with σ = 0.1·d. One standard-normal draw per
/// pixel in row-major order from a ChaCha8 stream keyed by `seed`.
pub fn add_noise(img: &Image, d: f64, seed: u64) -> Image {
    if d == 0.0 {
        return img.clone();
    }
    let sigma = 0.1 * d;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let out = img
        .data()
        .iter()
        .map(|p| {
            let z: f64 = StandardNormal.sample(&mut rng);
            (p + sigma * z).clamp(0.0, 1.0)
        })
        .collect();
    Image::new(img.height(), img.width(), out).expect("noise output is clamped")
}

/// SplitMix64 finalizer used to derive independent sub-seeds.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x632B_E59B_D9B4_E019);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Full pipeline for one image: blur → jitter → noise → compress.
pub fn degrade_image(img: &Image, p: &DegradationParams, seed: u64) -> Image {
    let x = gaussian_blur(img, p.blur);
    let x = color_jitter(&x, p.brightness, p.contrast);
    let x = add_noise(&x, p.noise, seed);
    dct_compress(&x, p.compress)
}

/// Degrades both sources with the same parameters and independent noise.
pub fn degrade_pair(ir: &Image, vi: &Image, p: &DegradationParams, seed: u64) -> (Image, Image) {
    (
        degrade_image(ir, p, derive_seed(seed, 1)),
        degrade_image(vi, p, derive_seed(seed, 2)),
    )
}
