//! Image-quality metrics used for agent states, rewards and evaluation.
//!
//! All metrics operate on [`Image`] values in `[0, 1]` and are deterministic.

use crate::error::{Error, Result};
use crate::filters;
use crate::imgio::{require_same_dims, Image};

/// Average gradient over forward differences.
pub fn avg_gradient(img: &Image) -> f64 {
    let (h, w) = (img.height(), img.width());
    let mut acc = 0.0;
    for i in 0..h - 1 {
        for j in 0..w - 1 {
            let p = img.get(i, j);
            let dx = img.get(i, j + 1) - p;
            let dy = img.get(i + 1, j) - p;
            acc += ((dx * dx + dy * dy) / 2.0).sqrt();
        }
    }
    acc / ((h - 1) * (w - 1)) as f64
}

pub fn spatial_frequency(img: &Image) -> f64 {
    let (h, w) = (img.height(), img.width());
    let mut rf = 0.0;
    for i in 0..h {
        for j in 1..w {
            let d = img.get(i, j) - img.get(i, j - 1);
            rf += d * d;
        }
    }
    let mut cf = 0.0;
    for i in 1..h {
        for j in 0..w {
            let d = img.get(i, j) - img.get(i - 1, j);
            cf += d * d;
        }
    }
    let rf = rf / (h * (w - 1)) as f64;
    let cf = cf / ((h - 1) * w) as f64;
    (rf + cf).sqrt()
}

/// Mean Sobel gradient magnitude (replicate borders).
pub fn edge_intensity(img: &Image) -> f64 {
    let mag = filters::sobel_magnitude(img.data(), img.height(), img.width());
    mag.iter().sum::<f64>() / mag.len() as f64
}

/// Shannon entropy in bits of a 256-bin histogram.
pub fn entropy(img: &Image) -> f64 {
    let mut hist = [0usize; 256];
    for &p in img.data() {
        let b = ((p * 256.0).floor() as usize).min(255);
        hist[b] += 1;
    }
    let n = img.len() as f64;
    -hist
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let q = c as f64 / n;
            q * q.log2()
        })
        .sum::<f64>()
}

/// Population standard deviation.
pub fn std_dev(img: &Image) -> f64 {
    // shifting by the first sample keeps constant images exactly at zero
    let x0 = img.data()[0];
    let n = img.len() as f64;
    let mean = img.data().iter().map(|p| p - x0).sum::<f64>() / n;
    let var = img.data().iter().map(|p| (p - x0 - mean) * (p - x0 - mean)).sum::<f64>() / n;
    var.sqrt()
}

const VIF_SIGMA_NSQ: f64 = 2.0;
const VIF_EPS: f64 = 1e-10;

/// Pixel-domain visual information fidelity over four scales.
///
/// Images are rescaled to the 0–255 range. Local statistics use a Gaussian
/// window of size `2^(5-s)+1` (σ = N/5) with replicate borders; scales 2–4
/// are reached by smoothing with the scale's window and keeping every other
/// sample. Returns 1.0 when the reference carries no information at all.
pub fn vif(reference: &Image, distorted: &Image) -> Result<f64> {
    require_same_dims(reference, distorted)?;
    let mut h = reference.height();
    let mut w = reference.width();
    let mut r: Vec<f64> = reference.data().iter().map(|v| v * 255.0).collect();
    let mut d: Vec<f64> = distorted.data().iter().map(|v| v * 255.0).collect();

    let mut num = 0.0;
    let mut den = 0.0;
    for scale in 1..=4u32 {
        let n = (1usize << (5 - scale)) + 1;
        let kernel = filters::gaussian_kernel_1d(n, n as f64 / 5.0);
        if scale > 1 {
            let rs = filters::separable(&r, h, w, &kernel);
            let ds = filters::separable(&d, h, w, &kernel);
            let (rd, nh, nw) = filters::decimate2(&rs, h, w);
            let (dd, _, _) = filters::decimate2(&ds, h, w);
            r = rd;
            d = dd;
            h = nh;
            w = nw;
        }
        let rr: Vec<f64> = r.iter().map(|v| v * v).collect();
        let dd: Vec<f64> = d.iter().map(|v| v * v).collect();
        let rd: Vec<f64> = r.iter().zip(&d).map(|(a, b)| a * b).collect();
        let mu_r = filters::separable(&r, h, w, &kernel);
        let mu_d = filters::separable(&d, h, w, &kernel);
        let e_rr = filters::separable(&rr, h, w, &kernel);
        let e_dd = filters::separable(&dd, h, w, &kernel);
        let e_rd = filters::separable(&rd, h, w, &kernel);

        for k in 0..h * w {
            let mut var_r = (e_rr[k] - mu_r[k] * mu_r[k]).max(0.0);
            let var_d = (e_dd[k] - mu_d[k] * mu_d[k]).max(0.0);
            let cov = e_rd[k] - mu_r[k] * mu_d[k];

            let (g, sv) = if var_r < VIF_EPS {
                var_r = 0.0;
                (0.0, var_d)
            } else {
                let g = cov / var_r;
                if g < 0.0 {
                    (0.0, var_d)
                } else {
                    (g, (var_d - g * cov).max(0.0))
                }
            };
            num += (1.0 + g * g * var_r / (sv + VIF_SIGMA_NSQ)).log2();
            den += (1.0 + var_r / VIF_SIGMA_NSQ).log2();
        }
    }
    if den == 0.0 {
        return Ok(1.0);
    }
    Ok(num / den)
}

/// Fusion VIF: mean fidelity of the fused image to both sources.
pub fn viff_fusion(ir: &Image, vi: &Image, fused: &Image) -> Result<f64> {
    require_same_dims(ir, vi)?;
    require_same_dims(ir, fused)?;
    Ok(0.5 * (vif(ir, fused)? + vif(vi, fused)?))
}

/// No-reference quality score in `[0, 1)`. Higher is better.
///
/// Implementations must be deterministic; the engine calls them for both
/// states and rewards.
pub trait QualityScorer: Send + Sync {
    fn score(&self, img: &Image) -> f64;
}

/// Sharpness-plus-contrast stand-in for a prompt-tuned CLIP-IQA model.
#[derive(Debug, Clone, Copy, Default)]
pub struct ProxyIqa;

impl QualityScorer for ProxyIqa {
    fn score(&self, img: &Image) -> f64 {
        iqa_star(img)
    }
}

pub fn iqa_star(img: &Image) -> f64 {
    0.5 * (4.0 * avg_gradient(img)).tanh() + 0.5 * (4.0 * std_dev(img)).tanh()
}

pub const METRIC_NAMES: [&str; 5] = ["ag", "ei", "vif", "sd", "iqa"];

/// The five state metrics of one fused image.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricVector {
    pub ag: f64,
    pub ei: f64,
    pub vif: f64,
    pub sd: f64,
    pub iqa: f64,
}

impl MetricVector {
    pub fn to_array(&self) -> [f64; 5] {
        [self.ag, self.ei, self.vif, self.sd, self.iqa]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        Self { ag: a[0], ei: a[1], vif: a[2], sd: a[3], iqa: a[4] }
    }
}

pub fn metric_vector(fused: &Image, ir: &Image, vi: &Image) -> Result<MetricVector> {
    metric_vector_with(&ProxyIqa, fused, ir, vi)
}

pub fn metric_vector_with(
    scorer: &dyn QualityScorer,
    fused: &Image,
    ir: &Image,
    vi: &Image,
) -> Result<MetricVector> {
    let vif = viff_fusion(ir, vi, fused)?;
    let m = MetricVector {
        ag: avg_gradient(fused),
        ei: edge_intensity(fused),
        vif,
        sd: std_dev(fused),
        iqa: scorer.score(fused),
    };
    if m.to_array().iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerics(format!("metric vector {m:?}")));
    }
    Ok(m)
}

pub const NORM_EPS: f64 = 1e-6;

/// Running per-metric min/max scaler.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningNormalizer {
    bounds: Option<([f64; 5], [f64; 5])>,
    pub epsilon: f64,
}

impl Default for RunningNormalizer {
    fn default() -> Self {
        Self { bounds: None, epsilon: NORM_EPS }
    }
}

impl RunningNormalizer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn min(&self) -> Option<[f64; 5]> {
        self.bounds.map(|b| b.0)
    }

    pub fn max(&self) -> Option<[f64; 5]> {
        self.bounds.map(|b| b.1)
    }

    /// Folds `m` into the running bounds.
    pub fn observe(&mut self, m: &MetricVector) {
        let a = m.to_array();
        match &mut self.bounds {
            None => self.bounds = Some((a, a)),
            Some((lo, hi)) => {
                for k in 0..5 {
                    lo[k] = lo[k].min(a[k]);
                    hi[k] = hi[k].max(a[k]);
                }
            }
        }
    }

    /// Scales with the current bounds without updating them.
    pub fn apply(&self, m: &MetricVector) -> MetricVector {
        let a = m.to_array();
        let Some((lo, hi)) = self.bounds else {
            return MetricVector::default();
        };
        let mut out = [0.0; 5];
        for k in 0..5 {
            out[k] = ((a[k] - lo[k]) / (hi[k] - lo[k] + self.epsilon)).clamp(0.0, 1.0);
        }
        MetricVector::from_array(out)
    }

    /// Folds then scales.
    pub fn normalize(&mut self, m: &MetricVector) -> MetricVector {
        self.observe(m);
        self.apply(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(v: f64) -> Image {
        Image::filled(8, 8, v).unwrap()
    }

    fn checkerboard() -> Image {
        Image::from_fn(8, 8, |i, j| ((i + j) % 2) as f64).unwrap()
    }

    #[test]
    fn constant_image_is_zero_everywhere() {
        let c = constant(0.4);
        assert_eq!(avg_gradient(&c), 0.0);
        assert_eq!(spatial_frequency(&c), 0.0);
        assert_eq!(edge_intensity(&c), 0.0);
        assert_eq!(entropy(&c), 0.0);
        assert_eq!(std_dev(&c), 0.0);
        assert_eq!(iqa_star(&c), 0.0);
    }

    #[test]
    fn ramp_average_gradient() {
        let ramp = Image::from_fn(8, 8, |_, j| j as f64 / 7.0).unwrap();
        let expected = (1.0 / 7.0) / 2f64.sqrt();
        assert!((avg_gradient(&ramp) - expected).abs() < 1e-9);
    }

    #[test]
    fn checkerboard_values() {
        let c = checkerboard();
        assert!((avg_gradient(&c) - 1.0).abs() < 1e-9);
        assert!((spatial_frequency(&c) - 2f64.sqrt()).abs() < 1e-9);
        let iqa = 0.5 * 4f64.tanh() + 0.5 * 2f64.tanh();
        assert!((iqa_star(&c) - iqa).abs() < 1e-12);
        assert!((iqa_star(&c) - 0.98168).abs() < 1e-5);
    }

    #[test]
    fn vertical_stripes_sf() {
        let s = Image::from_fn(8, 8, |_, j| (j % 2) as f64).unwrap();
        assert!((spatial_frequency(&s) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn entropy_levels() {
        let half = Image::from_fn(8, 8, |i, _| if i < 4 { 0.0 } else { 1.0 }).unwrap();
        assert!((entropy(&half) - 1.0).abs() < 1e-12);
        assert!((std_dev(&half) - 0.5).abs() < 1e-12);
        let four = Image::from_fn(8, 8, |i, _| [0.0, 0.3, 0.6, 0.9][i / 2]).unwrap();
        assert!((entropy(&four) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn vif_dimension_mismatch() {
        let a = constant(0.1);
        let b = Image::filled(8, 9, 0.1).unwrap();
        assert!(matches!(vif(&a, &b), Err(Error::Dimension(_))));
        assert!(matches!(viff_fusion(&a, &a, &b), Err(Error::Dimension(_))));
    }

    #[test]
    fn vif_constant_reference_convention() {
        assert_eq!(vif(&constant(0.2), &constant(0.7)).unwrap(), 1.0);
    }

    #[test]
    fn normalizer_first_and_second_call() {
        let mut n = RunningNormalizer::new();
        let a = MetricVector::from_array([1.0, 2.0, 0.3, 0.1, 0.5]);
        assert_eq!(n.normalize(&a), MetricVector::default());
        let b = MetricVector::from_array([2.0, 4.0, 0.9, 0.2, 0.9]);
        let out = n.normalize(&b).to_array();
        for (k, v) in out.iter().enumerate() {
            let range = b.to_array()[k] - a.to_array()[k];
            assert!((v - range / (range + NORM_EPS)).abs() < 1e-15);
            assert!(*v > 0.99 && *v <= 1.0);
        }
    }

    #[test]
    fn normalizer_apply_is_monotone_and_bounded() {
        let mut n = RunningNormalizer::new();
        n.observe(&MetricVector::from_array([0.0; 5]));
        n.observe(&MetricVector::from_array([1.0; 5]));
        let lo = n.apply(&MetricVector::from_array([0.2; 5])).to_array();
        let hi = n.apply(&MetricVector::from_array([0.7; 5])).to_array();
        let out = n.apply(&MetricVector::from_array([5.0; 5])).to_array();
        for k in 0..5 {
            assert!(lo[k] < hi[k]);
            assert!((0.0..=1.0).contains(&out[k]));
        }
    }
}
