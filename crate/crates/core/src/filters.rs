//! Replicate-padded spatial filters shared by the metric, degradation and
//! teacher code. All functions work on raw row-major planes so that
//! intermediate results (which may leave `[0, 1]`) need no validation.

/// Normalized 1-D Gaussian of odd length `size`.
pub fn gaussian_kernel_1d(size: usize, sigma: f64) -> Vec<f64> {
    let r = (size / 2) as f64;
    let mut k: Vec<f64> = (0..size)
        .map(|i| {
            let x = i as f64 - r;
            (-x * x / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = k.iter().sum();
    for v in &mut k {
        *v /= s;
    }
    k
}

#[inline]
fn clamp_idx(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

/// Separable correlation with the same 1-D kernel along rows and columns.
///
/// Each output is accumulated as `center + Σ w·(neighbour − center)`, which
/// equals `Σ w·neighbour` for a unit-sum kernel and leaves constant regions
/// bit-exact.
pub fn separable(plane: &[f64], h: usize, w: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let mut tmp = vec![0.0; h * w];
    for i in 0..h {
        let row = &plane[i * w..(i + 1) * w];
        for j in 0..w {
            let c = row[j];
            let mut acc = 0.0;
            for (t, &kv) in kernel.iter().enumerate() {
                let jj = clamp_idx(j as isize + t as isize - r, w);
                acc += kv * (row[jj] - c);
            }
            tmp[i * w + j] = c + acc;
        }
    }
    let mut out = vec![0.0; h * w];
    for i in 0..h {
        for j in 0..w {
            let c = tmp[i * w + j];
            let mut acc = 0.0;
            for (t, &kv) in kernel.iter().enumerate() {
                let ii = clamp_idx(i as isize + t as isize - r, h);
                acc += kv * (tmp[ii * w + j] - c);
            }
            out[i * w + j] = c + acc;
        }
    }
    out
}

pub fn box_filter(plane: &[f64], h: usize, w: usize, size: usize) -> Vec<f64> {
    let k = vec![1.0 / size as f64; size];
    separable(plane, h, w, &k)
}

/// 3×3 Sobel responses `(gx, gy)` with replicate borders.
pub fn sobel(plane: &[f64], h: usize, w: usize) -> (Vec<f64>, Vec<f64>) {
    let at = |i: isize, j: isize| plane[clamp_idx(i, h) * w + clamp_idx(j, w)];
    let mut gx = vec![0.0; h * w];
    let mut gy = vec![0.0; h * w];
    for i in 0..h as isize {
        for j in 0..w as isize {
            let x = (at(i - 1, j + 1) + 2.0 * at(i, j + 1) + at(i + 1, j + 1))
                - (at(i - 1, j - 1) + 2.0 * at(i, j - 1) + at(i + 1, j - 1));
            let y = (at(i + 1, j - 1) + 2.0 * at(i + 1, j) + at(i + 1, j + 1))
                - (at(i - 1, j - 1) + 2.0 * at(i - 1, j) + at(i - 1, j + 1));
            let k = i as usize * w + j as usize;
            gx[k] = x;
            gy[k] = y;
        }
    }
    (gx, gy)
}

pub fn sobel_magnitude(plane: &[f64], h: usize, w: usize) -> Vec<f64> {
    let (gx, gy) = sobel(plane, h, w);
    gx.iter().zip(&gy).map(|(x, y)| (x * x + y * y).sqrt()).collect()
}

/// Keeps every other row and column starting at index 0.
pub fn decimate2(plane: &[f64], h: usize, w: usize) -> (Vec<f64>, usize, usize) {
    let (nh, nw) = (h.div_ceil(2), w.div_ceil(2));
    let mut out = Vec::with_capacity(nh * nw);
    for i in (0..h).step_by(2) {
        for j in (0..w).step_by(2) {
            out.push(plane[i * w + j]);
        }
    }
    (out, nh, nw)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_is_normalized_and_symmetric() {
        let k = gaussian_kernel_1d(7, 7.0 / 6.0);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        for i in 0..3 {
            assert_eq!(k[i], k[6 - i]);
        }
    }

    #[test]
    fn separable_keeps_constants_exact() {
        let p = vec![0.3; 100];
        let k = gaussian_kernel_1d(5, 5.0 / 6.0);
        assert!(separable(&p, 10, 10, &k).iter().all(|&v| v == 0.3));
    }

    #[test]
    fn decimate_odd_sizes() {
        let p: Vec<f64> = (0..15).map(|v| v as f64).collect();
        let (d, h, w) = decimate2(&p, 3, 5);
        assert_eq!((h, w), (2, 3));
        assert_eq!(d, vec![0.0, 2.0, 4.0, 10.0, 12.0, 14.0]);
    }
}
