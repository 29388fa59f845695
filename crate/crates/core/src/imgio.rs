//! Grayscale rasters, Netpbm (PGM) file I/O and BT.601 colour conversion.
//!
//! Every plane the engine touches is an [`Image`]: a row-major buffer of
//! `f64` samples in `[0, 1]`, at least 8×8 pixels.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Smallest height/width accepted for an [`Image`].
pub const MIN_DIM: usize = 8;

/// Single-channel raster with samples in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Image {
    /// Validates dimensions and sample range. Values outside `[0, 1]` are rejected.
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(height, width)?;
        if data.len() != height * width {
            return Err(Error::Dimension(format!(
                "{}x{} image needs {} samples, got {}",
                height,
                width,
                height * width,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Value(format!("sample {bad} outside [0, 1]")));
        }
        Ok(Self { height, width, data })
    }

    /// Like [`Image::new`] but clamps finite out-of-range samples into `[0, 1]`.
    pub fn from_clamped(height: usize, width: usize, mut data: Vec<f64>) -> Result<Self> {
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::Value(format!("non-finite sample {bad}")));
        }
        for v in &mut data {
            *v = v.clamp(0.0, 1.0);
        }
        Self::new(height, width, data)
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width);
        for i in 0..height {
            for j in 0..width {
                data.push(f(i, j));
            }
        }
        Self::new(height, width, data)
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    /// Sample with replicate (clamp-to-edge) addressing.
    #[inline]
    pub fn get_clamped(&self, row: isize, col: isize) -> f64 {
        let r = row.clamp(0, self.height as isize - 1) as usize;
        let c = col.clamp(0, self.width as isize - 1) as usize;
        self.data[r * self.width + c]
    }

    pub fn same_dims(&self, other: &Image) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Image> {
        if top + height > self.height || left + width > self.width {
            return Err(Error::Dimension(format!(
                "crop {height}x{width} at ({top},{left}) exceeds {}x{} image",
                self.height, self.width
            )));
        }
        let mut data = Vec::with_capacity(height * width);
        for r in top..top + height {
            let start = r * self.width + left;
            data.extend_from_slice(&self.data[start..start + width]);
        }
        Image::new(height, width, data)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn max_abs_diff(&self, other: &Image) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

pub(crate) fn check_dims(height: usize, width: usize) -> Result<()> {
    if height < MIN_DIM || width < MIN_DIM {
        return Err(Error::Dimension(format!(
            "{height}x{width} is below the {MIN_DIM}x{MIN_DIM} minimum"
        )));
    }
    Ok(())
}

pub(crate) fn require_same_dims(a: &Image, b: &Image) -> Result<()> {
    if !a.same_dims(b) {
        return Err(Error::Dimension(format!(
            "{}x{} vs {}x{}",
            a.height, a.width, b.height, b.width
        )));
    }
    Ok(())
}

/// Three RGB planes of equal size.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorImage {
    pub r: Image,
    pub g: Image,
    pub b: Image,
}

impl ColorImage {
    pub fn new(r: Image, g: Image, b: Image) -> Result<Self> {
        require_same_dims(&r, &g)?;
        require_same_dims(&r, &b)?;
        Ok(Self { r, g, b })
    }

    pub fn height(&self) -> usize {
        self.r.height
    }

    pub fn width(&self) -> usize {
        self.r.width
    }
}

// ---------------------------------------------------------------------------
// PGM
// ---------------------------------------------------------------------------

/// Decoded PGM contents before any [`Image`] size constraint is applied.
#[derive(Debug, Clone, PartialEq)]
pub struct PgmRaster {
    pub width: usize,
    pub height: usize,
    pub maxval: u32,
    /// Samples scaled to `[0, 1]` by `maxval`.
    pub data: Vec<f64>,
}

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderReader<'a> {
    fn skip_ws_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let c = self.bytes[self.pos];
            if c == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if c.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Result<&'a [u8]> {
        self.skip_ws_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Parse("unexpected end of PGM data".into()));
        }
        Ok(&self.bytes[start..self.pos])
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        let tok = self.token()?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse::<u32>().ok())
            .ok_or_else(|| Error::Parse(format!("bad {what}: {:?}", String::from_utf8_lossy(tok))))
    }
}

/// Parses a binary (P5) or ASCII (P2) graymap. No minimum size is enforced here.
pub fn parse_pgm(bytes: &[u8]) -> Result<PgmRaster> {
    let mut rd = HeaderReader { bytes, pos: 0 };
    let magic = rd.token()?;
    let binary = match magic {
        b"P5" => true,
        b"P2" => false,
        other => {
            return Err(Error::Parse(format!(
                "unsupported magic {:?}",
                String::from_utf8_lossy(other)
            )))
        }
    };
    let width = rd.number("width")? as usize;
    let height = rd.number("height")? as usize;
    let maxval = rd.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::Parse(format!("zero-sized image {width}x{height}")));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Parse(format!("maxval {maxval} outside 1..=65535")));
    }
    let n = width * height;
    let scale = maxval as f64;
    let mut data = Vec::with_capacity(n);

    if binary {
        // exactly one whitespace byte separates the header from the raster
        if rd.pos >= bytes.len() || !bytes[rd.pos].is_ascii_whitespace() {
            return Err(Error::Parse("missing raster separator".into()));
        }
        let raster = &bytes[rd.pos + 1..];
        let wide = maxval > 255;
        let need = if wide { 2 * n } else { n };
        if raster.len() < need {
            return Err(Error::Parse(format!(
                "raster truncated: need {need} bytes, found {}",
                raster.len()
            )));
        }
        for k in 0..n {
            let v = if wide {
                u16::from_be_bytes([raster[2 * k], raster[2 * k + 1]]) as u32
            } else {
                raster[k] as u32
            };
            if v > maxval {
                return Err(Error::Parse(format!("sample {v} exceeds maxval {maxval}")));
            }
            data.push(v as f64 / scale);
        }
    } else {
        for _ in 0..n {
            let v = rd.number("sample")?;
            if v > maxval {
                return Err(Error::Parse(format!("sample {v} exceeds maxval {maxval}")));
            }
            data.push(v as f64 / scale);
        }
    }
    Ok(PgmRaster { width, height, maxval, data })
}

pub fn load_pgm(path: impl AsRef<Path>) -> Result<Image> {
    let bytes = fs::read(path.as_ref())?;
    let raster = parse_pgm(&bytes)?;
    Image::new(raster.height, raster.width, raster.data)
}

/// Encodes as binary P5. `maxval` must be 255 or 65535.
pub fn encode_pgm(img: &Image, maxval: u32) -> Result<Vec<u8>> {
    if maxval != 255 && maxval != 65535 {
        return Err(Error::Value(format!("maxval must be 255 or 65535, got {maxval}")));
    }
    let mut out = format!("P5\n{} {}\n{}\n", img.width, img.height, maxval).into_bytes();
    let scale = maxval as f64;
    for &p in &img.data {
        let q = (p * scale).round().clamp(0.0, scale) as u32;
        if maxval == 255 {
            out.push(q as u8);
        } else {
            out.extend_from_slice(&(q as u16).to_be_bytes());
        }
    }
    Ok(out)
}

pub fn save_pgm(img: &Image, path: impl AsRef<Path>, maxval: u32) -> Result<()> {
    let bytes = encode_pgm(img, maxval)?;
    fs::write(path.as_ref(), bytes)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// BT.601 full-range YCbCr
// ---------------------------------------------------------------------------

const KR: f64 = 0.299;
const KB: f64 = 0.114;
const KG: f64 = 1.0 - KR - KB;

/// Converts to (Y, Cb, Cr) with chroma offset by +0.5.
pub fn rgb_to_ycbcr(img: &ColorImage) -> (Image, Image, Image) {
    let n = img.r.len();
    let (mut y, mut cb, mut cr) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for k in 0..n {
        let (r, g, b) = (img.r.data[k], img.g.data[k], img.b.data[k]);
        let luma = KR * r + KG * g + KB * b;
        y.push(luma.clamp(0.0, 1.0));
        cb.push((0.5 * (b - luma) / (1.0 - KB) + 0.5).clamp(0.0, 1.0));
        cr.push((0.5 * (r - luma) / (1.0 - KR) + 0.5).clamp(0.0, 1.0));
    }
    let (h, w) = (img.height(), img.width());
    (
        Image { height: h, width: w, data: y },
        Image { height: h, width: w, data: cb },
        Image { height: h, width: w, data: cr },
    )
}

pub fn ycbcr_to_rgb(y: &Image, cb: &Image, cr: &Image) -> Result<ColorImage> {
    require_same_dims(y, cb)?;
    require_same_dims(y, cr)?;
    let n = y.len();
    let (mut r, mut g, mut b) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for k in 0..n {
        let luma = y.data[k];
        let pb = cb.data[k] - 0.5;
        let pr = cr.data[k] - 0.5;
        let rv = luma + 2.0 * (1.0 - KR) * pr;
        let bv = luma + 2.0 * (1.0 - KB) * pb;
        let gv = (luma - KR * rv - KB * bv) / KG;
        r.push(rv.clamp(0.0, 1.0));
        g.push(gv.clamp(0.0, 1.0));
        b.push(bv.clamp(0.0, 1.0));
    }
    let (h, w) = (y.height, y.width);
    Ok(ColorImage {
        r: Image { height: h, width: w, data: r },
        g: Image { height: h, width: w, data: g },
        b: Image { height: h, width: w, data: b },
    })
}

/// Fuses only the luminance of a colour visible image: `fuse` receives the
/// visible Y plane and returns a fused Y plane; chrominance is restored from
/// `chroma_source` (the original visible image by default, or a degraded copy).
pub fn fuse_color<F>(visible: &ColorImage, chroma_source: Option<&ColorImage>, fuse: F) -> Result<ColorImage>
where
    F: FnOnce(&Image) -> Result<Image>,
{
    let (y, cb, cr) = rgb_to_ycbcr(visible);
    let fused_y = fuse(&y)?;
    let (cb, cr) = match chroma_source {
        Some(src) => {
            let (_, cb2, cr2) = rgb_to_ycbcr(src);
            (cb2, cr2)
        }
        None => (cb, cr),
    };
    ycbcr_to_rgb(&fused_y, &cb, &cr)
}
