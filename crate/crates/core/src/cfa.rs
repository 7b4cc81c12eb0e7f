//! Bayer mosaic handling: packing to the 4-channel half-resolution layout,
//! synthetic RAW generation from RGB, and the paired crop/flip augmentations
//! used to build training samples.
//!
//! The colour filter array phase is fixed to RGGB:
//!
//! ```text
//! (2i, 2j)   R    (2i, 2j+1)   G1
//! (2i+1, 2j) G2   (2i+1, 2j+1) B
//! ```
//!
//! and packed channels are ordered `[R, G1, B, G2]`.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{HernError, Result};
use crate::seed;
use crate::tensor::{Scalar, Tensor};

/// Packed channel index of each RGGB site within a 2x2 cell, by `(dy, dx)`.
const SITE_CHANNEL: [[usize; 2]; 2] = [[0, 1], [3, 2]];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum CfaPattern {
    #[default]
    Rggb,
}

/// Single-channel sensor image, row-major, values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BayerMosaic {
    height: usize,
    width: usize,
    data: Vec<f32>,
    pattern: CfaPattern,
}

impl BayerMosaic {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if !height.is_multiple_of(2) || !width.is_multiple_of(2) || height == 0 || width == 0 {
            return Err(HernError::Dimension(format!(
                "Bayer mosaic must have even non-zero dims, got {height}x{width}"
            )));
        }
        if data.len() != height * width {
            return Err(HernError::Shape(format!(
                "{height}x{width} mosaic needs {} samples, got {}",
                height * width,
                data.len()
            )));
        }
        check_unit_range(&data, "Bayer mosaic")?;
        Ok(BayerMosaic {
            height,
            width,
            data,
            pattern: CfaPattern::Rggb,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn pattern(&self) -> CfaPattern {
        self.pattern
    }

    pub fn at(&self, y: usize, x: usize) -> f32 {
        self.data[y * self.width + x]
    }
}

fn check_unit_range(data: &[f32], what: &str) -> Result<()> {
    match data.iter().position(|v| !(0.0..=1.0).contains(v)) {
        Some(i) => Err(HernError::Parameter(format!(
            "{what} value {} at index {i} outside [0, 1]",
            data[i]
        ))),
        None => Ok(()),
    }
}

/// Packed RAW tensor `[4, H, W]` with channels `[R, G1, B, G2]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RawPatch {
    data: Tensor<f32>,
}

impl RawPatch {
    pub fn new(data: Tensor<f32>) -> Result<Self> {
        let (c, h, w) = data.dims3()?;
        if c != 4 {
            return Err(HernError::Shape(format!(
                "packed RAW needs 4 channels, got {c}"
            )));
        }
        if h == 0 || w == 0 {
            return Err(HernError::Shape("empty RAW patch".into()));
        }
        check_unit_range(data.data(), "RAW patch")?;
        Ok(RawPatch { data })
    }

    pub fn height(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.data.shape()[2]
    }

    pub fn tensor(&self) -> &Tensor<f32> {
        &self.data
    }

    pub fn into_tensor(self) -> Tensor<f32> {
        self.data
    }
}

/// RGB tensor `[3, H, W]`. Network outputs are stored unclamped; clamp with
/// [`RgbImage::clamped`] at I/O boundaries.
#[derive(Clone, Debug, PartialEq)]
pub struct RgbImage {
    data: Tensor<f32>,
}

impl RgbImage {
    pub fn new(data: Tensor<f32>) -> Result<Self> {
        let (c, h, w) = data.dims3()?;
        if c != 3 {
            return Err(HernError::Shape(format!(
                "RGB image needs 3 channels, got {c}"
            )));
        }
        if h == 0 || w == 0 {
            return Err(HernError::Shape("empty RGB image".into()));
        }
        Ok(RgbImage { data })
    }

    pub fn height(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.data.shape()[2]
    }

    pub fn tensor(&self) -> &Tensor<f32> {
        &self.data
    }

    pub fn into_tensor(self) -> Tensor<f32> {
        self.data
    }

    pub fn clamped(&self) -> RgbImage {
        RgbImage {
            data: self.data.map(|v| v.clamp(0.0, 1.0)),
        }
    }
}

/// Aligned RAW/RGB training pair; `rgb` is `scale` times the RAW size.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedSample {
    pub raw: RawPatch,
    pub rgb: RgbImage,
    pub scale: usize,
}

impl PairedSample {
    pub fn new(raw: RawPatch, rgb: RgbImage, scale: usize) -> Result<Self> {
        if scale != 1 && scale != 2 {
            return Err(HernError::Parameter(format!(
                "output scale must be 1 or 2, got {scale}"
            )));
        }
        if rgb.height() != scale * raw.height() || rgb.width() != scale * raw.width() {
            return Err(HernError::Dimension(format!(
                "RGB {}x{} is not {scale}x the RAW {}x{}",
                rgb.height(),
                rgb.width(),
                raw.height(),
                raw.width()
            )));
        }
        if !raw.height().is_multiple_of(4) || !raw.width().is_multiple_of(4) {
            return Err(HernError::Dimension(format!(
                "RAW {}x{} must be divisible by 4",
                raw.height(),
                raw.width()
            )));
        }
        Ok(PairedSample { raw, rgb, scale })
    }
}

pub fn pack_bayer(mosaic: &BayerMosaic) -> Result<RawPatch> {
    let (h, w) = (mosaic.height / 2, mosaic.width / 2);
    let mut out = Tensor::zeros(&[4, h, w]);
    for i in 0..h {
        for j in 0..w {
            for (dy, row) in SITE_CHANNEL.iter().enumerate() {
                for (dx, &c) in row.iter().enumerate() {
                    out.set3(c, i, j, mosaic.at(2 * i + dy, 2 * j + dx));
                }
            }
        }
    }
    RawPatch::new(out)
}

pub fn unpack_bayer(raw: &RawPatch) -> BayerMosaic {
    let (h, w) = (raw.height(), raw.width());
    let mut data = vec![0.0; 4 * h * w];
    for i in 0..h {
        for j in 0..w {
            for (dy, row) in SITE_CHANNEL.iter().enumerate() {
                for (dx, &c) in row.iter().enumerate() {
                    data[(2 * i + dy) * 2 * w + 2 * j + dx] = raw.data.at3(c, i, j);
                }
            }
        }
    }
    BayerMosaic {
        height: 2 * h,
        width: 2 * w,
        data,
        pattern: CfaPattern::Rggb,
    }
}

/// Per-channel white-balance-like gains applied in reverse by
/// [`synthesize_raw`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gains(pub [f32; 3]);

impl Default for Gains {
    fn default() -> Self {
        Gains([1.0, 1.0, 1.0])
    }
}

/// Degrade an RGB image into a packed RAW patch.
///
/// Each channel is divided by its gain; for `scale == 2` the degraded image
/// is first bilinearly halved. Every packed pixel then takes its four CFA
/// samples from the corresponding RGB pixel (`G1` and `G2` both from green),
/// Gaussian noise is added and values are clipped to `[0, 1]`.
pub fn synthesize_raw(
    rgb: &RgbImage,
    gains: Gains,
    noise_sigma: f32,
    scale: usize,
    seed: u64,
) -> Result<PairedSample> {
    let (h, w) = (rgb.height(), rgb.width());
    let unit = match scale {
        1 => 4,
        2 => 8,
        _ => {
            return Err(HernError::Parameter(format!(
                "output scale must be 1 or 2, got {scale}"
            )))
        }
    };
    if h % unit != 0 || w % unit != 0 {
        return Err(HernError::Dimension(format!(
            "RGB {h}x{w} must be divisible by {unit} for scale {scale}"
        )));
    }
    if let Some(g) = gains.0.iter().find(|g| !(g.is_finite() && **g > 0.0)) {
        return Err(HernError::Parameter(format!("gain must be positive, got {g}")));
    }
    if !(noise_sigma.is_finite() && noise_sigma >= 0.0) {
        return Err(HernError::Parameter(format!(
            "noise sigma must be non-negative, got {noise_sigma}"
        )));
    }

    let mut degraded = rgb.tensor().clone();
    for (c, g) in gains.0.iter().enumerate() {
        let plane = &mut degraded.data_mut()[c * h * w..(c + 1) * h * w];
        plane.iter_mut().for_each(|v| *v /= g);
    }
    if scale == 2 {
        degraded = crate::kernels::resize_bilinear(&degraded, h / 2, w / 2)?;
    }
    let (rh, rw) = (h / scale, w / scale);
    // packed channel -> source RGB channel
    const SOURCE: [usize; 4] = [0, 1, 2, 1];
    let mut raw = Tensor::zeros(&[4, rh, rw]);
    for (c, &src) in SOURCE.iter().enumerate() {
        raw.data_mut()[c * rh * rw..(c + 1) * rh * rw].copy_from_slice(degraded.plane(src));
    }
    if noise_sigma > 0.0 {
        let normal = Normal::new(0.0, noise_sigma).expect("valid sigma");
        let mut rng = seed::derived_rng(seed, "raw-noise", &[]);
        raw.data_mut()
            .iter_mut()
            .for_each(|v| *v += normal.sample(&mut rng));
    }
    raw.data_mut().iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    let rgb = rgb.clamped();
    PairedSample::new(RawPatch::new(raw)?, rgb, scale)
}

fn crop_tensor<T: Scalar>(t: &Tensor<T>, y0: usize, x0: usize, h: usize, w: usize) -> Tensor<T> {
    let (c, _, tw) = (t.shape()[0], t.shape()[1], t.shape()[2]);
    let mut out = Vec::with_capacity(c * h * w);
    for ch in 0..c {
        let plane = t.plane(ch);
        for y in y0..y0 + h {
            out.extend_from_slice(&plane[y * tw + x0..y * tw + x0 + w]);
        }
    }
    Tensor::new(vec![c, h, w], out).expect("crop shape")
}

/// Crop of `[C, H, W]` at `(y0, x0)` of size `h x w`.
pub fn crop<T: Scalar>(t: &Tensor<T>, y0: usize, x0: usize, h: usize, w: usize) -> Result<Tensor<T>> {
    let (_, th, tw) = t.dims3()?;
    if y0 + h > th || x0 + w > tw {
        return Err(HernError::Dimension(format!(
            "crop {h}x{w}@({y0},{x0}) exceeds {th}x{tw}"
        )));
    }
    Ok(crop_tensor(t, y0, x0, h, w))
}

/// Random aligned crop of `size x size` RAW pixels (and the matching
/// `scale * size` RGB region).
pub fn random_crop_pair(sample: &PairedSample, size: usize, seed: u64) -> Result<PairedSample> {
    let (h, w) = (sample.raw.height(), sample.raw.width());
    if size == 0 || !size.is_multiple_of(4) {
        return Err(HernError::Parameter(format!(
            "crop size must be a positive multiple of 4, got {size}"
        )));
    }
    if size > h || size > w {
        return Err(HernError::Parameter(format!(
            "crop size {size} exceeds RAW {h}x{w}"
        )));
    }
    let mut rng = seed::derived_rng(seed, "crop", &[]);
    let oy = rng.random_range(0..=h - size);
    let ox = rng.random_range(0..=w - size);
    Ok(crop_at(sample, oy, ox, size))
}

/// Crop with explicit RAW-domain offsets.
pub fn crop_at(sample: &PairedSample, oy: usize, ox: usize, size: usize) -> PairedSample {
    let s = sample.scale;
    PairedSample {
        raw: RawPatch {
            data: crop_tensor(sample.raw.tensor(), oy, ox, size, size),
        },
        rgb: RgbImage {
            data: crop_tensor(sample.rgb.tensor(), s * oy, s * ox, s * size, s * size),
        },
        scale: s,
    }
}

/// Element of the flip group acting on spatial axes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct FlipTransform {
    pub horizontal: bool,
    pub vertical: bool,
}

impl FlipTransform {
    pub const IDENTITY: FlipTransform = FlipTransform::new(false, false);

    /// `[id, h, v, hv]`.
    pub const ALL: [FlipTransform; 4] = [
        FlipTransform::new(false, false),
        FlipTransform::new(true, false),
        FlipTransform::new(false, true),
        FlipTransform::new(true, true),
    ];

    pub const fn new(horizontal: bool, vertical: bool) -> Self {
        FlipTransform {
            horizontal,
            vertical,
        }
    }

    /// Group product; every element is its own inverse.
    pub fn then(self, other: FlipTransform) -> FlipTransform {
        FlipTransform::new(self.horizontal ^ other.horizontal, self.vertical ^ other.vertical)
    }

    pub fn inverse(self) -> FlipTransform {
        self
    }

    pub fn is_identity(self) -> bool {
        !self.horizontal && !self.vertical
    }

    /// Apply to a `[C, H, W]` tensor. Channels are never permuted.
    pub fn apply<T: Scalar>(self, t: &Tensor<T>) -> Tensor<T> {
        if self.is_identity() {
            return t.clone();
        }
        let (c, h, w) = (t.shape()[0], t.shape()[1], t.shape()[2]);
        let src = t.data();
        Tensor::from_fn(&[c, h, w], |i| {
            let (ch, r) = (i / (h * w), i % (h * w));
            let (mut y, mut x) = (r / w, r % w);
            if self.vertical {
                y = h - 1 - y;
            }
            if self.horizontal {
                x = w - 1 - x;
            }
            src[(ch * h + y) * w + x]
        })
    }

    pub fn apply_raw(self, raw: &RawPatch) -> RawPatch {
        RawPatch {
            data: self.apply(&raw.data),
        }
    }

    pub fn apply_rgb(self, rgb: &RgbImage) -> RgbImage {
        RgbImage {
            data: self.apply(&rgb.data),
        }
    }
}

/// Flip RAW and RGB along the same spatial axes.
pub fn flip_pair(sample: &PairedSample, horizontal: bool, vertical: bool) -> PairedSample {
    let f = FlipTransform::new(horizontal, vertical);
    PairedSample {
        raw: f.apply_raw(&sample.raw),
        rgb: f.apply_rgb(&sample.rgb),
        scale: sample.scale,
    }
}
