//! PSNR and SSIM on RGB images.
//!
//! Both clamp inputs to `[0, 1]` first. SSIM uses K1 = 0.01, K2 = 0.03 and
//! an 11x11 Gaussian window with sigma 1.5 over the valid region (no
//! padding), computed per channel and averaged.

use crate::cfa::RgbImage;
use crate::error::{HernError, Result};

pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;

fn check_shapes(a: &RgbImage, b: &RgbImage) -> Result<()> {
    if a.tensor().shape() != b.tensor().shape() {
        return Err(HernError::Shape(format!(
            "cannot compare {:?} with {:?}",
            a.tensor().shape(),
            b.tensor().shape()
        )));
    }
    Ok(())
}

fn clamped(img: &RgbImage) -> Vec<f64> {
    img.tensor().data().iter().map(|&v| v.clamp(0.0, 1.0) as f64).collect()
}

pub fn mse(a: &RgbImage, b: &RgbImage) -> Result<f64> {
    check_shapes(a, b)?;
    let (x, y) = (clamped(a), clamped(b));
    if x.is_empty() {
        return Err(HernError::Shape("empty image".into()));
    }
    Ok(x.iter().zip(&y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>() / x.len() as f64)
}

/// `10 log10(peak^2 / MSE)` in dB; `f64::INFINITY` when the images agree.
pub fn psnr(a: &RgbImage, b: &RgbImage, peak: f64) -> Result<f64> {
    let e = mse(a, b)?;
    if e == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / e).log10())
}

/// Formats the infinity sentinel as `inf`.
pub fn format_db(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v:.4}")
    }
}

fn gaussian_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let w: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-((i as f64 - r).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Separable valid-region filtering of an `h x w` plane.
fn filter(plane: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (oh, ow) = (h - n + 1, w - n + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..n).map(|i| k[i] * plane[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..n).map(|i| k[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

fn ssim_plane(a: &[f64], b: &[f64], h: usize, w: usize, k: &[f64]) -> f64 {
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let prod = |p: &[f64], q: &[f64]| -> Vec<f64> { p.iter().zip(q).map(|(x, y)| x * y).collect() };
    let mu_a = filter(a, h, w, k);
    let mu_b = filter(b, h, w, k);
    let aa = filter(&prod(a, a), h, w, k);
    let bb = filter(&prod(b, b), h, w, k);
    let ab = filter(&prod(a, b), h, w, k);
    let total: f64 = (0..mu_a.len())
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = aa[i] - ma * ma;
            let vb = bb[i] - mb * mb;
            let cov = ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
        })
        .sum();
    total / mu_a.len() as f64
}

/// Mean structural similarity, averaged over channels.
pub fn ssim(a: &RgbImage, b: &RgbImage) -> Result<f64> {
    check_shapes(a, b)?;
    let (c, h, w) = a.tensor().dims3()?;
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(HernError::Dimension(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {h}x{w}"
        )));
    }
    let (x, y) = (clamped(a), clamped(b));
    let k = gaussian_window();
    let plane = h * w;
    let sum: f64 = (0..c)
        .map(|ch| ssim_plane(&x[ch * plane..(ch + 1) * plane], &y[ch * plane..(ch + 1) * plane], h, w, &k))
        .sum();
    Ok(sum / c as f64)
}
