//! Synthetic paired datasets and PNG IO.
//!
//! On disk a dataset is
//!
//! ```text
//! <root>/manifest.json
//! <root>/raw/<id>.png   16-bit grayscale RGGB mosaic
//! <root>/rgb/<id>.png   8-bit RGB target
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma, Rgb, RgbImage as PngRgb};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cfa::{pack_bayer, synthesize_raw, unpack_bayer, BayerMosaic, Gains, PairedSample, RgbImage};
use crate::error::{HernError, Result};
use crate::seed;
use crate::tensor::Tensor;

pub const MANIFEST: &str = "manifest.json";

/// Parameters for synthetic pair generation. `size` is the RGB side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub count: usize,
    pub size: usize,
    pub gains: [f32; 3],
    pub noise_sigma: f32,
    pub scale: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            count: 8,
            size: 32,
            gains: Gains::default().0,
            noise_sigma: 0.002,
            scale: 1,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(HernError::Config("synthetic count must be at least 1".into()));
        }
        let unit = 4 * self.scale;
        if self.scale != 1 && self.scale != 2 {
            return Err(HernError::Config(format!("scale must be 1 or 2, got {}", self.scale)));
        }
        if self.size == 0 || !self.size.is_multiple_of(unit) {
            return Err(HernError::Config(format!(
                "synthetic size {} must be a positive multiple of {unit}",
                self.size
            )));
        }
        if self.gains.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
            return Err(HernError::Config(format!("gains must be positive, got {:?}", self.gains)));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(HernError::Config(format!("noise_sigma {} must be >= 0", self.noise_sigma)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub ids: Vec<String>,
    pub scale: usize,
    pub seed: u64,
    pub synthetic: SyntheticSpec,
}

/// Smooth scene of tilted ramps, soft discs and a faint stripe pattern,
/// deterministic in `seed`.
pub fn synthetic_scene(side: usize, seed: u64) -> RgbImage {
    let mut rng = seed::derived_rng(seed, "scene", &[]);
    let base: [f32; 3] = std::array::from_fn(|_| rng.random_range(0.25..0.65));
    let tilt: [(f32, f32); 3] = std::array::from_fn(|_| (rng.random_range(-0.25..0.25), rng.random_range(-0.25..0.25)));
    let discs: Vec<(f32, f32, f32, [f32; 3])> = (0..3)
        .map(|_| {
            (
                rng.random_range(0.1..0.9),
                rng.random_range(0.1..0.9),
                rng.random_range(0.08..0.25),
                std::array::from_fn(|_| rng.random_range(-0.2..0.2)),
            )
        })
        .collect();
    let (freq, amp): (f32, f32) = (rng.random_range(2.0..6.0), rng.random_range(0.0..0.05));
    let s = side as f32;
    let t = Tensor::from_fn(&[3, side, side], |i| {
        let (c, y, x) = (i / (side * side), (i / side) % side, i % side);
        let (u, v) = ((x as f32 + 0.5) / s, (y as f32 + 0.5) / s);
        let mut val = base[c] + tilt[c].0 * (u - 0.5) + tilt[c].1 * (v - 0.5);
        for (cx, cy, r, col) in &discs {
            let d = ((u - cx).powi(2) + (v - cy).powi(2)).sqrt();
            let edge = (1.0 - (d - r) * s / 1.5).clamp(0.0, 1.0);
            val += col[c] * edge;
        }
        val += amp * (std::f32::consts::TAU * freq * (u + 0.5 * v)).sin();
        val.clamp(0.0, 1.0)
    });
    RgbImage::new(t).expect("scene shape")
}

/// Generate `spec.count` pairs; pair `i` depends only on `(seed, i)`.
pub fn generate(spec: &SyntheticSpec, seed: u64) -> Result<Vec<PairedSample>> {
    spec.validate()?;
    (0..spec.count as u64)
        .map(|i| {
            let s = seed::derive(seed, "dataset", &[i]);
            let rgb = synthetic_scene(spec.size, s);
            synthesize_raw(&rgb, Gains(spec.gains), spec.noise_sigma, spec.scale, s)
        })
        .collect()
}

pub fn sample_id(i: usize) -> String {
    format!("{i:05}")
}

/// Write a generated dataset to `root` and return its manifest.
pub fn write_dataset(root: &Path, spec: &SyntheticSpec, seed: u64) -> Result<Manifest> {
    let pairs = generate(spec, seed)?;
    for sub in ["raw", "rgb"] {
        fs::create_dir_all(root.join(sub)).map_err(|e| HernError::io(root.join(sub), e))?;
    }
    let mut ids = Vec::with_capacity(pairs.len());
    for (i, p) in pairs.iter().enumerate() {
        let id = sample_id(i);
        write_mosaic_png(&root.join("raw").join(format!("{id}.png")), &unpack_bayer(&p.raw))?;
        write_rgb_png(&root.join("rgb").join(format!("{id}.png")), &p.rgb)?;
        ids.push(id);
    }
    let manifest = Manifest {
        ids,
        scale: spec.scale,
        seed,
        synthetic: spec.clone(),
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    let path = root.join(MANIFEST);
    fs::write(&path, text + "\n").map_err(|e| HernError::io(path, e))?;
    Ok(manifest)
}

pub fn read_manifest(root: &Path) -> Result<Manifest> {
    let path = root.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| HernError::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| HernError::Dataset(format!("{}: {e}", path.display())))
}

/// Load every pair listed in the manifest, re-checking pair invariants.
pub fn load_dataset(root: &Path) -> Result<Vec<PairedSample>> {
    let manifest = read_manifest(root)?;
    if manifest.ids.is_empty() {
        return Err(HernError::Dataset(format!("{}: manifest lists no samples", root.display())));
    }
    manifest
        .ids
        .iter()
        .map(|id| {
            let raw = pack_bayer(&read_mosaic_png(&root.join("raw").join(format!("{id}.png")))?)?;
            let rgb = read_rgb_png(&root.join("rgb").join(format!("{id}.png")))?;
            PairedSample::new(raw, rgb, manifest.scale)
                .map_err(|e| HernError::Dataset(format!("sample {id}: {e}")))
        })
        .collect()
}

fn image_err(path: &Path, source: image::ImageError) -> HernError {
    HernError::Image {
        path: path.to_path_buf(),
        source,
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => fs::create_dir_all(p).map_err(|e| HernError::io(p, e)),
        _ => Ok(()),
    }
}

/// Clamp, quantize to 8 bits and write.
pub fn write_rgb_png(path: &Path, img: &RgbImage) -> Result<()> {
    ensure_parent(path)?;
    let (h, w) = (img.height(), img.width());
    let t = img.tensor();
    let buf = PngRgb::from_fn(w as u32, h as u32, |x, y| {
        Rgb(std::array::from_fn(|c| quantize8(t.at3(c, y as usize, x as usize))))
    });
    buf.save(path).map_err(|e| image_err(path, e))
}

pub fn quantize8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn read_rgb_png(path: &Path) -> Result<RgbImage> {
    let img = image::open(path).map_err(|e| image_err(path, e))?.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let t = Tensor::from_fn(&[3, h, w], |i| {
        let (c, y, x) = (i / (h * w), (i / w) % h, i % w);
        img.get_pixel(x as u32, y as u32)[c] as f32 / 255.0
    });
    RgbImage::new(t)
}

/// 16-bit grayscale.
pub fn write_mosaic_png(path: &Path, m: &BayerMosaic) -> Result<()> {
    ensure_parent(path)?;
    let w = m.width();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_fn(w as u32, m.height() as u32, |x, y| {
        Luma([(m.data()[y as usize * w + x as usize].clamp(0.0, 1.0) * 65535.0).round() as u16])
    });
    buf.save(path).map_err(|e| image_err(path, e))
}

/// Accepts 8- or 16-bit grayscale (other formats are converted to luma).
pub fn read_mosaic_png(path: &Path) -> Result<BayerMosaic> {
    let img = image::open(path).map_err(|e| image_err(path, e))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f32> = match img {
        image::DynamicImage::ImageLuma8(g) => g.into_raw().into_iter().map(|v| v as f32 / 255.0).collect(),
        other => other.to_luma16().into_raw().into_iter().map(|v| v as f32 / 65535.0).collect(),
    };
    BayerMosaic::new(h, w, data).map_err(|e| HernError::Dataset(format!("{}: {e}", path.display())))
}

/// PNG files in `dir`, sorted by name.
pub fn list_pngs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| HernError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    out.sort();
    Ok(out)
}
