//! PSNR and SSIM under increasing noise.

use hern::dataset::synthetic_scene;
use hern::metrics::{format_db, psnr, ssim};
use hern::{RgbImage, Tensor};
use rand_distr::{Distribution, Normal};

fn main() -> hern::Result<()> {
    let clean = synthetic_scene(64, 1);
    println!("identical: PSNR {} SSIM {}", format_db(psnr(&clean, &clean, 1.0)?), ssim(&clean, &clean)?);

    let shifted = RgbImage::new(clean.tensor().map(|v| v + 16.0 / 255.0))?;
    let a = RgbImage::new(Tensor::full(clean.tensor().shape(), 0.25))?;
    let b = RgbImage::new(Tensor::full(clean.tensor().shape(), 0.25 + 16.0 / 255.0))?;
    println!("constant +16/255: PSNR {:.4} dB", psnr(&a, &b, 1.0)?);
    println!("scene +16/255 (clamped at 1): PSNR {:.4} dB", psnr(&clean, &shifted, 1.0)?);

    let mut rng = hern::seed::rng(3);
    for sigma in [0.005f32, 0.02, 0.05, 0.1] {
        let n = Normal::new(0.0, sigma).unwrap();
        let src = clean.tensor();
        let noisy = RgbImage::new(Tensor::from_fn(src.shape(), |i| src.data()[i] + n.sample(&mut rng)))?;
        println!("sigma {sigma:<5}: PSNR {:>7.3} dB  SSIM {:.4}", psnr(&clean, &noisy, 1.0)?, ssim(&clean, &noisy)?);
    }
    Ok(())
}
