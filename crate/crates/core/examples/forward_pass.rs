//! One set of weights at several input sizes, plus padded inference for
//! sides that are not multiples of 4.

use hern::model::param_specs;
use hern::{Hern, ModelConfig, RawPatch, Tensor};
use rand::Rng;

fn random_raw(h: usize, w: usize, seed: u64) -> RawPatch {
    let mut rng = hern::seed::rng(seed);
    RawPatch::new(Tensor::from_fn(&[4, h, w], |_| rng.random_range(0.0..1.0))).unwrap()
}

fn main() -> hern::Result<()> {
    for (name, cfg) in [("tiny", ModelConfig::tiny()), ("full", ModelConfig::default())] {
        let n: usize = param_specs(&cfg).iter().map(|s| s.shape.iter().product::<usize>()).sum();
        println!("{name}: {} tensors, {n} parameters", param_specs(&cfg).len());
    }

    let model = Hern::new(ModelConfig::tiny(), 7)?;
    for side in [16, 32, 72] {
        let y = model.forward(&random_raw(side, side, side as u64))?;
        println!("forward {side}x{side} -> {:?}", y.tensor().shape());
    }

    let y = model.infer(&random_raw(5, 7, 1))?;
    println!("infer 5x7 (reflect-padded to 8x8) -> {:?}", y.tensor().shape());

    let s2 = Hern::new(ModelConfig { output_scale: 2, ..ModelConfig::tiny() }, 7)?;
    println!("scale 2, 16x16 -> {:?}", s2.forward(&random_raw(16, 16, 3))?.tensor().shape());

    if let Err(e) = model.forward(&random_raw(6, 8, 2)) {
        println!("forward 6x8: {e}");
    }
    Ok(())
}
