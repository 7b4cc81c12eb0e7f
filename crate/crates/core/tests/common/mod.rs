#![allow(dead_code)]

use hern::dataset::{generate, SyntheticSpec};
use hern::model::{hern_forward, init_params};
use hern::{ModelConfig, ModelParams, PairedSample, Tensor};
use rand::Rng;

pub const GRAD_STEP: f64 = 1e-3;
/// Denominator floor: below this the check is absolute at `1e-4 * floor`.
pub const GRAD_FLOOR: f64 = 1e-8;

/// f64 parameters with random biases, a random packed RAW of `side` and a
/// target whose residuals all sit 0.1 to 0.2 away from the L1 kink.
pub fn grad_case(cfg: &ModelConfig, side: usize, seed: u64) -> (ModelParams<f64>, Tensor<f64>, Tensor<f64>) {
    let mut params: ModelParams<f64> = init_params(cfg, seed);
    let mut rng = hern::seed::rng(seed ^ 0xfeed);
    for (name, t) in params.iter_mut() {
        if name.ends_with(".bias") {
            t.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-0.05..0.05));
        }
    }
    let raw = Tensor::from_fn(&[4, side, side], |_| rng.random_range(0.0..1.0));
    let pred = hern_forward(&raw, &params, cfg).unwrap();
    let target = Tensor::from_fn(pred.shape(), |i| {
        let offset = rng.random_range(0.1..0.2);
        pred.data()[i] + if rng.random::<bool>() { offset } else { -offset }
    });
    (params, raw, target)
}

/// `n` generated pairs of RGB side `side`, noise-free.
pub fn pairs(n: usize, side: usize, seed: u64) -> Vec<PairedSample> {
    let spec = SyntheticSpec {
        count: n,
        size: side,
        noise_sigma: 0.0,
        ..SyntheticSpec::default()
    };
    generate(&spec, seed).unwrap()
}

pub fn random_raw(side_h: usize, side_w: usize, seed: u64) -> hern::RawPatch {
    let mut rng = hern::seed::rng(seed);
    hern::RawPatch::new(Tensor::from_fn(&[4, side_h, side_w], |_| rng.random_range(0.0..1.0))).unwrap()
}

/// A network that acts on each pixel independently, hence commutes with
/// every flip: kernels keep only their centre tap, the encoder is zeroed
/// (so its vector is constant) and fusion ignores the global path.
pub fn pointwise_model(seed: u64) -> hern::Hern {
    let mut m = hern::Hern::new(ModelConfig::tiny(), seed).unwrap();
    let gw = m.config.global_width;
    let names: Vec<String> = m.params.names().map(str::to_owned).collect();
    for name in names {
        let t = m.params.get_mut(&name).unwrap();
        if name.ends_with(".bias") {
            let n = t.len();
            t.data_mut().copy_from_slice(&(0..n).map(|i| 0.01 * i as f32).collect::<Vec<_>>());
            continue;
        }
        if !name.ends_with(".weight") || t.shape().len() != 4 {
            continue;
        }
        let shape = t.shape().to_vec();
        let (cin, k) = (shape[1], shape[2]);
        let zero_all = name.starts_with("encoder.");
        let data = t.data_mut();
        for (i, v) in data.iter_mut().enumerate() {
            let (ky, kx) = ((i / k) % k, i % k);
            let ci = (i / (k * k)) % cin;
            let off_centre = ky != k / 2 || kx != k / 2;
            if zero_all || off_centre || (name == "fusion.weight" && ci < gw) {
                *v = 0.0;
            }
        }
    }
    m
}
