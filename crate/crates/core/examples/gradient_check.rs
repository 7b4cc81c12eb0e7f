//! Backprop against central finite differences in 64-bit.

use hern::model::{hern_forward, init_params};
use hern::train::gradcheck::check_gradients;
use hern::{ModelConfig, ModelParams, Tensor};
use rand::Rng;

fn main() -> hern::Result<()> {
    let cfg = ModelConfig {
        groups: 1,
        blocks: 1,
        msrbs: 1,
        ..ModelConfig::tiny()
    };
    let mut params: ModelParams<f64> = init_params(&cfg, 3);
    let mut rng = hern::seed::rng(9);
    let raw = Tensor::from_fn(&[4, 8, 8], |_| rng.random_range(0.0..1.0));
    let pred = hern_forward(&raw, &params, &cfg)?;
    // residuals well away from the L1 kink
    let target = pred.map(|v| v - 0.15);
    params.get_mut("tail.conv.bias")?.data_mut()[0] += 0.01;

    let report = check_gradients(&params, &cfg, &raw, &target, 1e-3, 1e-8)?;
    println!("loss {:.6}", report.loss);
    println!("{:<36} {:>10} {:>14} {:>14}", "tensor", "rel err", "analytic", "numeric");
    for t in &report.tensors {
        println!("{:<36} {:>10.2e} {:>14.6e} {:>14.6e}", t.name, t.max_rel_error, t.analytic, t.numeric);
    }
    println!("max relative error {:.2e}, {} probes shrunk near kinks", report.max_rel_error(), report.shrunk_steps);
    Ok(())
}
