//! Flip self-ensemble turns any model into a flip-equivariant one.

use hern::ensemble::{self_ensemble, FlipTransform};
use hern::{Hern, ModelConfig, RawPatch, Tensor};
use rand::Rng;

fn main() -> hern::Result<()> {
    let model = Hern::new(ModelConfig::tiny(), 21)?;
    let mut rng = hern::seed::rng(5);
    let x = RawPatch::new(Tensor::from_fn(&[4, 16, 16], |_| rng.random_range(0.0..1.0)))?;
    let f = |r: &RawPatch| model.forward(r);
    let g = |r: &RawPatch| self_ensemble(f, r);

    for t in FlipTransform::ALL.into_iter().skip(1) {
        let plain = t.apply(f(&x)?.tensor()).max_abs_diff(f(&t.apply_raw(&x))?.tensor());
        let ens = t.apply(g(&x)?.tensor()).max_abs_diff(g(&t.apply_raw(&x))?.tensor());
        println!("{t:?}: single pass gap {plain:.2e}, self-ensemble gap {ens:.2e}");
    }
    Ok(())
}
