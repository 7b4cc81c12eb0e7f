//! Test-time ensembling.
//!
//! Outputs are averaged in unclamped float space; callers clamp once when
//! writing images or scoring. Means are running means in f64, which return
//! the common value exactly when all members agree.

use crate::cfa::{RawPatch, RgbImage};
use crate::error::{HernError, Result};
use crate::tensor::Tensor;
use crate::train::Checkpoint;

pub use crate::cfa::FlipTransform;

/// Running mean of equally shaped tensors, in the given order.
pub fn running_mean(items: &[Tensor<f32>]) -> Result<Tensor<f32>> {
    let first = items
        .first()
        .ok_or_else(|| HernError::Shape("mean of an empty set".into()))?;
    let mut acc: Vec<f64> = first.data().iter().map(|&v| v as f64).collect();
    for (i, t) in items.iter().enumerate().skip(1) {
        if t.shape() != first.shape() {
            return Err(HernError::Shape(format!(
                "cannot average {:?} with {:?}",
                first.shape(),
                t.shape()
            )));
        }
        let n = (i + 1) as f64;
        for (a, &v) in acc.iter_mut().zip(t.data()) {
            *a += (v as f64 - *a) / n;
        }
    }
    Tensor::new(first.shape().to_vec(), acc.into_iter().map(|v| v as f32).collect())
}

/// Average of `t⁻¹(f(t(raw)))` over the four flips, in the order
/// identity, horizontal, vertical, both.
pub fn self_ensemble<F>(model_fn: F, raw: &RawPatch) -> Result<RgbImage>
where
    F: Fn(&RawPatch) -> Result<RgbImage>,
{
    let mut outs = Vec::with_capacity(4);
    for t in FlipTransform::ALL {
        let y = model_fn(&t.apply_raw(raw))?;
        outs.push(t.inverse().apply(y.tensor()));
    }
    RgbImage::new(running_mean(&outs)?)
}

/// Mean prediction over checkpoints, each optionally self-ensembled.
///
/// Outputs are reduced in a canonical order (stage, epoch, then output bit
/// pattern), so any permutation of `checkpoints` gives bit-identical
/// results.
pub fn epoch_ensemble(checkpoints: &[Checkpoint], raw: &RawPatch, self_ens: bool) -> Result<RgbImage> {
    let first = checkpoints
        .first()
        .ok_or_else(|| HernError::Config("epoch ensemble needs at least one checkpoint".into()))?;
    if let Some((i, _)) = checkpoints
        .iter()
        .enumerate()
        .find(|(_, c)| c.config != first.config)
    {
        return Err(HernError::Config(format!(
            "checkpoint {i} has a different model config than checkpoint 0"
        )));
    }
    let mut outs = Vec::with_capacity(checkpoints.len());
    for ck in checkpoints {
        let model = ck.model()?;
        let y = if self_ens {
            self_ensemble(|r| model.infer(r), raw)?
        } else {
            model.infer(raw)?
        };
        let bits: Vec<u32> = y.tensor().data().iter().map(|v| v.to_bits()).collect();
        outs.push(((ck.stage_index, ck.epoch_index, bits), y.into_tensor()));
    }
    outs.sort_by(|a, b| a.0.cmp(&b.0));
    let tensors: Vec<Tensor<f32>> = outs.into_iter().map(|(_, t)| t).collect();
    RgbImage::new(running_mean(&tensors)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Hern, ModelConfig};
    use crate::train::AdamState;
    use rand::Rng;

    fn raw(h: usize, w: usize, seed: u64) -> RawPatch {
        let mut rng = crate::seed::rng(seed);
        RawPatch::new(Tensor::from_fn(&[4, h, w], |_| rng.random_range(0.0..1.0))).unwrap()
    }

    fn constant_checkpoint(value: f32, epoch: u32) -> Checkpoint {
        let mut m = Hern::new(ModelConfig::tiny(), 1).unwrap();
        m.params.get_mut("tail.conv.weight").unwrap().data_mut().fill(0.0);
        m.params.get_mut("tail.conv.bias").unwrap().data_mut().fill(value);
        let opt = AdamState::new(&m.params);
        Checkpoint::new(m.config, m.params, opt, 0, epoch)
    }

    #[test]
    fn constant_function_is_fixed() {
        let f = |r: &RawPatch| RgbImage::new(Tensor::full(&[3, r.height(), r.width()], 0.37));
        let y = self_ensemble(f, &raw(6, 10, 1)).unwrap();
        assert!(y.tensor().data().iter().all(|&v| v == 0.37));
    }

    #[test]
    fn pointwise_map_is_fixed() {
        // a per-pixel channel mix commutes with every flip
        let f = |r: &RawPatch| {
            let t = r.tensor();
            let (_, h, w) = t.dims3()?;
            RgbImage::new(Tensor::from_fn(&[3, h, w], |i| {
                let (c, p) = (i / (h * w), i % (h * w));
                0.5 * t.data()[c * h * w + p] - 0.2 * t.data()[3 * h * w + p] + 0.1
            }))
        };
        let x = raw(8, 12, 2);
        assert_eq!(self_ensemble(f, &x).unwrap(), f(&x).unwrap());
    }

    #[test]
    fn epoch_ensemble_of_constants() {
        let x = raw(8, 8, 3);
        let y = epoch_ensemble(&[constant_checkpoint(0.2, 0), constant_checkpoint(0.4, 1)], &x, false).unwrap();
        assert!(y.tensor().data().iter().all(|&v| (v - 0.3).abs() < 1e-7));
    }

    #[test]
    fn single_and_repeated_checkpoints_equal_direct_inference() {
        let model = Hern::new(ModelConfig::tiny(), 8).unwrap();
        let ck = Checkpoint::new(model.config.clone(), model.params.clone(), AdamState::new(&model.params), 0, 0);
        let x = raw(5, 7, 4);
        let direct = model.infer(&x).unwrap();
        assert_eq!(epoch_ensemble(std::slice::from_ref(&ck), &x, false).unwrap(), direct);
        assert_eq!(epoch_ensemble(&[ck.clone(), ck.clone(), ck], &x, false).unwrap(), direct);
    }

    #[test]
    fn mixed_configs_rejected() {
        let a = constant_checkpoint(0.1, 0);
        let m = Hern::new(ModelConfig { msrbs: 1, ..ModelConfig::tiny() }, 1).unwrap();
        let b = Checkpoint::new(m.config, m.params.clone(), AdamState::new(&m.params), 0, 1);
        assert!(epoch_ensemble(&[a, b], &raw(8, 8, 0), false).is_err());
        assert!(epoch_ensemble(&[], &raw(8, 8, 0), false).is_err());
    }
}
