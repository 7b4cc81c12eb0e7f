use crate::error::{HernError, Result};
use crate::tensor::{Scalar, Tensor};

fn check_batch<T: Scalar>(pred: &[Tensor<T>], target: &[Tensor<T>]) -> Result<()> {
    if pred.is_empty() {
        return Err(HernError::Shape("L1 loss over an empty batch".into()));
    }
    if pred.len() != target.len() {
        return Err(HernError::Shape(format!(
            "batch of {} predictions vs {} targets",
            pred.len(),
            target.len()
        )));
    }
    for (i, (p, t)) in pred.iter().zip(target).enumerate() {
        if p.shape() != t.shape() {
            return Err(HernError::Shape(format!(
                "sample {i}: prediction {:?} vs target {:?}",
                p.shape(),
                t.shape()
            )));
        }
    }
    Ok(())
}

/// Batch mean of the per-pixel mean absolute error.
pub fn l1_loss<T: Scalar>(pred: &[Tensor<T>], target: &[Tensor<T>]) -> Result<T> {
    check_batch(pred, target)?;
    let n = T::from_usize(pred.len()).unwrap();
    let total: T = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let sum: T = p.data().iter().zip(t.data()).map(|(&a, &b)| (a - b).abs()).sum();
            sum / T::from_usize(p.len().max(1)).unwrap()
        })
        .sum();
    Ok(total / n)
}

/// Gradient of [`l1_loss`] w.r.t. one prediction of a batch of `batch`.
/// The subgradient at zero residual is taken as zero.
pub fn l1_loss_grad<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>, batch: usize) -> Result<Tensor<T>> {
    if pred.shape() != target.shape() {
        return Err(HernError::Shape(format!(
            "prediction {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let scale = T::one() / T::from_usize(batch * pred.len().max(1)).unwrap();
    Tensor::new(
        pred.shape().to_vec(),
        pred.data()
            .iter()
            .zip(target.data())
            .map(|(&a, &b)| {
                if a > b {
                    scale
                } else if a < b {
                    -scale
                } else {
                    T::zero()
                }
            })
            .collect(),
    )
}
