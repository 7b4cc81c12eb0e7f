//! Central finite-difference check of the analytic gradients.
//!
//! The network is piecewise smooth: PReLU and the L1 loss have kinks at
//! zero. A difference quotient straddling a kink measures an average of two
//! slopes, so each probe compares the activation sign pattern at `p - h`,
//! `p` and `p + h` and shrinks `h` until all three agree.

use crate::error::Result;
use crate::graph::Graph;
use crate::model::{graph_ops, ModelConfig};
use crate::params::ModelParams;
use crate::tensor::Tensor;

use super::{l1_loss, sample_loss_and_grad};

/// Smallest step tried before giving up on finding a smooth neighborhood.
const MIN_STEP: f64 = 1e-9;

/// Worst entry of one parameter tensor.
#[derive(Clone, Debug)]
pub struct TensorCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub analytic: f64,
    pub numeric: f64,
    pub index: usize,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub loss: f64,
    pub tensors: Vec<TensorCheck>,
    /// Probes whose step had to shrink to avoid a kink.
    pub shrunk_steps: usize,
}

impl GradCheckReport {
    pub fn worst(&self) -> Option<&TensorCheck> {
        self.tensors
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }

    pub fn max_rel_error(&self) -> f64 {
        self.worst().map_or(0.0, |t| t.max_rel_error)
    }
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

/// Loss plus the sign pattern of every PReLU input and loss residual.
fn probe(
    params: &ModelParams<f64>,
    cfg: &ModelConfig,
    raw: &Tensor<f64>,
    target: &Tensor<f64>,
) -> Result<(f64, Vec<bool>)> {
    let mut g = Graph::new(params);
    let x = g.input(raw.clone());
    let out = graph_ops::hern(&mut g, x, cfg)?;
    let mut signs = g.prelu_input_signs();
    let pred = g.into_value(out);
    signs.extend(pred.data().iter().zip(target.data()).map(|(p, t)| p >= t));
    let loss = l1_loss(&[pred], std::slice::from_ref(target))?;
    Ok((loss, signs))
}

/// Compare backprop against `(L(p + h) - L(p - h)) / 2h` for every scalar
/// parameter. The numeric side only runs the forward pass.
pub fn check_gradients(
    params: &ModelParams<f64>,
    cfg: &ModelConfig,
    raw: &Tensor<f64>,
    target: &Tensor<f64>,
    step: f64,
    floor: f64,
) -> Result<GradCheckReport> {
    let (loss, grads) = sample_loss_and_grad(params, cfg, raw, target, 1)?;
    let (_, base_signs) = probe(params, cfg, raw, target)?;
    let mut work = params.clone();
    let mut tensors = Vec::new();
    let mut shrunk_steps = 0;
    for (name, analytic) in grads.iter() {
        let mut worst: Option<TensorCheck> = None;
        for i in 0..analytic.len() {
            let orig = work.get(name)?.data()[i];
            let mut h = step;
            let numeric = loop {
                work.get_mut(name)?.data_mut()[i] = orig + h;
                let (up, s_up) = probe(&work, cfg, raw, target)?;
                work.get_mut(name)?.data_mut()[i] = orig - h;
                let (down, s_down) = probe(&work, cfg, raw, target)?;
                work.get_mut(name)?.data_mut()[i] = orig;
                let smooth = s_up == base_signs && s_down == base_signs;
                if smooth || h / 10.0 < MIN_STEP {
                    break (up - down) / (2.0 * h);
                }
                shrunk_steps += 1;
                h /= 10.0;
            };
            let a = analytic.data()[i];
            let err = relative_error(a, numeric, floor);
            if worst.as_ref().is_none_or(|w| err > w.max_rel_error) {
                worst = Some(TensorCheck {
                    name: name.to_string(),
                    max_rel_error: err,
                    analytic: a,
                    numeric,
                    index: i,
                });
            }
        }
        tensors.extend(worst);
    }
    Ok(GradCheckReport {
        loss,
        tensors,
        shrunk_steps,
    })
}
