use crate::error::{HernError, Result};
use crate::params::ModelParams;
use crate::tensor::Scalar;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First/second moment estimates and the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T = f32> {
    pub m: ModelParams<T>,
    pub v: ModelParams<T>,
    pub step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &ModelParams<T>) -> Self {
        AdamState {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update in place. Gradients are checked for
/// non-finite values before anything is modified.
pub fn adam_step<T: Scalar>(
    params: &mut ModelParams<T>,
    grads: &ModelParams<T>,
    state: &mut AdamState<T>,
    lr: f64,
) -> Result<()> {
    for (name, g) in grads.iter() {
        if !g.is_finite() {
            return Err(HernError::NonFinite(format!("gradient of `{name}`")));
        }
        let p = params.get(name)?;
        if p.shape() != g.shape() {
            return Err(HernError::Shape(format!(
                "gradient of `{name}` has shape {:?}, parameter {:?}",
                g.shape(),
                p.shape()
            )));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (T::lit(BETA1), T::lit(BETA2));
    let (one, eps, lr) = (T::one(), T::lit(EPSILON), T::lit(lr));
    let c1 = one - b1.powi(t);
    let c2 = one - b2.powi(t);
    for (name, g) in grads.iter() {
        let p = params.get_mut(name)?.data_mut();
        let m = state.m.get_mut(name)?.data_mut();
        let v = state.v.get_mut(name)?.data_mut();
        for i in 0..p.len() {
            let gi = g.data()[i];
            m[i] = b1 * m[i] + (one - b1) * gi;
            v[i] = b2 * v[i] + (one - b2) * gi * gi;
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn scalar_params(v: f64) -> ModelParams<f64> {
        let mut p = ModelParams::new();
        p.insert("w", Tensor::full(&[1], v));
        p
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut p = scalar_params(0.7);
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &scalar_params(0.0), &mut s, 1e-3).unwrap();
        assert_eq!(p, scalar_params(0.7));
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = scalar_params(0.0);
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &scalar_params(1.0), &mut s, 0.01).unwrap();
        // m_hat / sqrt(v_hat) = 1 on the first step
        let want = -0.01 / (1.0 + EPSILON);
        assert!((p.get("w").unwrap().data()[0] - want).abs() < 1e-15);
    }

    #[test]
    fn nan_gradient_names_parameter_and_leaves_state() {
        let mut p = scalar_params(0.5);
        let mut s = AdamState::new(&p);
        let err = adam_step(&mut p, &scalar_params(f64::NAN), &mut s, 0.1).unwrap_err();
        assert!(err.to_string().contains("`w`"));
        assert_eq!(s.step, 0);
        assert_eq!(p, scalar_params(0.5));
    }

    #[test]
    fn repeated_runs_are_identical() {
        let run = || {
            let mut p = scalar_params(1.0);
            let mut s = AdamState::new(&p);
            for k in 0..20 {
                adam_step(&mut p, &scalar_params((k as f64).sin()), &mut s, 0.05).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
    }
}
