//! Parameter naming, shapes and initialization.

use rand_distr::{Distribution, Normal};

use super::ModelConfig;
use crate::params::ModelParams;
use crate::seed;
use crate::tensor::{Scalar, Tensor};

/// Init multiplier on the last conv of every residual branch so that deep
/// residual stacks start close to the identity.
pub const RESIDUAL_INIT_SCALE: f64 = 0.1;

#[derive(Clone, Debug, PartialEq)]
pub enum ParamKind {
    /// Kernel with He fan-in scaling times `gain`.
    Weight { fan_in: usize, gain: f64 },
    Bias,
    Slope,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub kind: ParamKind,
}

#[derive(Default)]
struct Layout {
    specs: Vec<ParamSpec>,
}

impl Layout {
    fn conv(&mut self, prefix: &str, cin: usize, cout: usize, k: usize, gain: f64) {
        self.specs.push(ParamSpec {
            name: format!("{prefix}.weight"),
            shape: vec![cout, cin, k, k],
            kind: ParamKind::Weight {
                fan_in: cin * k * k,
                gain,
            },
        });
        self.bias(prefix, cout);
    }

    /// Transposed conv, weight stored `[in, out, k, k]`.
    fn conv_t(&mut self, prefix: &str, cin: usize, cout: usize, k: usize) {
        self.specs.push(ParamSpec {
            name: format!("{prefix}.weight"),
            shape: vec![cin, cout, k, k],
            kind: ParamKind::Weight {
                fan_in: cout * k * k,
                gain: 1.0,
            },
        });
        self.bias(prefix, cout);
    }

    fn bias(&mut self, prefix: &str, n: usize) {
        self.specs.push(ParamSpec {
            name: format!("{prefix}.bias"),
            shape: vec![n],
            kind: ParamKind::Bias,
        });
    }

    fn prelu(&mut self, prefix: &str) {
        self.specs.push(ParamSpec {
            name: format!("{prefix}.slope"),
            shape: vec![1],
            kind: ParamKind::Slope,
        });
    }
}

/// Every parameter of the network, in construction order.
pub fn param_specs(cfg: &ModelConfig) -> Vec<ParamSpec> {
    let (gw, lw, n) = (cfg.global_width, cfg.local_width, cfg.encoder_dim);
    let mut l = Layout::default();
    l.conv("head", 4, gw, 3, 1.0);

    for i in 0..2 {
        l.conv(&format!("global.enc.{i}"), gw, gw, 3, 1.0);
        l.prelu(&format!("global.enc.{i}.act"));
    }
    for g in 0..cfg.groups {
        for b in 0..cfg.blocks {
            let p = format!("global.groups.{g}.blocks.{b}");
            l.conv(&format!("{p}.conv1"), gw, gw, 3, 1.0);
            l.prelu(&format!("{p}.act"));
            l.conv(&format!("{p}.conv2"), gw, gw, 3, RESIDUAL_INIT_SCALE);
        }
        l.conv(&format!("global.groups.{g}.conv"), gw, gw, 3, RESIDUAL_INIT_SCALE);
    }
    l.conv("global.trunk", gw, gw, 3, RESIDUAL_INIT_SCALE);
    for i in 0..2 {
        l.conv_t(&format!("global.dec.{i}"), gw, gw, 3);
        l.prelu(&format!("global.dec.{i}.act"));
    }

    l.conv("local.entry", gw, lw, 1, 1.0);
    for m in 0..cfg.msrbs {
        let p = format!("local.msrb.{m}");
        l.conv(&format!("{p}.conv3_1"), lw, lw, 3, 1.0);
        l.prelu(&format!("{p}.act3_1"));
        l.conv(&format!("{p}.conv5_1"), lw, lw, 5, 1.0);
        l.prelu(&format!("{p}.act5_1"));
        l.conv(&format!("{p}.conv3_2"), 2 * lw, lw, 3, 1.0);
        l.prelu(&format!("{p}.act3_2"));
        l.conv(&format!("{p}.conv5_2"), 2 * lw, lw, 5, 1.0);
        l.prelu(&format!("{p}.act5_2"));
        l.conv(&format!("{p}.fuse"), 2 * lw, lw, 1, RESIDUAL_INIT_SCALE);
    }

    for p in 0..cfg.encoder_convs {
        let cin = if p == 0 { 4 } else { n };
        l.conv(&format!("encoder.convs.{p}"), cin, n, 3, 1.0);
        l.prelu(&format!("encoder.convs.{p}.act"));
    }

    l.conv("fusion", gw + lw, gw, 3, 1.0);
    if cfg.output_scale == 2 {
        l.conv_t("tail.up", gw, gw, 3);
    }
    l.conv("tail.conv", gw, 3, 3, 1.0);
    l.specs
}

/// He-normal kernels (fan-in, PReLU-aware gain), zero biases and PReLU
/// slopes at `prelu_init`. Each tensor draws from its own named stream, so
/// the result does not depend on iteration order.
pub fn init_params<T: Scalar>(cfg: &ModelConfig, seed: u64) -> ModelParams<T> {
    let a = cfg.prelu_init;
    let mut params = ModelParams::new();
    for spec in param_specs(cfg) {
        let tensor = match spec.kind {
            ParamKind::Weight { fan_in, gain } => {
                let std = gain * (2.0 / ((1.0 + a * a) * fan_in as f64)).sqrt();
                let normal = Normal::new(0.0, std).expect("finite std");
                let tag_seed = seed::derive(seed, &spec.name, &[]);
                let mut rng = seed::derived_rng(tag_seed, "init", &[]);
                Tensor::from_fn(&spec.shape, |_| T::lit(normal.sample(&mut rng)))
            }
            ParamKind::Bias => Tensor::zeros(&spec.shape),
            ParamKind::Slope => Tensor::full(&spec.shape, T::lit(a)),
        };
        params.insert(spec.name, tensor);
    }
    params
}
