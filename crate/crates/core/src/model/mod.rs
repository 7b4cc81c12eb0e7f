//! The dual-path demosaicing network.
//!
//! ```text
//!             ┌─ global path: 2x stride-2 conv ─ G residual groups ─ conv ─(+)─ 2x stride-2 deconv ─┐
//! raw ─ head ─┤                                                                                     concat ─ fusion ─(+ encoder vec)─ tail ─ rgb
//!             └─ local path: 1x1 entry ─ M multi-scale residual blocks ─────────────────────────────┘
//! raw ─ resize to fixed_res ─ P stride-2 convs ─ spatial mean ─ encoder vec
//! ```
//!
//! Every building block is exposed twice: as a graph builder taking a
//! [`Graph`] (used for training and gradient checks) and as a plain function
//! over a [`FeatureMap`].

mod config;
mod layout;

pub use config::ModelConfig;
pub use layout::{init_params, param_specs, ParamKind, ParamSpec, RESIDUAL_INIT_SCALE};

use crate::cfa::{RawPatch, RgbImage};
use crate::error::{HernError, Result};
use crate::graph::{Graph, Var};
use crate::params::ModelParams;
use crate::tensor::{Scalar, Tensor};

/// Spatial tier of a feature map.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Resolution {
    /// Packed-RAW resolution.
    Full,
    /// After both stride-2 encoder convs of the global path.
    Quarter,
    /// Encoder input side.
    Fixed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap<T = f32> {
    pub data: Tensor<T>,
    pub tier: Resolution,
}

impl<T: Scalar> FeatureMap<T> {
    pub fn new(data: Tensor<T>, tier: Resolution) -> Self {
        FeatureMap { data, tier }
    }

    pub fn full(data: Tensor<T>) -> Self {
        Self::new(data, Resolution::Full)
    }
}

fn conv<T: Scalar>(g: &mut Graph<'_, T>, x: Var, prefix: &str, stride: usize, pad: usize) -> Result<Var> {
    let w = g.param(&format!("{prefix}.weight"))?;
    let b = g.param(&format!("{prefix}.bias"))?;
    g.conv(x, w, Some(b), stride, pad)
}

/// Same-padded odd-kernel conv; kernel size read from the weight.
fn conv_same<T: Scalar>(g: &mut Graph<'_, T>, x: Var, prefix: &str) -> Result<Var> {
    let k = g.params().get(&format!("{prefix}.weight"))?.shape()[2];
    conv(g, x, prefix, 1, k / 2)
}

/// Stride-2 transposed conv that exactly doubles both sides.
fn upsample<T: Scalar>(g: &mut Graph<'_, T>, x: Var, prefix: &str) -> Result<Var> {
    let w = g.param(&format!("{prefix}.weight"))?;
    let b = g.param(&format!("{prefix}.bias"))?;
    g.conv_t(x, w, Some(b), 2, 1, 1)
}

fn prelu<T: Scalar>(g: &mut Graph<'_, T>, x: Var, prefix: &str) -> Result<Var> {
    let a = g.param(&format!("{prefix}.slope"))?;
    g.prelu(x, a)
}

fn expect_channels<T: Scalar>(g: &Graph<'_, T>, x: Var, want: usize, what: &str) -> Result<()> {
    let (c, _, _) = g.value(x).dims3()?;
    if c != want {
        return Err(HernError::Shape(format!(
            "{what} expects {want} channels, got {c}"
        )));
    }
    Ok(())
}

fn weight_out_channels<T: Scalar>(g: &Graph<'_, T>, prefix: &str) -> Result<usize> {
    Ok(g.params().get(&format!("{prefix}.weight"))?.shape()[0])
}

pub mod graph_ops {
    //! Graph builders for each block. `prefix` is the parameter path of the
    //! block, e.g. `global.groups.0.blocks.3`.

    use super::*;

    /// `x + conv(prelu(conv(x)))`, no channel attention.
    pub fn rir_block<T: Scalar>(g: &mut Graph<'_, T>, x: Var, prefix: &str) -> Result<Var> {
        let width = weight_out_channels(g, &format!("{prefix}.conv1"))?;
        expect_channels(g, x, width, "RIR block")?;
        let h = conv_same(g, x, &format!("{prefix}.conv1"))?;
        let h = prelu(g, h, &format!("{prefix}.act"))?;
        let h = conv_same(g, h, &format!("{prefix}.conv2"))?;
        g.add(x, h)
    }

    /// `x + conv(rir_block^B(x))`.
    pub fn residual_group<T: Scalar>(g: &mut Graph<'_, T>, x: Var, prefix: &str, blocks: usize) -> Result<Var> {
        let mut h = x;
        for b in 0..blocks {
            h = rir_block(g, h, &format!("{prefix}.blocks.{b}"))?;
        }
        let h = conv_same(g, h, &format!("{prefix}.conv"))?;
        g.add(x, h)
    }

    /// Encoder to quarter resolution, residual groups with a long skip,
    /// decoder back to full resolution.
    pub fn global_path<T: Scalar>(g: &mut Graph<'_, T>, x: Var, cfg: &ModelConfig) -> Result<Var> {
        let (_, h, w) = g.value(x).dims3()?;
        if h % 4 != 0 || w % 4 != 0 {
            return Err(HernError::Shape(format!(
                "global path needs sides divisible by 4, got {h}x{w}; pad by {}x{} (see infer_padded)",
                (4 - h % 4) % 4,
                (4 - w % 4) % 4
            )));
        }
        expect_channels(g, x, cfg.global_width, "global path")?;
        let mut e = x;
        for i in 0..2 {
            e = conv(g, e, &format!("global.enc.{i}"), 2, 1)?;
            e = prelu(g, e, &format!("global.enc.{i}.act"))?;
        }
        let mut t = e;
        for gi in 0..cfg.groups {
            t = residual_group(g, t, &format!("global.groups.{gi}"), cfg.blocks)?;
        }
        let t = conv_same(g, t, "global.trunk")?;
        let mut d = g.add(e, t)?;
        for i in 0..2 {
            d = upsample(g, d, &format!("global.dec.{i}"))?;
            d = prelu(g, d, &format!("global.dec.{i}.act"))?;
        }
        Ok(d)
    }

    /// Two-stage 3x3/5x5 feature exchange with a 1x1 bottleneck and a
    /// residual connection.
    pub fn msrb<T: Scalar>(g: &mut Graph<'_, T>, x: Var, prefix: &str) -> Result<Var> {
        let width = weight_out_channels(g, &format!("{prefix}.conv3_1"))?;
        expect_channels(g, x, width, "MSRB")?;
        let p1 = conv_same(g, x, &format!("{prefix}.conv3_1"))?;
        let p1 = prelu(g, p1, &format!("{prefix}.act3_1"))?;
        let q1 = conv_same(g, x, &format!("{prefix}.conv5_1"))?;
        let q1 = prelu(g, q1, &format!("{prefix}.act5_1"))?;
        let pq = g.concat(&[p1, q1])?;
        let qp = g.concat(&[q1, p1])?;
        let p2 = conv_same(g, pq, &format!("{prefix}.conv3_2"))?;
        let p2 = prelu(g, p2, &format!("{prefix}.act3_2"))?;
        let q2 = conv_same(g, qp, &format!("{prefix}.conv5_2"))?;
        let q2 = prelu(g, q2, &format!("{prefix}.act5_2"))?;
        let cat = g.concat(&[p2, q2])?;
        let f = conv(g, cat, &format!("{prefix}.fuse"), 1, 0)?;
        g.add(x, f)
    }

    /// 1x1 entry conv from the head width followed by `M` MSRBs.
    pub fn local_path<T: Scalar>(g: &mut Graph<'_, T>, x: Var, cfg: &ModelConfig) -> Result<Var> {
        expect_channels(g, x, cfg.global_width, "local path")?;
        let mut h = conv(g, x, "local.entry", 1, 0)?;
        for m in 0..cfg.msrbs {
            h = msrb(g, h, &format!("local.msrb.{m}"))?;
        }
        Ok(h)
    }

    /// Bilinear resize to `fixed_res`, `P` stride-2 conv+PReLU layers and a
    /// spatial mean, giving a vector of length `encoder_dim`.
    pub fn pyramid_encoder<T: Scalar>(g: &mut Graph<'_, T>, raw: Var, cfg: &ModelConfig) -> Result<Var> {
        let (_, h, w) = g.value(raw).dims3()?;
        if h == 0 || w == 0 {
            return Err(HernError::Shape("pyramid encoder got an empty image".into()));
        }
        let mut e = g.resize(raw, cfg.fixed_res, cfg.fixed_res)?;
        for p in 0..cfg.encoder_convs {
            e = conv(g, e, &format!("encoder.convs.{p}"), 2, 1)?;
            e = prelu(g, e, &format!("encoder.convs.{p}.act"))?;
        }
        g.mean_pool(e)
    }

    /// Full network from a packed RAW `[4, H, W]` to RGB `[3, sH, sW]`.
    pub fn hern<T: Scalar>(g: &mut Graph<'_, T>, raw: Var, cfg: &ModelConfig) -> Result<Var> {
        let (c, h, w) = g.value(raw).dims3()?;
        if c != 4 {
            return Err(HernError::Shape(format!(
                "network input needs 4 packed channels, got {c}"
            )));
        }
        if h % 4 != 0 || w % 4 != 0 || h == 0 || w == 0 {
            return Err(HernError::Dimension(format!(
                "input {h}x{w} must be divisible by 4; reflect-pad with infer_padded"
            )));
        }
        let head = conv_same(g, raw, "head")?;
        let global = global_path(g, head, cfg)?;
        let local = local_path(g, head, cfg)?;
        let cat = g.concat(&[global, local])?;
        let fused = conv_same(g, cat, "fusion")?;
        let code = pyramid_encoder(g, raw, cfg)?;
        let mut t = g.add_channel_vec(fused, code)?;
        if cfg.output_scale == 2 {
            t = upsample(g, t, "tail.up")?;
        }
        conv_same(g, t, "tail.conv")
    }
}

fn eval<T: Scalar>(
    params: &ModelParams<T>,
    x: &Tensor<T>,
    f: impl FnOnce(&mut Graph<'_, T>, Var) -> Result<Var>,
) -> Result<Tensor<T>> {
    let mut g = Graph::new(params);
    let input = g.input(x.clone());
    let out = f(&mut g, input)?;
    Ok(g.into_value(out))
}

pub fn rir_block<T: Scalar>(x: &FeatureMap<T>, params: &ModelParams<T>, prefix: &str) -> Result<FeatureMap<T>> {
    let data = eval(params, &x.data, |g, v| graph_ops::rir_block(g, v, prefix))?;
    Ok(FeatureMap::new(data, x.tier))
}

pub fn residual_group<T: Scalar>(
    x: &FeatureMap<T>,
    params: &ModelParams<T>,
    prefix: &str,
    blocks: usize,
) -> Result<FeatureMap<T>> {
    let data = eval(params, &x.data, |g, v| graph_ops::residual_group(g, v, prefix, blocks))?;
    Ok(FeatureMap::new(data, x.tier))
}

pub fn global_path<T: Scalar>(x: &FeatureMap<T>, params: &ModelParams<T>, cfg: &ModelConfig) -> Result<FeatureMap<T>> {
    let data = eval(params, &x.data, |g, v| graph_ops::global_path(g, v, cfg))?;
    Ok(FeatureMap::full(data))
}

pub fn msrb<T: Scalar>(x: &FeatureMap<T>, params: &ModelParams<T>, prefix: &str) -> Result<FeatureMap<T>> {
    let data = eval(params, &x.data, |g, v| graph_ops::msrb(g, v, prefix))?;
    Ok(FeatureMap::new(data, x.tier))
}

pub fn local_path<T: Scalar>(x: &FeatureMap<T>, params: &ModelParams<T>, cfg: &ModelConfig) -> Result<FeatureMap<T>> {
    let data = eval(params, &x.data, |g, v| graph_ops::local_path(g, v, cfg))?;
    Ok(FeatureMap::full(data))
}

/// Encoder vector of a packed RAW tensor `[4, H, W]`.
pub fn pyramid_encoder<T: Scalar>(raw: &Tensor<T>, params: &ModelParams<T>, cfg: &ModelConfig) -> Result<Vec<T>> {
    Ok(eval(params, raw, |g, v| graph_ops::pyramid_encoder(g, v, cfg))?.into_data())
}

/// Network output for a packed RAW tensor whose sides are multiples of 4.
pub fn hern_forward<T: Scalar>(raw: &Tensor<T>, params: &ModelParams<T>, cfg: &ModelConfig) -> Result<Tensor<T>> {
    eval(params, raw, |g, v| graph_ops::hern(g, v, cfg))
}

/// Reflect padding (edge sample not repeated) on the bottom and right.
pub fn reflect_pad<T: Scalar>(x: &Tensor<T>, pad_h: usize, pad_w: usize) -> Result<Tensor<T>> {
    let (c, h, w) = x.dims3()?;
    if pad_h >= h.max(1) || pad_w >= w.max(1) {
        return Err(HernError::Dimension(format!(
            "cannot reflect-pad {h}x{w} by {pad_h}x{pad_w}"
        )));
    }
    let (ph, pw) = (h + pad_h, w + pad_w);
    let reflect = |i: usize, n: usize| if i < n { i } else { 2 * (n - 1) - i };
    Ok(Tensor::from_fn(&[c, ph, pw], |i| {
        let (ch, r) = (i / (ph * pw), i % (ph * pw));
        x.at3(ch, reflect(r / pw, h), reflect(r % pw, w))
    }))
}

/// Arbitrary-size inference: reflect-pad to multiples of 4, run the network
/// and crop back to `scale x` the original size.
pub fn infer_padded<T: Scalar>(raw: &Tensor<T>, params: &ModelParams<T>, cfg: &ModelConfig) -> Result<Tensor<T>> {
    let (_, h, w) = raw.dims3()?;
    if h < 4 || w < 4 {
        return Err(HernError::Dimension(format!(
            "padded inference needs sides of at least 4, got {h}x{w}"
        )));
    }
    let (pad_h, pad_w) = ((4 - h % 4) % 4, (4 - w % 4) % 4);
    if pad_h == 0 && pad_w == 0 {
        return hern_forward(raw, params, cfg);
    }
    let padded = reflect_pad(raw, pad_h, pad_w)?;
    let out = hern_forward(&padded, params, cfg)?;
    let s = cfg.output_scale;
    crate::cfa::crop(&out, 0, 0, s * h, s * w)
}

/// A configured network with 32-bit parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Hern {
    pub config: ModelConfig,
    pub params: ModelParams<f32>,
}

impl Hern {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let params = init_params(&config, seed);
        Ok(Hern { config, params })
    }

    pub fn from_parts(config: ModelConfig, params: ModelParams<f32>) -> Result<Self> {
        config.validate()?;
        check_params(&config, &params)?;
        Ok(Hern { config, params })
    }

    pub fn forward(&self, raw: &RawPatch) -> Result<RgbImage> {
        RgbImage::new(hern_forward(raw.tensor(), &self.params, &self.config)?)
    }

    pub fn infer(&self, raw: &RawPatch) -> Result<RgbImage> {
        RgbImage::new(infer_padded(raw.tensor(), &self.params, &self.config)?)
    }
}

/// Check that `params` has exactly the tensors and shapes `cfg` implies.
/// The error names the first offending tensor in path order.
pub fn check_params<T: Scalar>(cfg: &ModelConfig, params: &ModelParams<T>) -> Result<()> {
    let mut specs = param_specs(cfg);
    specs.sort_by(|a, b| a.name.cmp(&b.name));
    for (name, t) in params.iter() {
        match specs.binary_search_by(|s| s.name.as_str().cmp(name)) {
            Ok(i) if specs[i].shape == t.shape() => {}
            Ok(i) => {
                return Err(HernError::Shape(format!(
                    "tensor `{name}` has shape {:?}, config expects {:?}",
                    t.shape(),
                    specs[i].shape
                )))
            }
            Err(_) => {
                return Err(HernError::Shape(format!(
                    "tensor `{name}` is not part of this config"
                )))
            }
        }
    }
    if let Some(missing) = specs.iter().find(|s| !params.contains(&s.name)) {
        return Err(HernError::Shape(format!(
            "tensor `{}` missing for this config",
            missing.name
        )));
    }
    Ok(())
}
