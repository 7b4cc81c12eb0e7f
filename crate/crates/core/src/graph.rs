//! Reverse-mode differentiation over a recorded operation tape.
//!
//! A [`Graph`] records every intermediate value of one forward evaluation.
//! Parameters are borrowed from a [`ModelParams`] registry, so building a
//! graph never copies weights. [`Graph::backward`] replays the tape in
//! reverse and returns gradients for every parameter that was read and for
//! every input leaf created with [`Graph::input`].

use std::borrow::Cow;
use std::collections::HashMap;

use crate::error::{HernError, Result};
use crate::kernels;
use crate::params::ModelParams;
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param(String),
    Conv {
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
    },
    ConvT {
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
        out_pad: usize,
    },
    PRelu {
        x: Var,
        slope: Var,
    },
    Add(Var, Var),
    Concat(Vec<Var>),
    /// `[C, H, W] + v[C]` broadcast over space.
    AddChannelVec {
        x: Var,
        v: Var,
    },
    /// `[C, H, W] -> [C]` spatial mean.
    MeanPool(Var),
    Resize {
        x: Var,
    },
}

struct Node<'p, T: Scalar> {
    op: Op,
    value: Cow<'p, Tensor<T>>,
}

pub struct Graph<'p, T: Scalar> {
    params: &'p ModelParams<T>,
    nodes: Vec<Node<'p, T>>,
    param_vars: HashMap<String, Var>,
}

/// Result of [`Graph::backward`].
pub struct Gradients<T> {
    by_var: Vec<Option<Tensor<T>>>,
    params: HashMap<String, Tensor<T>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient w.r.t. an input leaf, zero-shaped `None` if it did not
    /// influence the output.
    pub fn wrt(&self, v: Var) -> Option<&Tensor<T>> {
        self.by_var.get(v.0).and_then(Option::as_ref)
    }

    pub fn param(&self, name: &str) -> Option<&Tensor<T>> {
        self.params.get(name)
    }

    /// Gradients laid out like `like`; parameters not reached are zero.
    pub fn into_params(mut self, like: &ModelParams<T>) -> ModelParams<T> {
        let mut out = like.zeros_like();
        for (name, t) in out.iter_mut() {
            if let Some(g) = self.params.remove(name) {
                *t = g;
            }
        }
        out
    }
}

impl<'p, T: Scalar> Graph<'p, T> {
    pub fn new(params: &'p ModelParams<T>) -> Self {
        Graph {
            params,
            nodes: Vec::new(),
            param_vars: HashMap::new(),
        }
    }

    pub fn params(&self) -> &'p ModelParams<T> {
        self.params
    }

    fn push(&mut self, op: Op, value: Cow<'p, Tensor<T>>) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn into_value(mut self, v: Var) -> Tensor<T> {
        let node = self.nodes.swap_remove(v.0);
        node.value.into_owned()
    }

    pub fn input(&mut self, t: Tensor<T>) -> Var {
        self.push(Op::Input, Cow::Owned(t))
    }

    pub fn param(&mut self, name: &str) -> Result<Var> {
        if let Some(&v) = self.param_vars.get(name) {
            return Ok(v);
        }
        let t = self.params.get(name)?;
        let v = self.push(Op::Param(name.to_string()), Cow::Borrowed(t));
        self.param_vars.insert(name.to_string(), v);
        Ok(v)
    }

    pub fn conv(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let y = kernels::conv2d(
            self.value(x),
            self.value(w),
            b.map(|b| self.value(b)),
            stride,
            pad,
        )?;
        Ok(self.push(
            Op::Conv {
                x,
                w,
                b,
                stride,
                pad,
            },
            Cow::Owned(y),
        ))
    }

    pub fn conv_t(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
        out_pad: usize,
    ) -> Result<Var> {
        let y = kernels::conv_transpose2d(
            self.value(x),
            self.value(w),
            b.map(|b| self.value(b)),
            stride,
            pad,
            out_pad,
        )?;
        Ok(self.push(
            Op::ConvT {
                x,
                w,
                b,
                stride,
                pad,
                out_pad,
            },
            Cow::Owned(y),
        ))
    }

    /// Single learnable negative slope shared by all channels.
    pub fn prelu(&mut self, x: Var, slope: Var) -> Result<Var> {
        let a = match self.value(slope).data() {
            [a] => *a,
            _ => return Err(HernError::Shape("PReLU slope must be a single scalar".into())),
        };
        let y = self
            .value(x)
            .map(|v| if v > T::zero() { v } else { a * v });
        Ok(self.push(Op::PRelu { x, slope }, Cow::Owned(y)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(HernError::Shape(format!(
                "add of {:?} and {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        let mut y = self.value(a).clone();
        y.add_assign(self.value(b));
        Ok(self.push(Op::Add(a, b), Cow::Owned(y)))
    }

    /// Channel-wise concatenation of `[C_i, H, W]` maps.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let (_, h, w) = self.value(parts[0]).dims3()?;
        let mut data = Vec::new();
        let mut channels = 0;
        for &p in parts {
            let (c, ph, pw) = self.value(p).dims3()?;
            if (ph, pw) != (h, w) {
                return Err(HernError::Shape(format!(
                    "concat of {h}x{w} and {ph}x{pw} maps"
                )));
            }
            channels += c;
            data.extend_from_slice(self.value(p).data());
        }
        let y = Tensor::new(vec![channels, h, w], data)?;
        Ok(self.push(Op::Concat(parts.to_vec()), Cow::Owned(y)))
    }

    pub fn add_channel_vec(&mut self, x: Var, v: Var) -> Result<Var> {
        let (c, h, w) = self.value(x).dims3()?;
        if self.value(v).shape() != [c] {
            return Err(HernError::Shape(format!(
                "cannot broadcast {:?} over {c} channels",
                self.value(v).shape()
            )));
        }
        let mut y = self.value(x).clone();
        let vec = self.value(v).data();
        for (plane, &b) in y.data_mut().chunks_mut(h * w).zip(vec) {
            plane.iter_mut().for_each(|p| *p += b);
        }
        Ok(self.push(Op::AddChannelVec { x, v }, Cow::Owned(y)))
    }

    pub fn mean_pool(&mut self, x: Var) -> Result<Var> {
        let (c, h, w) = self.value(x).dims3()?;
        if h * w == 0 {
            return Err(HernError::Shape("mean pool over empty map".into()));
        }
        let n = T::from_usize(h * w).unwrap();
        let y = Tensor::from_fn(&[c], |ch| self.value(x).plane(ch).iter().copied().sum::<T>() / n);
        Ok(self.push(Op::MeanPool(x), Cow::Owned(y)))
    }

    pub fn resize(&mut self, x: Var, oh: usize, ow: usize) -> Result<Var> {
        let y = kernels::resize_bilinear(self.value(x), oh, ow)?;
        Ok(self.push(Op::Resize { x }, Cow::Owned(y)))
    }

    /// Backpropagate `grad_out` (same shape as `out`) through the tape.
    /// `x >= 0` for every input element of every PReLU, in tape order.
    /// Two evaluations with equal patterns lie on the same linear piece of
    /// every activation.
    pub fn prelu_input_signs(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for node in &self.nodes {
            if let Op::PRelu { x, .. } = node.op {
                out.extend(self.value(x).data().iter().map(|v| *v >= T::zero()));
            }
        }
        out
    }

    pub fn backward(&self, out: Var, grad_out: Tensor<T>) -> Result<Gradients<T>> {
        if grad_out.shape() != self.value(out).shape() {
            return Err(HernError::Shape("output gradient shape mismatch".into()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out.0] = Some(grad_out);
        let mut params = HashMap::new();

        fn acc<T: Scalar>(grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot => *slot = Some(g),
            }
        }

        for idx in (0..=out.0).rev() {
            let node = &self.nodes[idx];
            let g = match &node.op {
                Op::Input => continue,
                Op::Param(name) => {
                    if let Some(g) = grads[idx].take() {
                        params.insert(name.clone(), g);
                    }
                    continue;
                }
                _ => match grads[idx].take() {
                    Some(g) => g,
                    None => continue,
                },
            };
            match &node.op {
                Op::Input | Op::Param(_) => unreachable!(),
                Op::Conv {
                    x,
                    w,
                    b,
                    stride,
                    pad,
                } => {
                    let cg = kernels::conv2d_backward(self.value(*x), self.value(*w), *stride, *pad, &g)?;
                    acc(&mut grads, *x, cg.input);
                    acc(&mut grads, *w, cg.weight);
                    if let Some(b) = b {
                        acc(&mut grads, *b, cg.bias);
                    }
                }
                Op::ConvT {
                    x,
                    w,
                    b,
                    stride,
                    pad,
                    out_pad,
                } => {
                    let cg = kernels::conv_transpose2d_backward(
                        self.value(*x),
                        self.value(*w),
                        *stride,
                        *pad,
                        *out_pad,
                        &g,
                    )?;
                    acc(&mut grads, *x, cg.input);
                    acc(&mut grads, *w, cg.weight);
                    if let Some(b) = b {
                        acc(&mut grads, *b, cg.bias);
                    }
                }
                Op::PRelu { x, slope } => {
                    let a = self.value(*slope).data()[0];
                    let xv = self.value(*x);
                    let mut da = T::zero();
                    let dx = Tensor::from_fn(xv.shape(), |i| {
                        let v = xv.data()[i];
                        if v > T::zero() {
                            g.data()[i]
                        } else {
                            da += v * g.data()[i];
                            a * g.data()[i]
                        }
                    });
                    acc(&mut grads, *x, dx);
                    acc(&mut grads, *slope, Tensor::full(&[1], da));
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g);
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let shape = self.value(p).shape().to_vec();
                        let n = self.value(p).len();
                        let part = Tensor::new(shape, g.data()[offset..offset + n].to_vec())?;
                        offset += n;
                        acc(&mut grads, p, part);
                    }
                }
                Op::AddChannelVec { x, v } => {
                    let (c, h, w) = g.dims3()?;
                    let dv = Tensor::from_fn(&[c], |ch| g.data()[ch * h * w..(ch + 1) * h * w].iter().copied().sum());
                    acc(&mut grads, *v, dv);
                    acc(&mut grads, *x, g);
                }
                Op::MeanPool(x) => {
                    let (c, h, w) = self.value(*x).dims3()?;
                    let n = T::from_usize(h * w).unwrap();
                    let dx = Tensor::from_fn(&[c, h, w], |i| g.data()[i / (h * w)] / n);
                    acc(&mut grads, *x, dx);
                }
                Op::Resize { x } => {
                    let (_, h, w) = self.value(*x).dims3()?;
                    acc(&mut grads, *x, kernels::resize_bilinear_backward(&g, h, w)?);
                }
            }
        }
        Ok(Gradients {
            by_var: grads,
            params,
        })
    }
}
