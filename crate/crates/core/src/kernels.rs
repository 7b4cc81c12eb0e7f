//! Convolution, transposed convolution and bilinear resampling kernels with
//! their adjoints. All tensors are planar `[C, H, W]`; conv weights are
//! `[out, in, k, k]` and transposed-conv weights `[in, out, k, k]`.

use crate::error::{HernError, Result};
use crate::tensor::{gemm, Mat, Scalar, Tensor};

/// Geometry linking a "big" image `c x h x w` to a conv output grid
/// `oh x ow` through a square kernel.
#[derive(Clone, Copy, Debug)]
struct Geom {
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl Geom {
    fn rows(&self) -> usize {
        self.c * self.k * self.k
    }

    fn cols(&self) -> usize {
        self.oh * self.ow
    }

    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0 && self.oh == self.h && self.ow == self.w
    }
}

fn im2col<T: Scalar>(x: &[T], g: Geom) -> Vec<T> {
    let mut cols = vec![T::zero(); g.rows() * g.cols()];
    for c in 0..g.c {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (c * g.k + ki) * g.k + kj;
                let dst = &mut cols[row * g.cols()..(row + 1) * g.cols()];
                for oi in 0..g.oh {
                    let y = (oi * g.stride + ki) as isize - g.pad as isize;
                    if y < 0 || y >= g.h as isize {
                        continue;
                    }
                    let src_row = &plane[y as usize * g.w..(y as usize + 1) * g.w];
                    let dst_row = &mut dst[oi * g.ow..(oi + 1) * g.ow];
                    for (oj, d) in dst_row.iter_mut().enumerate() {
                        let x = (oj * g.stride + kj) as isize - g.pad as isize;
                        if x >= 0 && x < g.w as isize {
                            *d = src_row[x as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatter-adds columns back onto the big image.
fn col2im<T: Scalar>(cols: &[T], g: Geom) -> Vec<T> {
    let mut x = vec![T::zero(); g.c * g.h * g.w];
    for c in 0..g.c {
        let plane = &mut x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (c * g.k + ki) * g.k + kj;
                let src = &cols[row * g.cols()..(row + 1) * g.cols()];
                for oi in 0..g.oh {
                    let y = (oi * g.stride + ki) as isize - g.pad as isize;
                    if y < 0 || y >= g.h as isize {
                        continue;
                    }
                    let dst_row = &mut plane[y as usize * g.w..(y as usize + 1) * g.w];
                    for (oj, &s) in src[oi * g.ow..(oi + 1) * g.ow].iter().enumerate() {
                        let x = (oj * g.stride + kj) as isize - g.pad as isize;
                        if x >= 0 && x < g.w as isize {
                            dst_row[x as usize] += s;
                        }
                    }
                }
            }
        }
    }
    x
}

fn add_bias<T: Scalar>(out: &mut [T], bias: &[T], hw: usize) {
    for (plane, &b) in out.chunks_mut(hw).zip(bias) {
        plane.iter_mut().for_each(|v| *v += b);
    }
}

fn bias_grad<T: Scalar>(grad: &[T], channels: usize, hw: usize) -> Tensor<T> {
    Tensor::from_fn(&[channels], |c| grad[c * hw..(c + 1) * hw].iter().copied().sum())
}

fn kernel_dims<T: Scalar>(w: &Tensor<T>) -> Result<(usize, usize, usize)> {
    match w.shape()[..] {
        [a, b, kh, kw] if kh == kw => Ok((a, b, kh)),
        _ => Err(HernError::Shape(format!(
            "expected square 4-d kernel, got {:?}",
            w.shape()
        ))),
    }
}

/// Output side of a strided convolution.
pub fn conv_out_side(side: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    (side + 2 * pad).checked_sub(k).map(|v| v / stride + 1)
}

/// Output side of a transposed convolution.
pub fn conv_t_out_side(side: usize, k: usize, stride: usize, pad: usize, out_pad: usize) -> usize {
    (side - 1) * stride + k + out_pad - 2 * pad
}

fn conv_geom<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, stride: usize, pad: usize) -> Result<(Geom, usize)> {
    let (c, h, wd) = x.dims3()?;
    let (out_c, in_c, k) = kernel_dims(w)?;
    if in_c != c {
        return Err(HernError::Shape(format!(
            "conv expects {in_c} input channels, got {c}"
        )));
    }
    let (oh, ow) = match (conv_out_side(h, k, stride, pad), conv_out_side(wd, k, stride, pad)) {
        (Some(oh), Some(ow)) => (oh, ow),
        _ => {
            return Err(HernError::Shape(format!(
                "{h}x{wd} input too small for {k}x{k} kernel"
            )))
        }
    };
    Ok((
        Geom {
            c,
            h,
            w: wd,
            k,
            stride,
            pad,
            oh,
            ow,
        },
        out_c,
    ))
}

pub fn conv2d<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: Option<&Tensor<T>>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    let (g, out_c) = conv_geom(x, w, stride, pad)?;
    let mut out = vec![T::zero(); out_c * g.cols()];
    let wm = Mat::new(w.data(), out_c, g.rows());
    if g.is_pointwise() {
        gemm(wm, Mat::new(x.data(), g.rows(), g.cols()), &mut out, false);
    } else {
        let cols = im2col(x.data(), g);
        gemm(wm, Mat::new(&cols, g.rows(), g.cols()), &mut out, false);
    }
    if let Some(b) = b {
        add_bias(&mut out, b.data(), g.cols());
    }
    Tensor::new(vec![out_c, g.oh, g.ow], out)
}

pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    stride: usize,
    pad: usize,
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    let (g, out_c) = conv_geom(x, w, stride, pad)?;
    let gy = Mat::new(grad_out.data(), out_c, g.cols());
    let owned_cols;
    let cols: &[T] = if g.is_pointwise() {
        x.data()
    } else {
        owned_cols = im2col(x.data(), g);
        &owned_cols
    };
    let mut dw = vec![T::zero(); out_c * g.rows()];
    gemm(gy, Mat::new(cols, g.rows(), g.cols()).t(), &mut dw, false);
    let mut dcols = vec![T::zero(); g.rows() * g.cols()];
    gemm(Mat::new(w.data(), out_c, g.rows()).t(), gy, &mut dcols, false);
    let dx = if g.is_pointwise() { dcols } else { col2im(&dcols, g) };
    Ok(ConvGrads {
        input: Tensor::new(x.shape().to_vec(), dx)?,
        weight: Tensor::new(w.shape().to_vec(), dw)?,
        bias: bias_grad(grad_out.data(), out_c, g.cols()),
    })
}

fn conv_t_geom<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    stride: usize,
    pad: usize,
    out_pad: usize,
) -> Result<(Geom, usize)> {
    let (c, h, wd) = x.dims3()?;
    let (in_c, out_c, k) = kernel_dims(w)?;
    if in_c != c {
        return Err(HernError::Shape(format!(
            "transposed conv expects {in_c} input channels, got {c}"
        )));
    }
    if h == 0 || wd == 0 {
        return Err(HernError::Shape("empty transposed-conv input".into()));
    }
    // The "big" side of the conv relation is the transposed-conv output.
    Ok((
        Geom {
            c: out_c,
            h: conv_t_out_side(h, k, stride, pad, out_pad),
            w: conv_t_out_side(wd, k, stride, pad, out_pad),
            k,
            stride,
            pad,
            oh: h,
            ow: wd,
        },
        in_c,
    ))
}

pub fn conv_transpose2d<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: Option<&Tensor<T>>,
    stride: usize,
    pad: usize,
    out_pad: usize,
) -> Result<Tensor<T>> {
    let (g, in_c) = conv_t_geom(x, w, stride, pad, out_pad)?;
    let mut cols = vec![T::zero(); g.rows() * g.cols()];
    gemm(
        Mat::new(w.data(), in_c, g.rows()).t(),
        Mat::new(x.data(), in_c, g.cols()),
        &mut cols,
        false,
    );
    let mut out = col2im(&cols, g);
    if let Some(b) = b {
        add_bias(&mut out, b.data(), g.h * g.w);
    }
    Tensor::new(vec![g.c, g.h, g.w], out)
}

pub fn conv_transpose2d_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    stride: usize,
    pad: usize,
    out_pad: usize,
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    let (g, in_c) = conv_t_geom(x, w, stride, pad, out_pad)?;
    let gcols = im2col(grad_out.data(), g);
    let gm = Mat::new(&gcols, g.rows(), g.cols());
    let mut dx = vec![T::zero(); in_c * g.cols()];
    gemm(Mat::new(w.data(), in_c, g.rows()), gm, &mut dx, false);
    let mut dw = vec![T::zero(); in_c * g.rows()];
    gemm(Mat::new(x.data(), in_c, g.cols()), gm.t(), &mut dw, false);
    Ok(ConvGrads {
        input: Tensor::new(x.shape().to_vec(), dx)?,
        weight: Tensor::new(w.shape().to_vec(), dw)?,
        bias: bias_grad(grad_out.data(), g.c, g.h * g.w),
    })
}

/// Source taps for one output coordinate of a half-pixel-centred bilinear
/// resize (the `align_corners = false` convention).
fn taps(out: usize, inp: usize) -> Vec<(usize, usize, f64)> {
    let scale = inp as f64 / out as f64;
    (0..out)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(inp - 1);
            let i1 = (i0 + 1).min(inp - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

pub fn resize_bilinear<T: Scalar>(x: &Tensor<T>, oh: usize, ow: usize) -> Result<Tensor<T>> {
    let (c, h, w) = x.dims3()?;
    if h == 0 || w == 0 || oh == 0 || ow == 0 {
        return Err(HernError::Shape(format!(
            "cannot resize {h}x{w} to {oh}x{ow}"
        )));
    }
    if (h, w) == (oh, ow) {
        return Ok(x.clone());
    }
    let ty = taps(oh, h);
    let tx = taps(ow, w);
    let mut out = Tensor::zeros(&[c, oh, ow]);
    for ch in 0..c {
        let src = x.plane(ch);
        let dst = &mut out.data_mut()[ch * oh * ow..(ch + 1) * oh * ow];
        for (i, &(y0, y1, ly)) in ty.iter().enumerate() {
            let (ly, hy) = (T::lit(ly), T::lit(1.0 - ly));
            for (j, &(x0, x1, lx)) in tx.iter().enumerate() {
                let (lx, hx) = (T::lit(lx), T::lit(1.0 - lx));
                dst[i * ow + j] = hy * (hx * src[y0 * w + x0] + lx * src[y0 * w + x1])
                    + ly * (hx * src[y1 * w + x0] + lx * src[y1 * w + x1]);
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`resize_bilinear`] for an input of `h x w`.
pub fn resize_bilinear_backward<T: Scalar>(grad_out: &Tensor<T>, h: usize, w: usize) -> Result<Tensor<T>> {
    let (c, oh, ow) = grad_out.dims3()?;
    if (h, w) == (oh, ow) {
        return Ok(grad_out.clone());
    }
    let ty = taps(oh, h);
    let tx = taps(ow, w);
    let mut dx = Tensor::zeros(&[c, h, w]);
    for ch in 0..c {
        let g = grad_out.plane(ch);
        let dst = &mut dx.data_mut()[ch * h * w..(ch + 1) * h * w];
        for (i, &(y0, y1, ly)) in ty.iter().enumerate() {
            let (ly, hy) = (T::lit(ly), T::lit(1.0 - ly));
            for (j, &(x0, x1, lx)) in tx.iter().enumerate() {
                let (lx, hx) = (T::lit(lx), T::lit(1.0 - lx));
                let v = g[i * ow + j];
                dst[y0 * w + x0] += hy * hx * v;
                dst[y0 * w + x1] += hy * lx * v;
                dst[y1 * w + x0] += ly * hx * v;
                dst[y1 * w + x1] += ly * lx * v;
            }
        }
    }
    Ok(dx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
        let mut rng = crate::seed::rng(seed);
        Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
    }

    fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
        a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
    }

    /// Direct nested-loop convolution used as an oracle.
    fn naive_conv(x: &Tensor<f64>, w: &Tensor<f64>, stride: usize, pad: usize) -> Tensor<f64> {
        let (c, h, wd) = x.dims3().unwrap();
        let (oc, _, k, _) = (w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]);
        let oh = conv_out_side(h, k, stride, pad).unwrap();
        let ow = conv_out_side(wd, k, stride, pad).unwrap();
        let mut out = Tensor::zeros(&[oc, oh, ow]);
        for o in 0..oc {
            for i in 0..oh {
                for j in 0..ow {
                    let mut acc = 0.0;
                    for ci in 0..c {
                        for ki in 0..k {
                            for kj in 0..k {
                                let y = (i * stride + ki) as isize - pad as isize;
                                let xx = (j * stride + kj) as isize - pad as isize;
                                if y >= 0 && xx >= 0 && (y as usize) < h && (xx as usize) < wd {
                                    acc += w.data()[((o * c + ci) * k + ki) * k + kj]
                                        * x.at3(ci, y as usize, xx as usize);
                                }
                            }
                        }
                    }
                    out.set3(o, i, j, acc);
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_naive_loops() {
        for &(k, stride, pad) in &[(3, 1, 1), (5, 1, 2), (1, 1, 0), (3, 2, 1)] {
            let x = random(&[3, 7, 6], 1);
            let w = random(&[4, 3, k, k], 2);
            let got = conv2d(&x, &w, None, stride, pad).unwrap();
            let want = naive_conv(&x, &w, stride, pad);
            assert!(got.max_abs_diff(&want) < 1e-12, "k={k} s={stride}");
        }
    }

    #[test]
    fn conv_backward_is_adjoint() {
        // <conv(x), g> = <x, conv^T(g)> and is linear in w as well.
        let x = random(&[3, 6, 8], 3);
        let w = random(&[2, 3, 3, 3], 4);
        let y = conv2d(&x, &w, None, 2, 1).unwrap();
        let g = random(y.shape(), 5);
        let grads = conv2d_backward(&x, &w, 2, 1, &g).unwrap();
        assert!((dot(&y, &g) - dot(&x, &grads.input)).abs() < 1e-10);
        assert!((dot(&y, &g) - dot(&w, &grads.weight)).abs() < 1e-10);
    }

    #[test]
    fn transposed_conv_is_adjoint_of_conv() {
        // A conv weight [out, in, k, k] read as [in', out', k, k] is exactly
        // the transposed-conv weight of the adjoint map.
        let x = random(&[3, 8, 8], 6);
        let w = random(&[2, 3, 3, 3], 7);
        let y = random(&[2, 4, 4], 8);
        let cx = conv2d(&x, &w, None, 2, 1).unwrap();
        let ty = conv_transpose2d(&y, &w, None, 2, 1, 1).unwrap();
        assert_eq!(ty.shape(), &[3, 8, 8]);
        assert!((dot(&cx, &y) - dot(&x, &ty)).abs() < 1e-10);
        assert!(conv_transpose2d(&x, &w, None, 2, 1, 1).is_err());
    }

    #[test]
    fn transposed_conv_backward_is_adjoint() {
        let x = random(&[2, 3, 5], 9);
        let w = random(&[2, 3, 3, 3], 10);
        let y = conv_transpose2d(&x, &w, None, 2, 1, 1).unwrap();
        assert_eq!(y.shape(), &[3, 6, 10]);
        let g = random(y.shape(), 11);
        let grads = conv_transpose2d_backward(&x, &w, 2, 1, 1, &g).unwrap();
        assert!((dot(&y, &g) - dot(&x, &grads.input)).abs() < 1e-10);
        assert!((dot(&y, &g) - dot(&w, &grads.weight)).abs() < 1e-10);
        assert!((g.sum() - grads.bias.sum()).abs() < 1e-10);
    }

    #[test]
    fn resize_identity_and_exact_halving() {
        let x = random(&[2, 6, 4], 12);
        assert_eq!(resize_bilinear(&x, 6, 4).unwrap(), x);
        // 2x nearest upsample then bilinear halving is exact.
        let up = Tensor::from_fn(&[2, 12, 8], |i| {
            let (c, r) = (i / 96, i % 96);
            let (y, xx) = (r / 8, r % 8);
            x.at3(c, y / 2, xx / 2)
        });
        let back = resize_bilinear(&up, 6, 4).unwrap();
        assert!(back.max_abs_diff(&x) < 1e-12);
    }

    #[test]
    fn resize_backward_is_adjoint() {
        for &(h, w, oh, ow) in &[(5, 7, 3, 4), (4, 4, 9, 6), (8, 8, 4, 4)] {
            let x = random(&[2, h, w], 13);
            let y = resize_bilinear(&x, oh, ow).unwrap();
            let g = random(y.shape(), 14);
            let dx = resize_bilinear_backward(&g, h, w).unwrap();
            assert!((dot(&y, &g) - dot(&x, &dx)).abs() < 1e-10);
        }
    }
}
