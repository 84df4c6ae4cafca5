//! Differentiable building blocks. Each forward op has a matching backward
//! that maps the gradient of the output to gradients of its inputs and
//! parameters.
//!
//! The per-sample kernels work on `[C, H, W]` slices; the public functions
//! take `(N, C, H, W)` tensors and loop over the batch.

use serde::{Deserialize, Serialize};

use crate::error::{CanopyError, Result};
use crate::nn::{MatMut, MatRef, Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// `(k − 1) / 2` zeros on each side; preserves H×W at stride 1.
    Same,
    Explicit(usize),
}

/// Shape bookkeeping for one convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    pub fn new(
        cin: usize,
        h: usize,
        w: usize,
        cout: usize,
        k: usize,
        stride: usize,
        padding: Padding,
    ) -> Result<Self> {
        if k == 0 || stride == 0 {
            return Err(CanopyError::Shape("kernel size and stride must be ≥ 1".into()));
        }
        let pad = match padding {
            Padding::Same if k % 2 == 1 => (k - 1) / 2,
            Padding::Same => {
                return Err(CanopyError::Shape(format!("same padding needs an odd kernel, got {k}")))
            }
            Padding::Explicit(p) => p,
        };
        if h + 2 * pad < k || w + 2 * pad < k {
            return Err(CanopyError::Shape(format!(
                "kernel {k} larger than padded input {h}x{w}"
            )));
        }
        Ok(Self {
            cin,
            h,
            w,
            cout,
            k,
            stride,
            pad,
            ho: (h + 2 * pad - k) / stride + 1,
            wo: (w + 2 * pad - k) / stride + 1,
        })
    }

    fn col_rows(&self) -> usize {
        self.cin * self.k * self.k
    }

    fn out_pixels(&self) -> usize {
        self.ho * self.wo
    }
}

/// Unfold `x` (`cin × h × w`) into `col` (`cin·k·k × ho·wo`).
fn im2col<T: Scalar>(x: &[T], g: &ConvGeom, col: &mut [T]) {
    let (k, s, p) = (g.k, g.stride, g.pad as isize);
    let npix = g.out_pixels();
    for ci in 0..g.cin {
        let plane = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ki in 0..k {
            for kj in 0..k {
                let row = (ci * k + ki) * k + kj;
                let dst = &mut col[row * npix..(row + 1) * npix];
                for oh in 0..g.ho {
                    let ih = (oh * s) as isize + ki as isize - p;
                    let out_row = &mut dst[oh * g.wo..(oh + 1) * g.wo];
                    if ih < 0 || ih >= g.h as isize {
                        out_row.fill(T::zero());
                        continue;
                    }
                    let src = &plane[ih as usize * g.w..(ih as usize + 1) * g.w];
                    if s == 1 {
                        // iw = ow + kj − p; valid ow range is contiguous.
                        let shift = kj as isize - p;
                        let lo = (-shift).clamp(0, g.wo as isize) as usize;
                        let hi = (g.w as isize - shift).clamp(0, g.wo as isize) as usize;
                        out_row[..lo].fill(T::zero());
                        if hi > lo {
                            let start = (lo as isize + shift) as usize;
                            out_row[lo..hi].copy_from_slice(&src[start..start + (hi - lo)]);
                        }
                        out_row[hi.max(lo)..].fill(T::zero());
                    } else {
                        for (ow, o) in out_row.iter_mut().enumerate() {
                            let iw = (ow * s) as isize + kj as isize - p;
                            *o = if iw < 0 || iw >= g.w as isize {
                                T::zero()
                            } else {
                                src[iw as usize]
                            };
                        }
                    }
                }
            }
        }
    }
}

/// Fold `col` back, accumulating into `dx`.
fn col2im<T: Scalar>(col: &[T], g: &ConvGeom, dx: &mut [T]) {
    let (k, s, p) = (g.k, g.stride, g.pad as isize);
    let npix = g.out_pixels();
    for ci in 0..g.cin {
        let plane = &mut dx[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ki in 0..k {
            for kj in 0..k {
                let row = (ci * k + ki) * k + kj;
                let src = &col[row * npix..(row + 1) * npix];
                for oh in 0..g.ho {
                    let ih = (oh * s) as isize + ki as isize - p;
                    if ih < 0 || ih >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[ih as usize * g.w..(ih as usize + 1) * g.w];
                    let crow = &src[oh * g.wo..(oh + 1) * g.wo];
                    for (ow, &v) in crow.iter().enumerate() {
                        let iw = (ow * s) as isize + kj as isize - p;
                        if iw >= 0 && iw < g.w as isize {
                            dst[iw as usize] += v;
                        }
                    }
                }
            }
        }
    }
}

impl ConvGeom {
    fn padded_width(&self) -> usize {
        self.w + 2 * self.pad
    }

    fn padded_plane(&self) -> usize {
        (self.h + 2 * self.pad) * self.padded_width()
    }

    /// Length of a padded input buffer. The `k − 1` trailing values let the
    /// last channel's shifted views run past its plane into slack.
    fn padded_len(&self) -> usize {
        self.cin * self.padded_plane() + self.k - 1
    }

    /// Output computed on the padded width: `ho` rows of `wp` values, of
    /// which the last `wp − wo` per row are discarded.
    fn wide_len(&self) -> usize {
        self.ho * self.padded_width()
    }

    /// Unit stride without padding needs no copies at all.
    fn is_dense(&self) -> bool {
        self.pad == 0 && self.k == 1
    }

    fn tap_weight<'a, T>(&self, weight: &'a [T], ki: usize, kj: usize, transposed: bool) -> MatRef<'a, T> {
        let kk = self.k * self.k;
        let (row_stride, col_stride) = if transposed {
            (kk, self.cin * kk)
        } else {
            (self.cin * kk, kk)
        };
        MatRef {
            data: weight,
            offset: ki * self.k + kj,
            row_stride,
            col_stride,
        }
    }
}

fn pad_into<T: Scalar>(x: &[T], g: &ConvGeom, xp: &mut [T]) {
    xp.fill(T::zero());
    let (wp, plane) = (g.padded_width(), g.padded_plane());
    for ci in 0..g.cin {
        for r in 0..g.h {
            let src = &x[(ci * g.h + r) * g.w..(ci * g.h + r + 1) * g.w];
            let at = ci * plane + (r + g.pad) * wp + g.pad;
            xp[at..at + g.w].copy_from_slice(src);
        }
    }
}

/// `out (cout × ho·wo) = W ⋆ x + b` for one sample.
///
/// Unit-stride convolutions run as `k²` GEMMs, one per kernel tap, each
/// reading a shifted view of the zero-padded input. Strided ones unfold the
/// input with im2col.
pub(crate) fn conv_forward_sample<T: Scalar>(
    x: &[T],
    weight: &[T],
    bias: &[T],
    g: &ConvGeom,
    out: &mut [T],
    scratch: &mut Vec<T>,
) {
    let npix = g.out_pixels();
    if g.stride != 1 {
        for (co, b) in bias.iter().enumerate() {
            out[co * npix..(co + 1) * npix].fill(*b);
        }
        scratch.resize(g.col_rows() * npix, T::zero());
        im2col(x, g, scratch);
        T::gemm(g.cout, g.col_rows(), npix, T::one(), weight, false, scratch, false, T::one(), out);
        return;
    }
    if g.is_dense() {
        for (co, b) in bias.iter().enumerate() {
            out[co * npix..(co + 1) * npix].fill(*b);
        }
        T::gemm(g.cout, g.cin, npix, T::one(), weight, false, x, false, T::one(), out);
        return;
    }
    let (wp, plane, n) = (g.padded_width(), g.padded_plane(), g.wide_len());
    scratch.resize(g.padded_len() + g.cout * n, T::zero());
    let (xp, wide) = scratch.split_at_mut(g.padded_len());
    pad_into(x, g, xp);
    for ki in 0..g.k {
        for kj in 0..g.k {
            let first = ki == 0 && kj == 0;
            T::gemm_view(
                g.cout,
                g.cin,
                n,
                T::one(),
                g.tap_weight(weight, ki, kj, false),
                MatRef {
                    data: xp,
                    offset: ki * wp + kj,
                    row_stride: plane,
                    col_stride: 1,
                },
                if first { T::zero() } else { T::one() },
                MatMut::dense(wide, n),
            );
        }
    }
    for (co, &b) in bias.iter().enumerate() {
        for r in 0..g.ho {
            let src = &wide[co * n + r * wp..co * n + r * wp + g.wo];
            let dst = &mut out[co * npix + r * g.wo..co * npix + (r + 1) * g.wo];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = s + b;
            }
        }
    }
}

/// Accumulate parameter gradients and, when `dx` is given, the input gradient.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward_sample<T: Scalar>(
    x: &[T],
    weight: &[T],
    dout: &[T],
    g: &ConvGeom,
    dx: Option<&mut [T]>,
    dw: &mut [T],
    db: &mut [T],
    scratch: &mut Vec<T>,
) {
    let npix = g.out_pixels();
    for (co, d) in db.iter_mut().enumerate() {
        *d += dout[co * npix..(co + 1) * npix].iter().copied().sum::<T>();
    }
    if g.stride != 1 {
        let kdim = g.col_rows();
        scratch.resize(kdim * npix, T::zero());
        im2col(x, g, scratch);
        T::gemm(g.cout, npix, kdim, T::one(), dout, false, scratch, true, T::one(), dw);
        if let Some(dx) = dx {
            T::gemm(kdim, g.cout, npix, T::one(), weight, true, dout, false, T::zero(), scratch);
            col2im(scratch, g, dx);
        }
        return;
    }
    if g.is_dense() {
        T::gemm(g.cout, npix, g.cin, T::one(), dout, false, x, true, T::one(), dw);
        if let Some(dx) = dx {
            T::gemm(g.cin, g.cout, npix, T::one(), weight, true, dout, false, T::one(), dx);
        }
        return;
    }
    let (wp, plane, n) = (g.padded_width(), g.padded_plane(), g.wide_len());
    let plen = g.padded_len();
    let want_dx = dx.is_some();
    scratch.resize(plen + g.cout * n + if want_dx { plen } else { 0 }, T::zero());
    let (xp, rest) = scratch.split_at_mut(plen);
    let (wide, dxp) = rest.split_at_mut(g.cout * n);
    pad_into(x, g, xp);
    // Output gradient on the padded width; discarded columns stay zero.
    wide.fill(T::zero());
    for co in 0..g.cout {
        for r in 0..g.ho {
            wide[co * n + r * wp..co * n + r * wp + g.wo]
                .copy_from_slice(&dout[co * npix + r * g.wo..co * npix + (r + 1) * g.wo]);
        }
    }
    let kk = g.k * g.k;
    for ki in 0..g.k {
        for kj in 0..g.k {
            T::gemm_view(
                g.cout,
                n,
                g.cin,
                T::one(),
                MatRef::dense(wide, g.cout, n, false),
                MatRef {
                    data: xp,
                    offset: ki * wp + kj,
                    row_stride: 1,
                    col_stride: plane,
                },
                T::one(),
                MatMut {
                    data: dw,
                    offset: ki * g.k + kj,
                    row_stride: g.cin * kk,
                    col_stride: kk,
                },
            );
        }
    }
    let Some(dx) = dx else { return };
    dxp.fill(T::zero());
    for ki in 0..g.k {
        for kj in 0..g.k {
            T::gemm_view(
                g.cin,
                g.cout,
                n,
                T::one(),
                g.tap_weight(weight, ki, kj, true),
                MatRef::dense(wide, g.cout, n, false),
                T::one(),
                MatMut {
                    data: dxp,
                    offset: ki * wp + kj,
                    row_stride: plane,
                    col_stride: 1,
                },
            );
        }
    }
    for ci in 0..g.cin {
        for r in 0..g.h {
            let at = ci * plane + (r + g.pad) * wp + g.pad;
            let dst = &mut dx[(ci * g.h + r) * g.w..(ci * g.h + r + 1) * g.w];
            for (d, &s) in dst.iter_mut().zip(&dxp[at..at + g.w]) {
                *d += s;
            }
        }
    }
}

/// Batched 2-D cross-correlation.
///
/// `input (N, Cin, H, W)`, `weight (Cout, Cin, k, k)`, `bias (Cout)`.
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    padding: Padding,
) -> Result<Tensor<T>> {
    let (n, g) = conv_geom(input, weight, bias, stride, padding)?;
    let in_len = g.cin * g.h * g.w;
    let out_len = g.cout * g.out_pixels();
    let mut out = Tensor::zeros(&[n, g.cout, g.ho, g.wo]);
    let mut scratch = Vec::new();
    for b in 0..n {
        conv_forward_sample(
            &input.data()[b * in_len..(b + 1) * in_len],
            weight.data(),
            bias.data(),
            &g,
            &mut out.data_mut()[b * out_len..(b + 1) * out_len],
            &mut scratch,
        );
    }
    Ok(out)
}

pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: usize,
    padding: Padding,
) -> Result<ConvGrads<T>> {
    let bias = Tensor::zeros(&[weight.shape()[0]]);
    let (n, g) = conv_geom(input, weight, &bias, stride, padding)?;
    if grad_out.shape() != [n, g.cout, g.ho, g.wo] {
        return Err(CanopyError::Shape(format!(
            "gradient shape {:?} does not match output ({n}, {}, {}, {})",
            grad_out.shape(),
            g.cout,
            g.ho,
            g.wo
        )));
    }
    let in_len = g.cin * g.h * g.w;
    let out_len = g.cout * g.out_pixels();
    let mut grads = ConvGrads {
        input: Tensor::zeros(input.shape()),
        weight: Tensor::zeros(weight.shape()),
        bias: Tensor::zeros(&[g.cout]),
    };
    let mut scratch = Vec::new();
    for b in 0..n {
        conv_backward_sample(
            &input.data()[b * in_len..(b + 1) * in_len],
            weight.data(),
            &grad_out.data()[b * out_len..(b + 1) * out_len],
            &g,
            Some(&mut grads.input.data_mut()[b * in_len..(b + 1) * in_len]),
            grads.weight.data_mut(),
            grads.bias.data_mut(),
            &mut scratch,
        );
    }
    Ok(grads)
}

fn conv_geom<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    padding: Padding,
) -> Result<(usize, ConvGeom)> {
    let (n, cin, h, w) = input.dims4()?;
    let (cout, wcin, kh, kw) = weight.dims4()?;
    if wcin != cin {
        return Err(CanopyError::Shape(format!(
            "input has {cin} channels, kernel expects {wcin}"
        )));
    }
    if kh != kw {
        return Err(CanopyError::Shape(format!("non-square kernel {kh}x{kw}")));
    }
    if bias.shape() != [cout] {
        return Err(CanopyError::Shape(format!(
            "bias shape {:?} for {cout} output channels",
            bias.shape()
        )));
    }
    Ok((n, ConvGeom::new(cin, h, w, cout, kh, stride, padding)?))
}

/// 2×2 max pooling of one `c × h × w` sample. Returns the pooled values and,
/// per output cell, the flat input index of the maximum (first in scan order
/// on ties).
pub(crate) fn maxpool2_sample<T: Scalar>(x: &[T], c: usize, h: usize, w: usize) -> (Vec<T>, Vec<u32>) {
    let (ho, wo) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(c * ho * wo);
    let mut arg = Vec::with_capacity(c * ho * wo);
    for ch in 0..c {
        let base = ch * h * w;
        for i in 0..ho {
            for j in 0..wo {
                let cands = [
                    base + 2 * i * w + 2 * j,
                    base + 2 * i * w + 2 * j + 1,
                    base + (2 * i + 1) * w + 2 * j,
                    base + (2 * i + 1) * w + 2 * j + 1,
                ];
                let mut best = cands[0];
                for &idx in &cands[1..] {
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                out.push(x[best]);
                arg.push(best as u32);
            }
        }
    }
    (out, arg)
}

pub(crate) fn maxpool2_backward_sample<T: Scalar>(dout: &[T], arg: &[u32], dx: &mut [T]) {
    for (&d, &i) in dout.iter().zip(arg) {
        dx[i as usize] += d;
    }
}

/// Argmax routing of [`maxpool2`], kept for the backward pass.
pub struct PoolIndices {
    input_shape: Vec<usize>,
    per_sample: Vec<Vec<u32>>,
}

pub fn maxpool2<T: Scalar>(input: &Tensor<T>) -> Result<(Tensor<T>, PoolIndices)> {
    let (n, c, h, w) = input.dims4()?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(CanopyError::Shape(format!(
            "2x2 pooling needs even dimensions, got {h}x{w}"
        )));
    }
    let len = c * h * w;
    let mut data = Vec::with_capacity(n * len / 4);
    let mut per_sample = Vec::with_capacity(n);
    for b in 0..n {
        let (o, a) = maxpool2_sample(&input.data()[b * len..(b + 1) * len], c, h, w);
        data.extend(o);
        per_sample.push(a);
    }
    Ok((
        Tensor::from_vec(&[n, c, h / 2, w / 2], data)?,
        PoolIndices {
            input_shape: input.shape().to_vec(),
            per_sample,
        },
    ))
}

pub fn maxpool2_backward<T: Scalar>(grad_out: &Tensor<T>, idx: &PoolIndices) -> Result<Tensor<T>> {
    let mut dx = Tensor::zeros(&idx.input_shape);
    let n = idx.per_sample.len();
    if grad_out.len() != idx.per_sample.iter().map(Vec::len).sum::<usize>() {
        return Err(CanopyError::Shape("pool gradient does not match indices".into()));
    }
    let in_len = dx.len() / n.max(1);
    let out_len = grad_out.len() / n.max(1);
    for b in 0..n {
        maxpool2_backward_sample(
            &grad_out.data()[b * out_len..(b + 1) * out_len],
            &idx.per_sample[b],
            &mut dx.data_mut()[b * in_len..(b + 1) * in_len],
        );
    }
    Ok(dx)
}

/// Nearest 2× upsample of `x` (`c1 × h × w`) followed by channel
/// concatenation with `skip` (`c2 × 2h × 2w`).
pub(crate) fn upsample_concat_sample<T: Scalar>(
    x: &[T],
    c1: usize,
    h: usize,
    w: usize,
    skip: &[T],
) -> Vec<T> {
    let (h2, w2) = (2 * h, 2 * w);
    let mut out = Vec::with_capacity(c1 * h2 * w2 + skip.len());
    for ch in 0..c1 {
        let plane = &x[ch * h * w..(ch + 1) * h * w];
        for i in 0..h2 {
            let row = &plane[(i / 2) * w..(i / 2 + 1) * w];
            for &v in row {
                out.push(v);
                out.push(v);
            }
        }
    }
    out.extend_from_slice(skip);
    out
}

/// Split the concatenated gradient: returns the upsampled part summed back
/// to `c1 × h × w`; the skip part is added to `dskip`.
pub(crate) fn upsample_concat_backward_sample<T: Scalar>(
    dout: &[T],
    c1: usize,
    h: usize,
    w: usize,
    dskip: &mut [T],
) -> Vec<T> {
    let (h2, w2) = (2 * h, 2 * w);
    let mut dx = vec![T::zero(); c1 * h * w];
    for ch in 0..c1 {
        let src = &dout[ch * h2 * w2..(ch + 1) * h2 * w2];
        let dst = &mut dx[ch * h * w..(ch + 1) * h * w];
        for i in 0..h2 {
            let srow = &src[i * w2..(i + 1) * w2];
            let drow = &mut dst[(i / 2) * w..(i / 2 + 1) * w];
            for (j, d) in drow.iter_mut().enumerate() {
                *d += srow[2 * j] + srow[2 * j + 1];
            }
        }
    }
    for (d, &g) in dskip.iter_mut().zip(&dout[c1 * h2 * w2..]) {
        *d += g;
    }
    dx
}

pub fn upsample_concat<T: Scalar>(input: &Tensor<T>, skip: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c1, h, w) = input.dims4()?;
    let (n2, c2, hs, ws) = skip.dims4()?;
    if n != n2 || hs != 2 * h || ws != 2 * w {
        return Err(CanopyError::Shape(format!(
            "skip {:?} is not twice the spatial size of {:?}",
            skip.shape(),
            input.shape()
        )));
    }
    let (li, ls) = (c1 * h * w, c2 * hs * ws);
    let mut data = Vec::with_capacity(n * (4 * li + ls));
    for b in 0..n {
        data.extend(upsample_concat_sample(
            &input.data()[b * li..(b + 1) * li],
            c1,
            h,
            w,
            &skip.data()[b * ls..(b + 1) * ls],
        ));
    }
    Tensor::from_vec(&[n, c1 + c2, hs, ws], data)
}

/// Gradients for (input, skip) of [`upsample_concat`].
pub fn upsample_concat_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    input_channels: usize,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (n, c, hs, ws) = grad_out.dims4()?;
    if input_channels > c || hs % 2 != 0 || ws % 2 != 0 {
        return Err(CanopyError::Shape("bad upsample gradient shape".into()));
    }
    let (h, w) = (hs / 2, ws / 2);
    let c2 = c - input_channels;
    let mut dx = Vec::with_capacity(n * input_channels * h * w);
    let mut dskip = Tensor::zeros(&[n, c2, hs, ws]);
    let lo = c * hs * ws;
    let ls = c2 * hs * ws;
    for b in 0..n {
        dx.extend(upsample_concat_backward_sample(
            &grad_out.data()[b * lo..(b + 1) * lo],
            input_channels,
            h,
            w,
            &mut dskip.data_mut()[b * ls..(b + 1) * ls],
        ));
    }
    Ok((Tensor::from_vec(&[n, input_channels, h, w], dx)?, dskip))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    /// Output clamped to `[ε, 1 − ε]` so it stays strictly inside (0, 1).
    Sigmoid,
    Linear,
}

impl Activation {
    pub fn apply_in_place<T: Scalar>(self, v: &mut [T]) {
        match self {
            Activation::Relu => v.iter_mut().for_each(|x| *x = x.max(T::zero())),
            Activation::Sigmoid => {
                let (lo, hi) = (T::epsilon(), T::one() - T::epsilon());
                v.iter_mut().for_each(|x| *x = sigmoid(*x).max(lo).min(hi));
            }
            Activation::Linear => {}
        }
    }

    /// Multiply `grad` in place by the derivative, expressed via the output.
    pub fn backward_in_place<T: Scalar>(self, out: &[T], grad: &mut [T]) {
        match self {
            Activation::Relu => grad.iter_mut().zip(out).for_each(|(g, &o)| {
                if o <= T::zero() {
                    *g = T::zero();
                }
            }),
            Activation::Sigmoid => grad
                .iter_mut()
                .zip(out)
                .for_each(|(g, &o)| *g *= o * (T::one() - o)),
            Activation::Linear => {}
        }
    }

    pub fn forward<T: Scalar>(self, x: &Tensor<T>) -> Tensor<T> {
        let mut y = x.clone();
        self.apply_in_place(y.data_mut());
        y
    }

    pub fn backward<T: Scalar>(self, output: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
        let mut g = grad_out.clone();
        self.backward_in_place(output.data(), g.data_mut());
        g
    }
}

fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn rand_tensor(shape: &[usize], rng: &mut impl Rng) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Direct-summation convolution, independent of im2col.
    fn conv_oracle(x: &Tensor<f64>, wt: &Tensor<f64>, b: &Tensor<f64>, s: usize, p: usize) -> Tensor<f64> {
        let (n, cin, h, w) = x.dims4().unwrap();
        let (cout, _, k, _) = wt.dims4().unwrap();
        let ho = (h + 2 * p - k) / s + 1;
        let wo = (w + 2 * p - k) / s + 1;
        let mut out = Tensor::zeros(&[n, cout, ho, wo]);
        for bi in 0..n {
            for co in 0..cout {
                for i in 0..ho {
                    for j in 0..wo {
                        let mut acc = b.data()[co];
                        for ci in 0..cin {
                            for ki in 0..k {
                                for kj in 0..k {
                                    let ih = (i * s + ki) as isize - p as isize;
                                    let iw = (j * s + kj) as isize - p as isize;
                                    if ih >= 0 && iw >= 0 && (ih as usize) < h && (iw as usize) < w {
                                        acc += x.data()[((bi * cin + ci) * h + ih as usize) * w + iw as usize]
                                            * wt.data()[((co * cin + ci) * k + ki) * k + kj];
                                    }
                                }
                            }
                        }
                        out.data_mut()[((bi * cout + co) * ho + i) * wo + j] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn identity_kernel() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let x = rand_tensor(&[2, 3, 5, 4], &mut rng);
        let mut wt = Tensor::zeros(&[3, 3, 1, 1]);
        for c in 0..3 {
            wt.data_mut()[c * 3 + c] = 1.0;
        }
        let y = conv2d(&x, &wt, &Tensor::zeros(&[3]), 1, Padding::Same).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn ones_kernel_on_constant() {
        let c = 2.5;
        let x = Tensor::from_vec(&[1, 1, 5, 5], vec![c; 25]).unwrap();
        let wt = Tensor::from_vec(&[1, 1, 3, 3], vec![1.0; 9]).unwrap();
        let y = conv2d(&x, &wt, &Tensor::zeros(&[1]), 1, Padding::Same).unwrap();
        assert_eq!(y.data()[2 * 5 + 2], 9.0 * c);
        assert_eq!(y.data()[0], 4.0 * c);
        assert_eq!(y.shape(), &[1, 1, 5, 5]);
    }

    #[test]
    fn conv_matches_direct_summation() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for (k, s, p) in [(3, 1, 1), (3, 2, 1), (1, 1, 0), (5, 1, 2), (3, 1, 0), (1, 2, 0)] {
            let x = rand_tensor(&[2, 3, 7, 6], &mut rng);
            let wt = rand_tensor(&[4, 3, k, k], &mut rng);
            let b = rand_tensor(&[4], &mut rng);
            let got = conv2d(&x, &wt, &b, s, Padding::Explicit(p)).unwrap();
            let want = conv_oracle(&x, &wt, &b, s, p);
            assert_eq!(got.shape(), want.shape());
            for (a, b) in got.data().iter().zip(want.data()) {
                assert!((a - b).abs() < 1e-12, "k={k} s={s} p={p}");
            }
        }
    }

    #[test]
    fn conv_shape_errors() {
        let x = Tensor::<f64>::zeros(&[1, 2, 4, 4]);
        let wt = Tensor::<f64>::zeros(&[3, 1, 3, 3]);
        assert!(conv2d(&x, &wt, &Tensor::zeros(&[3]), 1, Padding::Same).is_err());
        let wt = Tensor::<f64>::zeros(&[3, 2, 3, 3]);
        assert!(conv2d(&x, &wt, &Tensor::zeros(&[2]), 1, Padding::Same).is_err());
        let wt = Tensor::<f64>::zeros(&[3, 2, 2, 2]);
        assert!(conv2d(&x, &wt, &Tensor::zeros(&[3]), 1, Padding::Same).is_err());
    }

    #[test]
    fn maxpool_examples() {
        let x = Tensor::from_vec(&[1, 1, 4, 4], vec![3.0; 16]).unwrap();
        let (y, _) = maxpool2(&x).unwrap();
        assert_eq!(y.data(), &[3.0; 4]);

        let inc = Tensor::from_vec(&[1, 1, 4, 4], (0..16).map(|v| v as f64).collect()).unwrap();
        let (y, idx) = maxpool2(&inc).unwrap();
        // Bottom-right of each 2x2 window.
        assert_eq!(y.data(), &[5.0, 7.0, 13.0, 15.0]);
        let dx = maxpool2_backward(&Tensor::from_vec(&[1, 1, 2, 2], vec![1.0; 4]).unwrap(), &idx).unwrap();
        let expect: Vec<f64> = (0..16).map(|i| if [5, 7, 13, 15].contains(&i) { 1.0 } else { 0.0 }).collect();
        assert_eq!(dx.data(), &expect[..]);

        assert!(maxpool2(&Tensor::<f64>::zeros(&[1, 1, 3, 4])).is_err());
    }

    #[test]
    fn upsample_concat_examples() {
        let x = Tensor::from_vec(&[1, 1, 1, 1], vec![4.0]).unwrap();
        let skip = Tensor::from_vec(&[1, 2, 2, 2], (0..8).map(|v| v as f64).collect()).unwrap();
        let y = upsample_concat(&x, &skip).unwrap();
        assert_eq!(y.shape(), &[1, 3, 2, 2]);
        assert_eq!(&y.data()[..4], &[4.0; 4]);
        assert_eq!(&y.data()[4..], skip.data());
        assert!(upsample_concat(&x, &Tensor::zeros(&[1, 1, 3, 2])).is_err());
    }

    #[test]
    fn activation_values() {
        let x = Tensor::from_vec(&[4], vec![0.0, -2.0, 3.0, -1e4]).unwrap();
        let s = Activation::Sigmoid.forward(&x);
        assert_eq!(s.data()[0], 0.5);
        assert!(s.data().iter().all(|&v| v > 0.0 && v < 1.0));
        let r = Activation::Relu.forward(&x);
        assert_eq!(r.data(), &[0.0, 0.0, 3.0, 0.0]);
        assert_eq!(Activation::Linear.forward(&x), x);
    }
}
