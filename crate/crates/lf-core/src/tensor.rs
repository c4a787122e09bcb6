//! Mode tensors and the primitive operations the network is built from.
//!
//! A [`ModeTensor`] is a 5D array over `(u, v, w, h, c)`: angular extents
//! `u, v`, spatial extents `w, h`, channels `c`, stored row-major in exactly
//! that order. Because the storage order is fixed, switching between the
//! native 4D view, the spatial mode `(u*V + v, w, h, c)` and the angular mode
//! `(u, v, w*H + h, c)` never moves data; a reshape only changes the tag that
//! tells [`conv2d`] which pair of dimensions to convolve and which to batch.

use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

/// Scalar type for all engine math. Implemented for `f32` and `f64`.
pub trait Real: Float + core::fmt::Debug + core::fmt::Display + Send + Sync + 'static {
    fn from_f64(v: f64) -> Self;
    fn into_f64(self) -> f64;
    fn from_f32(v: f32) -> Self;
    fn into_f32(self) -> f32;
}

impl Real for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn into_f64(self) -> f64 {
        self as f64
    }
    fn from_f32(v: f32) -> Self {
        v
    }
    fn into_f32(self) -> f32 {
        self
    }
}

impl Real for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn into_f64(self) -> f64 {
        self
    }
    fn from_f32(v: f32) -> Self {
        v as f64
    }
    fn into_f32(self) -> f32 {
        self as f32
    }
}

/// Interpretation of the fixed `(u, v, w, h, c)` storage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// 4D view grid, no convolution domain selected.
    Native4d,
    /// `(u*V + v, w, h, c)`: angular positions batched, convolve over `(w, h)`.
    Spatial,
    /// `(u, v, w*H + h, c)`: spatial positions batched, convolve over `(u, v)`.
    Angular,
}

/// Boundary handling for [`conv2d`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Zero padding, output extents equal input extents.
    SameZero,
    /// No padding, output extents shrink by `kernel - 1`.
    Valid,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TensorError {
    #[error("channel mismatch: input has {input} channels, kernel expects {kernel}")]
    ChannelMismatch { input: usize, kernel: usize },
    #[error("operation requires {required:?} mode, tensor is in {actual:?} mode")]
    ModeMismatch { required: Mode, actual: Mode },
    #[error("valid padding needs extent >= kernel size, got extent {extent} and kernel {kernel}")]
    KernelTooLarge { extent: usize, kernel: usize },
    #[error("concatenated tensors must share extents and mode")]
    ExtentMismatch,
    #[error("cannot concatenate an empty list")]
    EmptyConcat,
    #[error("kernel must be spatial or angular, not both (got {ka_u}x{ka_v} angular and {ks_w}x{ks_h} spatial)")]
    KernelNotSeparable {
        ka_u: usize,
        ka_v: usize,
        ks_w: usize,
        ks_h: usize,
    },
    #[error("data length {len} does not match extents product {expected}")]
    LengthMismatch { len: usize, expected: usize },
    #[error("zero extent is not allowed")]
    ZeroExtent,
    #[error("channel range {start}..{end} out of bounds for {channels} channels")]
    ChannelRange {
        start: usize,
        end: usize,
        channels: usize,
    },
}

/// 5D tensor over `(u, v, w, h, c)` with a mode tag.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeTensor<T> {
    pub u: usize,
    pub v: usize,
    pub w: usize,
    pub h: usize,
    pub c: usize,
    pub mode: Mode,
    data: Vec<T>,
}

impl<T: Real> ModeTensor<T> {
    pub fn new(
        u: usize,
        v: usize,
        w: usize,
        h: usize,
        c: usize,
        data: Vec<T>,
    ) -> Result<Self, TensorError> {
        if u == 0 || v == 0 || w == 0 || h == 0 || c == 0 {
            return Err(TensorError::ZeroExtent);
        }
        let expected = u * v * w * h * c;
        if data.len() != expected {
            return Err(TensorError::LengthMismatch {
                len: data.len(),
                expected,
            });
        }
        Ok(Self {
            u,
            v,
            w,
            h,
            c,
            mode: Mode::Native4d,
            data,
        })
    }

    pub fn zeros(u: usize, v: usize, w: usize, h: usize, c: usize) -> Self {
        Self {
            u,
            v,
            w,
            h,
            c,
            mode: Mode::Native4d,
            data: vec![T::zero(); u * v * w * h * c],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Flat index of `(u, v, w, h, c)` in the fixed storage order.
    #[inline]
    pub fn idx(&self, u: usize, v: usize, w: usize, h: usize, c: usize) -> usize {
        ((((u * self.v + v) * self.w + w) * self.h + h) * self.c) + c
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize, w: usize, h: usize, c: usize) -> T {
        self.data[self.idx(u, v, w, h, c)]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, w: usize, h: usize, c: usize, value: T) {
        let i = self.idx(u, v, w, h, c);
        self.data[i] = value;
    }

    /// Spatial-mode coordinates of a native `(u, v, w, h, c)` element:
    /// `(u*V + v, w, h, c)`. Pure relabeling, the flat offset is unchanged.
    pub fn spatial_coords(&self, u: usize, v: usize, w: usize, h: usize, c: usize) -> [usize; 4] {
        [u * self.v + v, w, h, c]
    }

    /// Angular-mode coordinates of a native `(u, v, w, h, c)` element:
    /// `(u, v, w*H + h, c)`.
    pub fn angular_coords(&self, u: usize, v: usize, w: usize, h: usize, c: usize) -> [usize; 4] {
        [u, v, w * self.h + h, c]
    }

    /// Retag the tensor with a new mode. Values never change and the
    /// round trip through any sequence of modes is the identity.
    pub fn reshape_mode(mut self, target: Mode) -> Self {
        self.mode = target;
        self
    }

    /// Non-consuming [`reshape_mode`](Self::reshape_mode).
    pub fn reshaped(&self, target: Mode) -> Self {
        let mut out = self.clone();
        out.mode = target;
        out
    }
}

/// Elementwise activation kinds used by the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

/// Elementwise activation. `relu` is `max(0, x)`; its adjoint masks by the
/// sign of the input, with the subgradient at 0 fixed to 0.
pub fn activation<T: Real>(t: &ModeTensor<T>, kind: Activation) -> ModeTensor<T> {
    match kind {
        Activation::Identity => t.clone(),
        Activation::Relu => {
            let mut out = t.clone();
            for x in out.data.iter_mut() {
                if *x <= T::zero() {
                    *x = T::zero();
                }
            }
            out
        }
    }
}

pub(crate) fn relu_backward<T: Real>(input: &[T], upstream: &[T], into: &mut [T]) {
    for ((x, g), d) in input.iter().zip(upstream).zip(into.iter_mut()) {
        if *x > T::zero() {
            *d = *d + *g;
        }
    }
}

/// Stack tensors along the channel axis in the given order.
pub fn concat_channels<T: Real>(parts: &[&ModeTensor<T>]) -> Result<ModeTensor<T>, TensorError> {
    let first = *parts.first().ok_or(TensorError::EmptyConcat)?;
    for p in parts {
        if p.u != first.u
            || p.v != first.v
            || p.w != first.w
            || p.h != first.h
            || p.mode != first.mode
        {
            return Err(TensorError::ExtentMismatch);
        }
    }
    let c_out: usize = parts.iter().map(|p| p.c).sum();
    let positions = first.u * first.v * first.w * first.h;
    let mut data = Vec::with_capacity(positions * c_out);
    for pos in 0..positions {
        for p in parts {
            let base = pos * p.c;
            data.extend_from_slice(&p.data[base..base + p.c]);
        }
    }
    Ok(ModeTensor {
        u: first.u,
        v: first.v,
        w: first.w,
        h: first.h,
        c: c_out,
        mode: first.mode,
        data,
    })
}

/// Copy out the channel range `start..end`. Inverse of [`concat_channels`]
/// when applied with the original channel offsets.
pub fn slice_channels<T: Real>(
    t: &ModeTensor<T>,
    start: usize,
    end: usize,
) -> Result<ModeTensor<T>, TensorError> {
    if start >= end || end > t.c {
        return Err(TensorError::ChannelRange {
            start,
            end,
            channels: t.c,
        });
    }
    let c_out = end - start;
    let positions = t.u * t.v * t.w * t.h;
    let mut data = Vec::with_capacity(positions * c_out);
    for pos in 0..positions {
        let base = pos * t.c + start;
        data.extend_from_slice(&t.data[base..base + c_out]);
    }
    Ok(ModeTensor {
        u: t.u,
        v: t.v,
        w: t.w,
        h: t.h,
        c: c_out,
        mode: t.mode,
        data,
    })
}

/// Convolution kernel over one domain. A spatial kernel has
/// `ka_u = ka_v = 1`, an angular kernel has `ks_w = ks_h = 1`; a kernel
/// that is 1x1 in both pairs acts pointwise. Weights are stored row-major
/// as `(ka_u, ka_v, ks_w, ks_h, c_in, c_out)`, one bias per output channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvKernel<T> {
    pub ka_u: usize,
    pub ka_v: usize,
    pub ks_w: usize,
    pub ks_h: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> ConvKernel<T> {
    pub fn new(
        ka_u: usize,
        ka_v: usize,
        ks_w: usize,
        ks_h: usize,
        c_in: usize,
        c_out: usize,
        weights: Vec<T>,
        bias: Vec<T>,
    ) -> Result<Self, TensorError> {
        if ka_u == 0 || ka_v == 0 || ks_w == 0 || ks_h == 0 || c_in == 0 || c_out == 0 {
            return Err(TensorError::ZeroExtent);
        }
        if (ka_u > 1 || ka_v > 1) && (ks_w > 1 || ks_h > 1) {
            return Err(TensorError::KernelNotSeparable {
                ka_u,
                ka_v,
                ks_w,
                ks_h,
            });
        }
        let expected = ka_u * ka_v * ks_w * ks_h * c_in * c_out;
        if weights.len() != expected {
            return Err(TensorError::LengthMismatch {
                len: weights.len(),
                expected,
            });
        }
        if bias.len() != c_out {
            return Err(TensorError::LengthMismatch {
                len: bias.len(),
                expected: c_out,
            });
        }
        Ok(Self {
            ka_u,
            ka_v,
            ks_w,
            ks_h,
            c_in,
            c_out,
            weights,
            bias,
        })
    }

    pub fn zeros(
        ka_u: usize,
        ka_v: usize,
        ks_w: usize,
        ks_h: usize,
        c_in: usize,
        c_out: usize,
    ) -> Result<Self, TensorError> {
        let weights = vec![T::zero(); ka_u * ka_v * ks_w * ks_h * c_in * c_out];
        let bias = vec![T::zero(); c_out];
        Self::new(ka_u, ka_v, ks_w, ks_h, c_in, c_out, weights, bias)
    }

    /// True when the kernel convolves the angular pair.
    pub fn is_angular(&self) -> bool {
        self.ka_u > 1 || self.ka_v > 1
    }

    /// Trainable scalars: weights plus one bias per output channel.
    pub fn param_count(&self) -> u64 {
        (self.ka_u * self.ka_v * self.ks_w * self.ks_h * self.c_in * self.c_out + self.c_out)
            as u64
    }

    /// Flat weight index for `(ka_u, ka_v, ks_w, ks_h, c_in, c_out)`.
    #[inline]
    pub fn widx(&self, au: usize, av: usize, sw: usize, sh: usize, ci: usize, co: usize) -> usize {
        (((((au * self.ka_v + av) * self.ks_w + sw) * self.ks_h + sh) * self.c_in) + ci)
            * self.c_out
            + co
    }
}

fn out_extent(extent: usize, kernel: usize, padding: Padding) -> Result<usize, TensorError> {
    match padding {
        Padding::SameZero => Ok(extent),
        Padding::Valid => {
            if kernel > extent {
                Err(TensorError::KernelTooLarge { extent, kernel })
            } else {
                Ok(extent - kernel + 1)
            }
        }
    }
}

fn pad_lo(kernel: usize, padding: Padding) -> usize {
    match padding {
        Padding::SameZero => (kernel - 1) / 2,
        Padding::Valid => 0,
    }
}

/// Cross-correlation over the kernel's active pair of dimensions, batched
/// independently over the flattened remaining pair. The tensor must be in
/// the mode matching the kernel: spatial (or pointwise) kernels need
/// [`Mode::Spatial`], angular kernels need [`Mode::Angular`]. Bias is added
/// per output channel.
pub fn conv2d<T: Real>(
    t: &ModeTensor<T>,
    k: &ConvKernel<T>,
    padding: Padding,
) -> Result<ModeTensor<T>, TensorError> {
    if t.c != k.c_in {
        return Err(TensorError::ChannelMismatch {
            input: t.c,
            kernel: k.c_in,
        });
    }
    let required = if k.is_angular() {
        Mode::Angular
    } else {
        Mode::Spatial
    };
    if t.mode != required {
        return Err(TensorError::ModeMismatch {
            required,
            actual: t.mode,
        });
    }
    if k.is_angular() {
        conv_angular(t, k, padding)
    } else {
        conv_spatial(t, k, padding)
    }
}

fn conv_spatial<T: Real>(
    t: &ModeTensor<T>,
    k: &ConvKernel<T>,
    padding: Padding,
) -> Result<ModeTensor<T>, TensorError> {
    let (kw, kh) = (k.ks_w, k.ks_h);
    let wo = out_extent(t.w, kw, padding)?;
    let ho = out_extent(t.h, kh, padding)?;
    let (px, py) = (pad_lo(kw, padding), pad_lo(kh, padding));
    let (ci_n, co_n) = (k.c_in, k.c_out);
    let batch = t.u * t.v;

    let mut out = ModeTensor::<T> {
        u: t.u,
        v: t.v,
        w: wo,
        h: ho,
        c: co_n,
        mode: t.mode,
        data: Vec::with_capacity(batch * wo * ho * co_n),
    };
    for _ in 0..batch * wo * ho {
        out.data.extend_from_slice(&k.bias);
    }

    for b in 0..batch {
        let in_base = b * t.w * t.h * ci_n;
        let out_base = b * wo * ho * co_n;
        for kx in 0..kw {
            let x_off = kx as isize - px as isize;
            let ox_lo = (-x_off).max(0) as usize;
            let ox_hi = ((t.w as isize - x_off).min(wo as isize)).max(0) as usize;
            for ky in 0..kh {
                let y_off = ky as isize - py as isize;
                let oy_lo = (-y_off).max(0) as usize;
                let oy_hi = ((t.h as isize - y_off).min(ho as isize)).max(0) as usize;
                let w_base = (kx * kh + ky) * ci_n * co_n;
                for ox in ox_lo..ox_hi {
                    let x = (ox as isize + x_off) as usize;
                    for oy in oy_lo..oy_hi {
                        let y = (oy as isize + y_off) as usize;
                        let ib = in_base + (x * t.h + y) * ci_n;
                        let ob = out_base + (ox * ho + oy) * co_n;
                        for ci in 0..ci_n {
                            let xv = t.data[ib + ci];
                            let wrow = w_base + ci * co_n;
                            let (wts, dst) = (
                                &k.weights[wrow..wrow + co_n],
                                &mut out.data[ob..ob + co_n],
                            );
                            for (d, wt) in dst.iter_mut().zip(wts) {
                                *d = *d + xv * *wt;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

fn conv_angular<T: Real>(
    t: &ModeTensor<T>,
    k: &ConvKernel<T>,
    padding: Padding,
) -> Result<ModeTensor<T>, TensorError> {
    let (ku, kv) = (k.ka_u, k.ka_v);
    let uo = out_extent(t.u, ku, padding)?;
    let vo = out_extent(t.v, kv, padding)?;
    let (pu, pv) = (pad_lo(ku, padding), pad_lo(kv, padding));
    let (ci_n, co_n) = (k.c_in, k.c_out);
    let positions = t.w * t.h;

    let mut out = ModeTensor::<T> {
        u: uo,
        v: vo,
        w: t.w,
        h: t.h,
        c: co_n,
        mode: t.mode,
        data: Vec::with_capacity(uo * vo * positions * co_n),
    };
    for _ in 0..uo * vo * positions {
        out.data.extend_from_slice(&k.bias);
    }

    for ou in 0..uo {
        for ov in 0..vo {
            let out_base = (ou * vo + ov) * positions * co_n;
            for au in 0..ku {
                let u = ou as isize + au as isize - pu as isize;
                if u < 0 || u >= t.u as isize {
                    continue;
                }
                for av in 0..kv {
                    let v = ov as isize + av as isize - pv as isize;
                    if v < 0 || v >= t.v as isize {
                        continue;
                    }
                    let in_base = (u as usize * t.v + v as usize) * positions * ci_n;
                    let w_base = (au * kv + av) * ci_n * co_n;
                    for p in 0..positions {
                        let ib = in_base + p * ci_n;
                        let ob = out_base + p * co_n;
                        for ci in 0..ci_n {
                            let xv = t.data[ib + ci];
                            let wrow = w_base + ci * co_n;
                            let (wts, dst) = (
                                &k.weights[wrow..wrow + co_n],
                                &mut out.data[ob..ob + co_n],
                            );
                            for (d, wt) in dst.iter_mut().zip(wts) {
                                *d = *d + xv * *wt;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of a conv2d call with respect to input, weights and bias.
/// `upstream` matches the forward output shape.
pub(crate) fn conv2d_backward<T: Real>(
    input: &ModeTensor<T>,
    k: &ConvKernel<T>,
    padding: Padding,
    upstream: &ModeTensor<T>,
) -> (ModeTensor<T>, Vec<T>, Vec<T>) {
    let mut d_input = ModeTensor {
        u: input.u,
        v: input.v,
        w: input.w,
        h: input.h,
        c: input.c,
        mode: input.mode,
        data: vec![T::zero(); input.len()],
    };
    let mut d_weights = vec![T::zero(); k.weights.len()];
    let mut d_bias = vec![T::zero(); k.bias.len()];

    let co_n = k.c_out;
    for chunk in upstream.data().chunks_exact(co_n) {
        for (db, g) in d_bias.iter_mut().zip(chunk) {
            *db = *db + *g;
        }
    }

    if k.is_angular() {
        conv_angular_backward(input, k, padding, upstream, &mut d_input, &mut d_weights);
    } else {
        conv_spatial_backward(input, k, padding, upstream, &mut d_input, &mut d_weights);
    }
    (d_input, d_weights, d_bias)
}

fn conv_spatial_backward<T: Real>(
    input: &ModeTensor<T>,
    k: &ConvKernel<T>,
    padding: Padding,
    upstream: &ModeTensor<T>,
    d_input: &mut ModeTensor<T>,
    d_weights: &mut [T],
) {
    let (kw, kh) = (k.ks_w, k.ks_h);
    let (wo, ho) = (upstream.w, upstream.h);
    let (px, py) = (pad_lo(kw, padding), pad_lo(kh, padding));
    let (ci_n, co_n) = (k.c_in, k.c_out);
    let batch = input.u * input.v;

    for b in 0..batch {
        let in_base = b * input.w * input.h * ci_n;
        let out_base = b * wo * ho * co_n;
        for kx in 0..kw {
            let x_off = kx as isize - px as isize;
            let ox_lo = (-x_off).max(0) as usize;
            let ox_hi = ((input.w as isize - x_off).min(wo as isize)).max(0) as usize;
            for ky in 0..kh {
                let y_off = ky as isize - py as isize;
                let oy_lo = (-y_off).max(0) as usize;
                let oy_hi = ((input.h as isize - y_off).min(ho as isize)).max(0) as usize;
                let w_base = (kx * kh + ky) * ci_n * co_n;
                for ox in ox_lo..ox_hi {
                    let x = (ox as isize + x_off) as usize;
                    for oy in oy_lo..oy_hi {
                        let y = (oy as isize + y_off) as usize;
                        let ib = in_base + (x * input.h + y) * ci_n;
                        let ob = out_base + (ox * ho + oy) * co_n;
                        let up = &upstream.data()[ob..ob + co_n];
                        for ci in 0..ci_n {
                            let wrow = w_base + ci * co_n;
                            let xv = input.data[ib + ci];
                            let mut acc = T::zero();
                            for (co, g) in up.iter().enumerate() {
                                acc = acc + k.weights[wrow + co] * *g;
                                d_weights[wrow + co] = d_weights[wrow + co] + xv * *g;
                            }
                            d_input.data[ib + ci] = d_input.data[ib + ci] + acc;
                        }
                    }
                }
            }
        }
    }
}

fn conv_angular_backward<T: Real>(
    input: &ModeTensor<T>,
    k: &ConvKernel<T>,
    padding: Padding,
    upstream: &ModeTensor<T>,
    d_input: &mut ModeTensor<T>,
    d_weights: &mut [T],
) {
    let (ku, kv) = (k.ka_u, k.ka_v);
    let (uo, vo) = (upstream.u, upstream.v);
    let (pu, pv) = (pad_lo(ku, padding), pad_lo(kv, padding));
    let (ci_n, co_n) = (k.c_in, k.c_out);
    let positions = input.w * input.h;

    for ou in 0..uo {
        for ov in 0..vo {
            let out_base = (ou * vo + ov) * positions * co_n;
            for au in 0..ku {
                let u = ou as isize + au as isize - pu as isize;
                if u < 0 || u >= input.u as isize {
                    continue;
                }
                for av in 0..kv {
                    let v = ov as isize + av as isize - pv as isize;
                    if v < 0 || v >= input.v as isize {
                        continue;
                    }
                    let in_base = (u as usize * input.v + v as usize) * positions * ci_n;
                    let w_base = (au * kv + av) * ci_n * co_n;
                    for p in 0..positions {
                        let ib = in_base + p * ci_n;
                        let ob = out_base + p * co_n;
                        let up = &upstream.data()[ob..ob + co_n];
                        for ci in 0..ci_n {
                            let wrow = w_base + ci * co_n;
                            let xv = input.data[ib + ci];
                            let mut acc = T::zero();
                            for (co, g) in up.iter().enumerate() {
                                acc = acc + k.weights[wrow + co] * *g;
                                d_weights[wrow + co] = d_weights[wrow + co] + xv * *g;
                            }
                            d_input.data[ib + ci] = d_input.data[ib + ci] + acc;
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn seq_tensor(u: usize, v: usize, w: usize, h: usize, c: usize) -> ModeTensor<f64> {
        let n = u * v * w * h * c;
        let data = (0..n).map(|i| i as f64 * 0.1 + 0.3).collect();
        ModeTensor::new(u, v, w, h, c, data).unwrap()
    }

    #[test]
    fn spatial_mode_index_bijection() {
        // (u,v,w,h) = (2,2,4,4), element (1,0,2,3,0) lands at spatial (2,2,3,0)
        let t = seq_tensor(2, 2, 4, 4, 1);
        assert_eq!(t.spatial_coords(1, 0, 2, 3, 0), [2, 2, 3, 0]);
        // and the flat offset is the same under both interpretations
        let flat_native = t.idx(1, 0, 2, 3, 0);
        let [b, w, h, c] = t.spatial_coords(1, 0, 2, 3, 0);
        let flat_spatial = ((b * t.w + w) * t.h + h) * t.c + c;
        assert_eq!(flat_native, flat_spatial);
    }

    #[test]
    fn angular_mode_index_bijection() {
        // (u,v,w,h) = (0,1,3,2) with W=H=4 flattens to (0,1,14)
        let t = seq_tensor(2, 2, 4, 4, 1);
        assert_eq!(t.angular_coords(0, 1, 3, 2, 0), [0, 1, 14, 0]);
    }

    #[test]
    fn reshape_round_trip_is_identity() {
        let t = seq_tensor(2, 3, 4, 5, 2);
        let back = t
            .clone()
            .reshape_mode(Mode::Spatial)
            .reshape_mode(Mode::Native4d);
        assert_eq!(t, back);
        let back = t
            .clone()
            .reshape_mode(Mode::Angular)
            .reshape_mode(Mode::Native4d);
        assert_eq!(t, back);
        let twice = t
            .clone()
            .reshape_mode(Mode::Spatial)
            .reshape_mode(Mode::Native4d)
            .reshape_mode(Mode::Spatial);
        assert_eq!(twice.data(), t.data());
    }

    #[test]
    fn identity_kernel_reproduces_input() {
        let t = seq_tensor(2, 2, 4, 4, 1).reshape_mode(Mode::Spatial);
        let mut k = ConvKernel::<f64>::zeros(1, 1, 3, 3, 1, 1).unwrap();
        let center = k.widx(0, 0, 1, 1, 0, 0);
        k.weights[center] = 1.0;
        let out = conv2d(&t, &k, Padding::SameZero).unwrap();
        assert_eq!(out.data(), t.data());
    }

    #[test]
    fn single_pixel_same_zero_sees_only_center_tap() {
        let t = ModeTensor::new(1, 1, 1, 1, 1, vec![0.7]
        )
        .unwrap()
        .reshape_mode(Mode::Spatial);
        let weights: Vec<f64> = (1..=9).map(|i| i as f64).collect();
        let k = ConvKernel::new(1, 1, 3, 3, 1, 1, weights, vec![0.25]).unwrap();
        let out = conv2d(&t, &k, Padding::SameZero).unwrap();
        // all taps except the center (weight 5.0) hit zero padding
        assert_eq!(out.data()[0], 5.0 * 0.7 + 0.25);
    }

    #[test]
    fn valid_padding_kernel_too_large() {
        let t = seq_tensor(1, 1, 2, 2, 1).reshape_mode(Mode::Spatial);
        let k = ConvKernel::<f64>::zeros(1, 1, 3, 3, 1, 1).unwrap();
        assert!(matches!(
            conv2d(&t, &k, Padding::Valid),
            Err(TensorError::KernelTooLarge { .. })
        ));
    }

    #[test]
    fn conv_rejects_channel_and_mode_mismatch() {
        let t = seq_tensor(1, 1, 4, 4, 2).reshape_mode(Mode::Spatial);
        let k = ConvKernel::<f64>::zeros(1, 1, 3, 3, 3, 1).unwrap();
        assert!(matches!(
            conv2d(&t, &k, Padding::SameZero),
            Err(TensorError::ChannelMismatch { .. })
        ));
        let k = ConvKernel::<f64>::zeros(3, 3, 1, 1, 2, 1).unwrap();
        assert!(matches!(
            conv2d(&t, &k, Padding::SameZero),
            Err(TensorError::ModeMismatch { .. })
        ));
    }

    #[test]
    fn four_dim_kernel_rejected() {
        assert!(matches!(
            ConvKernel::<f64>::zeros(3, 3, 3, 3, 1, 1),
            Err(TensorError::KernelNotSeparable { .. })
        ));
    }

    #[test]
    fn concat_stacks_channels_in_order() {
        let a = seq_tensor(1, 2, 2, 2, 3).reshape_mode(Mode::Spatial);
        let b = seq_tensor(1, 2, 2, 2, 5).reshape_mode(Mode::Spatial);
        let cat = concat_channels(&[&a, &b]).unwrap();
        assert_eq!(cat.c, 8);
        for pos in 0..(1 * 2 * 2 * 2) {
            for ch in 0..3 {
                assert_eq!(cat.data()[pos * 8 + ch], a.data()[pos * 3 + ch]);
            }
            for ch in 0..5 {
                assert_eq!(cat.data()[pos * 8 + 3 + ch], b.data()[pos * 5 + ch]);
            }
        }
    }

    #[test]
    fn concat_single_part_is_identity() {
        let a = seq_tensor(2, 2, 3, 3, 4);
        let cat = concat_channels(&[&a]).unwrap();
        assert_eq!(cat, a);
    }

    #[test]
    fn slice_after_concat_round_trips() {
        let a = seq_tensor(2, 1, 2, 3, 2);
        let b = seq_tensor(2, 1, 2, 3, 3);
        let cat = concat_channels(&[&a, &b]).unwrap();
        assert_eq!(slice_channels(&cat, 0, 2).unwrap(), a);
        assert_eq!(slice_channels(&cat, 2, 5).unwrap(), b);
    }

    #[test]
    fn concat_mismatch_rejected() {
        let a = seq_tensor(2, 1, 2, 3, 2);
        let b = seq_tensor(2, 1, 3, 3, 2);
        assert!(matches!(
            concat_channels(&[&a, &b]),
            Err(TensorError::ExtentMismatch)
        ));
        let c = seq_tensor(2, 1, 2, 3, 2).reshape_mode(Mode::Spatial);
        assert!(matches!(
            concat_channels(&[&a, &c]),
            Err(TensorError::ExtentMismatch)
        ));
    }

    #[test]
    fn relu_and_identity() {
        let t = ModeTensor::new(1, 1, 1, 1, 4, vec![-1.5, 0.0, 2.0, -0.1]).unwrap();
        let r = activation(&t, Activation::Relu);
        assert_eq!(r.data(), &[0.0, 0.0, 2.0, 0.0]);
        let i = activation(&t, Activation::Identity);
        assert_eq!(i.data(), t.data());
    }

    #[test]
    fn relu_adjoint_masks_by_input_sign() {
        let input = [2.0, -2.0, 0.0];
        let upstream = [3.0, 3.0, 3.0];
        let mut grad = [0.0; 3];
        relu_backward(&input, &upstream, &mut grad);
        // subgradient at exactly 0 is 0
        assert_eq!(grad, [3.0, 0.0, 0.0]);
    }
}
