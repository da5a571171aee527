//! Voice classifier network.
//!
//! conv 3x3x8 + ReLU + 2x2 max-pool, conv 3x3x16 + ReLU + 2x2 max-pool,
//! flatten, dense 32 + ReLU, dense 2 + softmax. Convolutions use zero
//! "same" padding and pooling keeps partial edge windows, so any input of at
//! least 1x1 chains through (a 61x257 spectrogram flattens to 16x16x65).
//!
//! The network is generic over [`Scalar`]: training and inference run in
//! `f32`, gradient checks in `f64` through the same code.

use alloc::string::String;
use alloc::vec::Vec;
use core::ops::{Add, AddAssign, Div, Mul, Sub};

use rand::Rng;

use super::{AudioError, Spectrogram};

pub const CONV1_CHANNELS: usize = 8;
pub const CONV2_CHANNELS: usize = 16;
pub const HIDDEN: usize = 32;
pub const CLASSES: usize = 2;
pub const MODEL_VERSION: &str = "voice-cnn-v1";

/// Parameter tensors in storage order.
pub const PARAM_NAMES: [&str; 8] = [
    "conv1.weight",
    "conv1.bias",
    "conv2.weight",
    "conv2.bias",
    "dense1.weight",
    "dense1.bias",
    "dense2.weight",
    "dense2.bias",
];

const C1W: usize = 0;
const C1B: usize = 1;
const C2W: usize = 2;
const C2B: usize = 3;
const D1W: usize = 4;
const D1B: usize = 5;
const D2W: usize = 6;
const D2B: usize = 7;

pub trait Scalar:
    Copy
    + PartialOrd
    + Default
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + AddAssign
    + 'static
{
    const ZERO: Self;
    const ONE: Self;
    fn from_f32(v: f32) -> Self;
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn exp(self) -> Self;
}

impl Scalar for f32 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;
    fn from_f32(v: f32) -> Self {
        v
    }
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn exp(self) -> Self {
        libm::expf(self)
    }
}

impl Scalar for f64 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;
    fn from_f32(v: f32) -> Self {
        v as f64
    }
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn exp(self) -> Self {
        libm::exp(self)
    }
}

/// Spatial sizes through the stack for a given input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub h: usize,
    pub w: usize,
    pub p1h: usize,
    pub p1w: usize,
    pub p2h: usize,
    pub p2w: usize,
    pub flat: usize,
}

impl Dims {
    pub fn new(h: usize, w: usize) -> Self {
        let (p1h, p1w) = (h.div_ceil(2), w.div_ceil(2));
        let (p2h, p2w) = (p1h.div_ceil(2), p1w.div_ceil(2));
        Self { h, w, p1h, p1w, p2h, p2w, flat: CONV2_CHANNELS * p2h * p2w }
    }

    pub fn param_shapes(&self) -> [Vec<usize>; 8] {
        [
            alloc::vec![CONV1_CHANNELS, 1, 3, 3],
            alloc::vec![CONV1_CHANNELS],
            alloc::vec![CONV2_CHANNELS, CONV1_CHANNELS, 3, 3],
            alloc::vec![CONV2_CHANNELS],
            alloc::vec![HIDDEN, self.flat],
            alloc::vec![HIDDEN],
            alloc::vec![CLASSES, HIDDEN],
            alloc::vec![CLASSES],
        ]
    }

    fn fan_in(&self) -> [usize; 8] {
        [9, 9, 9 * CONV1_CHANNELS, 9 * CONV1_CHANNELS, self.flat, self.flat, HIDDEN, HIDDEN]
    }
}

/// Parameters (or gradients) of the network in [`PARAM_NAMES`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    pub dims: Dims,
    pub params: [Vec<T>; 8],
}

/// Activations kept for the backward pass.
pub struct Trace<T> {
    x: Vec<T>,
    a1: Vec<T>,
    p1: Vec<T>,
    p1_arg: Vec<u32>,
    a2: Vec<T>,
    p2: Vec<T>,
    p2_arg: Vec<u32>,
    hidden: Vec<T>,
    pub logits: [T; CLASSES],
}

impl<T: Scalar> Network<T> {
    pub fn zeros(dims: Dims) -> Self {
        let params = dims.param_shapes().map(|s| alloc::vec![T::ZERO; s.iter().product()]);
        Self { dims, params }
    }

    /// He-uniform weights, zero biases.
    pub fn init<R: Rng>(dims: Dims, rng: &mut R) -> Self {
        let mut net = Self::zeros(dims);
        let fan = dims.fan_in();
        for idx in [C1W, C2W, D1W, D2W] {
            let limit = libm::sqrt(6.0 / fan[idx] as f64);
            for v in net.params[idx].iter_mut() {
                *v = T::from_f64(rng.random_range(-limit..limit));
            }
        }
        net
    }

    pub fn convert<U: Scalar>(&self) -> Network<U> {
        Network {
            dims: self.dims,
            params: self.params.clone().map(|p| p.into_iter().map(|v| U::from_f64(v.to_f64())).collect()),
        }
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Vec::len).sum()
    }

    pub fn forward(&self, x: &[T]) -> Trace<T> {
        let d = self.dims;
        assert_eq!(x.len(), d.h * d.w, "input does not match network dims");
        let p = &self.params;

        let mut a1 = alloc::vec![T::ZERO; CONV1_CHANNELS * d.h * d.w];
        conv3x3_same(x, 1, d.h, d.w, &p[C1W], &p[C1B], CONV1_CHANNELS, &mut a1);
        relu(&mut a1);
        let (p1, p1_arg) = maxpool2(&a1, CONV1_CHANNELS, d.h, d.w);

        let mut a2 = alloc::vec![T::ZERO; CONV2_CHANNELS * d.p1h * d.p1w];
        conv3x3_same(&p1, CONV1_CHANNELS, d.p1h, d.p1w, &p[C2W], &p[C2B], CONV2_CHANNELS, &mut a2);
        relu(&mut a2);
        let (p2, p2_arg) = maxpool2(&a2, CONV2_CHANNELS, d.p1h, d.p1w);

        let mut hidden = alloc::vec![T::ZERO; HIDDEN];
        dense(&p2, &p[D1W], &p[D1B], &mut hidden);
        relu(&mut hidden);
        let mut logits = [T::ZERO; CLASSES];
        dense(&hidden, &p[D2W], &p[D2B], &mut logits);

        Trace { x: x.to_vec(), a1, p1, p1_arg, a2, p2, p2_arg, hidden, logits }
    }

    /// Accumulates cross-entropy gradients for one example into `grads` and
    /// returns the example's loss.
    pub fn backward(&self, trace: &Trace<T>, label: usize, grads: &mut Network<T>) -> f64 {
        let d = self.dims;
        let p = &self.params;
        let g = &mut grads.params;

        let probs = softmax(&trace.logits);
        let loss = cross_entropy(&trace.logits, label);
        let mut dlogits = probs;
        dlogits[label] = dlogits[label] - T::ONE;

        let mut dhidden = alloc::vec![T::ZERO; HIDDEN];
        let (gw, gb) = split_pair(g, D2W);
        dense_backward(&trace.hidden, &p[D2W], &dlogits, gw, gb, &mut dhidden);
        relu_backward(&trace.hidden, &mut dhidden);

        let mut dp2 = alloc::vec![T::ZERO; d.flat];
        let (gw, gb) = split_pair(g, D1W);
        dense_backward(&trace.p2, &p[D1W], &dhidden, gw, gb, &mut dp2);

        let mut da2 = alloc::vec![T::ZERO; trace.a2.len()];
        for (j, &src) in trace.p2_arg.iter().enumerate() {
            da2[src as usize] += dp2[j];
        }
        relu_backward(&trace.a2, &mut da2);

        let mut dp1 = alloc::vec![T::ZERO; trace.p1.len()];
        {
            let (gw, gb) = split_pair(g, C2W);
            conv3x3_backward(
                &trace.p1,
                CONV1_CHANNELS,
                d.p1h,
                d.p1w,
                &p[C2W],
                CONV2_CHANNELS,
                &da2,
                gw,
                gb,
                Some(&mut dp1),
            );
        }

        let mut da1 = alloc::vec![T::ZERO; trace.a1.len()];
        for (j, &src) in trace.p1_arg.iter().enumerate() {
            da1[src as usize] += dp1[j];
        }
        relu_backward(&trace.a1, &mut da1);

        let (gw, gb) = split_pair(g, C1W);
        conv3x3_backward(&trace.x, 1, d.h, d.w, &p[C1W], CONV1_CHANNELS, &da1, gw, gb, None);
        loss
    }
}

fn split_pair<T>(g: &mut [Vec<T>; 8], weight: usize) -> (&mut [T], &mut [T]) {
    let (a, b) = g.split_at_mut(weight + 1);
    (&mut a[weight], &mut b[0])
}

pub fn softmax<T: Scalar>(z: &[T; CLASSES]) -> [T; CLASSES] {
    let m = if z[0] > z[1] { z[0] } else { z[1] };
    let e = [(z[0] - m).exp(), (z[1] - m).exp()];
    let s = e[0] + e[1];
    [e[0] / s, e[1] / s]
}

pub fn cross_entropy<T: Scalar>(z: &[T; CLASSES], label: usize) -> f64 {
    let (a, b) = (z[0].to_f64(), z[1].to_f64());
    let m = a.max(b);
    let lse = m + libm::log(libm::exp(a - m) + libm::exp(b - m));
    lse - z[label].to_f64()
}

#[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN goes to zero too
fn relu<T: Scalar>(v: &mut [T]) {
    for x in v.iter_mut() {
        if !(*x > T::ZERO) {
            *x = T::ZERO;
        }
    }
}

#[allow(clippy::neg_cmp_op_on_partial_ord)]
fn relu_backward<T: Scalar>(post: &[T], grad: &mut [T]) {
    for (g, &a) in grad.iter_mut().zip(post) {
        if !(a > T::ZERO) {
            *g = T::ZERO;
        }
    }
}

/// Valid output range for one kernel offset under zero "same" padding.
#[inline]
fn span(k: usize, n: usize) -> (usize, usize) {
    match k {
        0 => (1.min(n), n),
        1 => (0, n),
        _ => (0, n.saturating_sub(1)),
    }
}

#[allow(clippy::too_many_arguments)]
fn conv3x3_same<T: Scalar>(
    input: &[T],
    in_c: usize,
    h: usize,
    w: usize,
    weight: &[T],
    bias: &[T],
    out_c: usize,
    out: &mut [T],
) {
    let plane = h * w;
    for o in 0..out_c {
        let out_o = &mut out[o * plane..(o + 1) * plane];
        out_o.fill(bias[o]);
        for i in 0..in_c {
            let in_i = &input[i * plane..(i + 1) * plane];
            for ky in 0..3 {
                let (y0, y1) = span(ky, h);
                for kx in 0..3 {
                    let (x0, x1) = span(kx, w);
                    if x0 >= x1 {
                        continue;
                    }
                    let wv = weight[((o * in_c + i) * 3 + ky) * 3 + kx];
                    for y in y0..y1 {
                        let iy = y + ky - 1;
                        let orow = &mut out_o[y * w + x0..y * w + x1];
                        let irow = &in_i[iy * w + x0 + kx - 1..iy * w + x1 + kx - 1];
                        for (a, &b) in orow.iter_mut().zip(irow) {
                            *a += wv * b;
                        }
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn conv3x3_backward<T: Scalar>(
    input: &[T],
    in_c: usize,
    h: usize,
    w: usize,
    weight: &[T],
    out_c: usize,
    dout: &[T],
    dweight: &mut [T],
    dbias: &mut [T],
    mut dinput: Option<&mut [T]>,
) {
    let plane = h * w;
    for o in 0..out_c {
        let dout_o = &dout[o * plane..(o + 1) * plane];
        let mut bsum = T::ZERO;
        for &v in dout_o {
            bsum += v;
        }
        dbias[o] += bsum;
        for i in 0..in_c {
            let in_i = &input[i * plane..(i + 1) * plane];
            for ky in 0..3 {
                let (y0, y1) = span(ky, h);
                for kx in 0..3 {
                    let (x0, x1) = span(kx, w);
                    if x0 >= x1 {
                        continue;
                    }
                    let widx = ((o * in_c + i) * 3 + ky) * 3 + kx;
                    let wv = weight[widx];
                    let mut acc = T::ZERO;
                    for y in y0..y1 {
                        let iy = y + ky - 1;
                        let drow = &dout_o[y * w + x0..y * w + x1];
                        let irow = &in_i[iy * w + x0 + kx - 1..iy * w + x1 + kx - 1];
                        for (&a, &b) in drow.iter().zip(irow) {
                            acc += a * b;
                        }
                        if let Some(din) = dinput.as_deref_mut() {
                            let start = i * plane + iy * w + x0 + kx - 1;
                            let dirow = &mut din[start..start + (x1 - x0)];
                            for (a, &b) in dirow.iter_mut().zip(drow) {
                                *a += wv * b;
                            }
                        }
                    }
                    dweight[widx] += acc;
                }
            }
        }
    }
}

/// 2x2 max-pool, stride 2, partial windows at the right and bottom edges.
fn maxpool2<T: Scalar>(input: &[T], c: usize, h: usize, w: usize) -> (Vec<T>, Vec<u32>) {
    let (ph, pw) = (h.div_ceil(2), w.div_ceil(2));
    let mut out = Vec::with_capacity(c * ph * pw);
    let mut arg = Vec::with_capacity(c * ph * pw);
    for ch in 0..c {
        let base = ch * h * w;
        for py in 0..ph {
            for px in 0..pw {
                let mut best_i = base + 2 * py * w + 2 * px;
                let mut best = input[best_i];
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let (y, x) = (2 * py + dy, 2 * px + dx);
                    if y < h && x < w {
                        let i = base + y * w + x;
                        if input[i] > best {
                            best = input[i];
                            best_i = i;
                        }
                    }
                }
                out.push(best);
                arg.push(best_i as u32);
            }
        }
    }
    (out, arg)
}

fn dense<T: Scalar>(input: &[T], weight: &[T], bias: &[T], out: &mut [T]) {
    let n = input.len();
    for (j, o) in out.iter_mut().enumerate() {
        let row = &weight[j * n..(j + 1) * n];
        let mut acc = bias[j];
        for (&a, &b) in row.iter().zip(input) {
            acc += a * b;
        }
        *o = acc;
    }
}

fn dense_backward<T: Scalar>(
    input: &[T],
    weight: &[T],
    dout: &[T],
    dweight: &mut [T],
    dbias: &mut [T],
    dinput: &mut [T],
) {
    let n = input.len();
    for (j, &g) in dout.iter().enumerate() {
        dbias[j] += g;
        let wrow = &weight[j * n..(j + 1) * n];
        let dwrow = &mut dweight[j * n..(j + 1) * n];
        for ((dw, &x), (di, &wv)) in dwrow.iter_mut().zip(input).zip(dinput.iter_mut().zip(wrow)) {
            *dw += g * x;
            *di += g * wv;
        }
    }
}

/// Trained voice classifier with `f32` parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct VoiceModel {
    pub version: String,
    pub network: Network<f32>,
}

impl VoiceModel {
    pub fn new(network: Network<f32>) -> Self {
        Self { version: String::from(MODEL_VERSION), network }
    }

    pub fn zeros(frames: usize, bins: usize) -> Self {
        Self::new(Network::zeros(Dims::new(frames, bins)))
    }

    pub fn input_shape(&self) -> (usize, usize) {
        (self.network.dims.h, self.network.dims.w)
    }

    /// Rebuilds a model from stored tensors, checking that every shape
    /// chains from the input to the two-class output.
    pub fn from_tensors(
        version: String,
        input: (usize, usize),
        tensors: Vec<(Vec<usize>, Vec<f32>)>,
    ) -> Result<Self, AudioError> {
        if input.0 == 0 || input.1 == 0 {
            return Err(AudioError::InvalidParameter("model input shape must be positive"));
        }
        let dims = Dims::new(input.0, input.1);
        let expected = dims.param_shapes();
        if tensors.len() != expected.len() {
            return Err(AudioError::InvalidParameter("model must hold exactly 8 tensors"));
        }
        let mut params: [Vec<f32>; 8] = Default::default();
        for (i, (shape, data)) in tensors.into_iter().enumerate() {
            if shape != expected[i] || data.len() != shape.iter().product::<usize>() {
                return Err(AudioError::InvalidParameter("tensor shape does not chain"));
            }
            params[i] = data;
        }
        Ok(Self { version, network: Network { dims, params } })
    }

    pub fn tensors(&self) -> impl Iterator<Item = (&'static str, Vec<usize>, &[f32])> + '_ {
        let shapes = self.network.dims.param_shapes();
        PARAM_NAMES
            .iter()
            .zip(shapes)
            .zip(self.network.params.iter())
            .map(|((name, shape), data)| (*name, shape, data.as_slice()))
    }

    pub fn check_shape(&self, s: &Spectrogram) -> Result<(), AudioError> {
        let (frames, bins) = self.input_shape();
        if s.frames() != frames || s.bins() != bins {
            return Err(AudioError::ShapeMismatch { frames, bins, got_frames: s.frames(), got_bins: s.bins() });
        }
        Ok(())
    }

    /// Softmax probability of the voice class. Pure: the model is not
    /// touched.
    pub fn voice_probability(&self, s: &Spectrogram) -> Result<f64, AudioError> {
        self.check_shape(s)?;
        let x: Vec<f32> = s.magnitudes().iter().map(|&v| v as f32).collect();
        let trace = self.network.forward(&x);
        Ok(softmax(&trace.logits)[1].to_f64())
    }
}
