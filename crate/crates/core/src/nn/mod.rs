//! Small feed-forward networks with hand-written backpropagation.
//!
//! A [`Network`] is an ordered stack of [`LayerSpec`]s over one flat parameter
//! vector. Dense stacks take `[N, features]` inputs; convolutional stacks take
//! `[N, C, H, W]`. Convolutions are 3x3, stride 1, zero padding 1, computed as
//! cross-correlation (no kernel flip).

mod checkpoint;
mod gradcheck;
mod optim;

pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use gradcheck::{finite_diff_check, gradcheck_suite, input_jacobian, CheckResult, ScalarLoss};
pub use optim::{ema_update, ema_update_in_place, AdamState, EmaConfig};

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng::SeedStream;
use crate::tensor::{gemm, ConvGeometry, MatRef, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerSpec {
    Dense {
        inputs: usize,
        outputs: usize,
    },
    Conv3x3 {
        in_channels: usize,
        out_channels: usize,
    },
    Relu,
    MaxPool2,
    /// Nearest-neighbour 2x upsampling.
    Upsample2,
    /// Concatenates, along the channel axis, the output of layer `source`
    /// after the current activation.
    ConcatSkip {
        source: usize,
    },
    /// Softmax over axis 1 (classes).
    SoftmaxHead,
}

impl LayerSpec {
    pub fn param_count(&self) -> usize {
        match *self {
            LayerSpec::Dense { inputs, outputs } => inputs * outputs + outputs,
            LayerSpec::Conv3x3 {
                in_channels,
                out_channels,
            } => out_channels * in_channels * 9 + out_channels,
            _ => 0,
        }
    }

    fn fan_in(&self) -> usize {
        match *self {
            LayerSpec::Dense { inputs, .. } => inputs,
            LayerSpec::Conv3x3 { in_channels, .. } => in_channels * 9,
            _ => 0,
        }
    }

    fn weight_count(&self) -> usize {
        match *self {
            LayerSpec::Dense { inputs, outputs } => inputs * outputs,
            LayerSpec::Conv3x3 {
                in_channels,
                out_channels,
            } => out_channels * in_channels * 9,
            _ => 0,
        }
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            LayerSpec::Dense { inputs, outputs } => write!(f, "dense {inputs} {outputs}"),
            LayerSpec::Conv3x3 {
                in_channels,
                out_channels,
            } => write!(f, "conv3x3 {in_channels} {out_channels}"),
            LayerSpec::Relu => write!(f, "relu"),
            LayerSpec::MaxPool2 => write!(f, "maxpool2"),
            LayerSpec::Upsample2 => write!(f, "upsample2"),
            LayerSpec::ConcatSkip { source } => write!(f, "concat-skip {source}"),
            LayerSpec::SoftmaxHead => write!(f, "softmax-head"),
        }
    }
}

impl std::str::FromStr for LayerSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split_whitespace().collect();
        let num = |i: usize| -> Result<usize> {
            parts
                .get(i)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Format(format!("bad layer line {s:?}")))
        };
        let spec = match parts.first().copied() {
            Some("dense") => LayerSpec::Dense {
                inputs: num(1)?,
                outputs: num(2)?,
            },
            Some("conv3x3") => LayerSpec::Conv3x3 {
                in_channels: num(1)?,
                out_channels: num(2)?,
            },
            Some("relu") => LayerSpec::Relu,
            Some("maxpool2") => LayerSpec::MaxPool2,
            Some("upsample2") => LayerSpec::Upsample2,
            Some("concat-skip") => LayerSpec::ConcatSkip { source: num(1)? },
            Some("softmax-head") => LayerSpec::SoftmaxHead,
            _ => return Err(Error::Format(format!("unknown layer {s:?}"))),
        };
        Ok(spec)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Signature {
    Unknown,
    Features(usize),
    Channels(usize),
}

static PARAM_VERSION: AtomicU64 = AtomicU64::new(1);

fn next_version() -> u64 {
    PARAM_VERSION.fetch_add(1, Ordering::Relaxed)
}

/// Layer stack plus flat parameter store.
#[derive(Clone, Debug)]
pub struct Network {
    layers: Vec<LayerSpec>,
    offsets: Vec<usize>,
    params: Tensor,
    seed: u64,
    version: u64,
}

/// Activations recorded by [`Network::forward`] for a later backward pass.
#[derive(Clone, Debug)]
pub struct ActivationTape {
    version: u64,
    acts: Vec<Tensor>,
    pool_argmax: Vec<Option<Vec<usize>>>,
}

impl ActivationTape {
    pub fn input(&self) -> &Tensor {
        &self.acts[0]
    }

    pub fn output(&self) -> &Tensor {
        self.acts.last().expect("tape holds the input")
    }
}

/// Gradients of a scalar loss with respect to parameters and input.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub params: Tensor,
    pub input: Tensor,
}

impl Network {
    /// Builds a network with He-normal weights and zero biases.
    pub fn new(layers: Vec<LayerSpec>, seed: u64) -> Result<Self> {
        validate(&layers)?;
        let mut offsets = Vec::with_capacity(layers.len() + 1);
        let mut total = 0;
        for l in &layers {
            offsets.push(total);
            total += l.param_count();
        }
        offsets.push(total);
        let mut params = vec![0.0; total];
        let mut rng = SeedStream::new(seed);
        for (l, &off) in layers.iter().zip(&offsets) {
            let n = l.weight_count();
            if n == 0 {
                continue;
            }
            let std = (2.0 / l.fan_in() as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("finite std");
            for p in &mut params[off..off + n] {
                *p = normal.sample(&mut rng);
            }
        }
        Ok(Self {
            layers,
            offsets,
            params: Tensor::new(&[total], params)?,
            seed,
            version: next_version(),
        })
    }

    /// Multi-layer perceptron `widths[0] -> ... -> widths[last]` with ReLU
    /// between hidden layers and an optional softmax head.
    pub fn mlp(widths: &[usize], softmax: bool, seed: u64) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::invalid(
                "an MLP needs at least input and output widths",
            ));
        }
        let mut layers = Vec::new();
        for (i, pair) in widths.windows(2).enumerate() {
            layers.push(LayerSpec::Dense {
                inputs: pair[0],
                outputs: pair[1],
            });
            if i + 2 < widths.len() {
                layers.push(LayerSpec::Relu);
            }
        }
        if softmax {
            layers.push(LayerSpec::SoftmaxHead);
        }
        Self::new(layers, seed)
    }

    /// Three-level encoder-decoder with skip concatenation and a softmax head.
    /// Inputs must have spatial extents divisible by 4.
    pub fn encoder_decoder(
        in_channels: usize,
        n_classes: usize,
        widths: [usize; 3],
        seed: u64,
    ) -> Result<Self> {
        let [c1, c2, c3] = widths;
        use LayerSpec::*;
        let layers = vec![
            Conv3x3 {
                in_channels,
                out_channels: c1,
            }, // 0
            Relu,     // 1: skip at full resolution
            MaxPool2, // 2
            Conv3x3 {
                in_channels: c1,
                out_channels: c2,
            },
            Relu, // 4: skip at half resolution
            MaxPool2,
            Conv3x3 {
                in_channels: c2,
                out_channels: c3,
            },
            Relu,
            Upsample2,
            ConcatSkip { source: 4 },
            Conv3x3 {
                in_channels: c3 + c2,
                out_channels: c2,
            },
            Relu,
            Upsample2,
            ConcatSkip { source: 1 },
            Conv3x3 {
                in_channels: c2 + c1,
                out_channels: c1,
            },
            Relu,
            Conv3x3 {
                in_channels: c1,
                out_channels: n_classes,
            },
            SoftmaxHead,
        ];
        Self::new(layers, seed)
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &Tensor {
        &self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Replaces all parameters. Invalidates outstanding tapes.
    pub fn set_params(&mut self, params: Tensor) -> Result<()> {
        self.params.expect_same_shape(&params)?;
        self.params = params;
        self.version = next_version();
        Ok(())
    }

    /// Mutable parameter access. Invalidates outstanding tapes.
    pub fn params_mut(&mut self) -> &mut Tensor {
        self.version = next_version();
        &mut self.params
    }

    fn layer_params(&self, l: usize) -> (&[f64], &[f64]) {
        let (start, end) = (self.offsets[l], self.offsets[l + 1]);
        let w = self.layers[l].weight_count();
        let p = &self.params.data()[start..end];
        p.split_at(w)
    }

    /// Runs the network. The tape is returned iff `cache` is set.
    pub fn forward(&self, x: &Tensor, cache: bool) -> Result<(Tensor, Option<ActivationTape>)> {
        let mut acts: Vec<Tensor> = Vec::with_capacity(self.layers.len() + 1);
        let mut pool_argmax = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for (l, spec) in self.layers.iter().enumerate() {
            let (next, argmax) = self.layer_forward(l, spec, &cur, &acts)?;
            if !next.data().iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "activation of layer {l} ({spec})"
                )));
            }
            pool_argmax.push(argmax);
            acts.push(cur);
            cur = next;
        }
        if !cache {
            return Ok((cur, None));
        }
        acts.push(cur.clone());
        Ok((
            cur,
            Some(ActivationTape {
                version: self.version,
                acts,
                pool_argmax,
            }),
        ))
    }

    /// Forward pass without a tape.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward(x, false)?.0)
    }

    /// Skip sources are looked up in `acts`, where `acts[l + 1]` is the
    /// output of layer `l`; the current layer's own input is `input`.
    fn layer_forward(
        &self,
        l: usize,
        spec: &LayerSpec,
        input: &Tensor,
        acts: &[Tensor],
    ) -> Result<(Tensor, Option<Vec<usize>>)> {
        let out = match *spec {
            LayerSpec::Dense { inputs, outputs } => {
                if input.ndim() != 2 || input.shape()[1] != inputs {
                    return Err(Error::shape(format!(
                        "layer {l} dense expects [N, {inputs}], got {:?}",
                        input.shape()
                    )));
                }
                let n = input.shape()[0];
                let (w, b) = self.layer_params(l);
                let mut out = Vec::with_capacity(n * outputs);
                for _ in 0..n {
                    out.extend_from_slice(b);
                }
                gemm(
                    n,
                    inputs,
                    outputs,
                    MatRef::row_major(input.data(), inputs),
                    MatRef::row_major(w, outputs),
                    &mut out,
                    true,
                );
                Tensor::new(&[n, outputs], out)?
            }
            LayerSpec::Conv3x3 {
                in_channels,
                out_channels,
            } => {
                let (n, [c, h, w]) = image_dims(input, l)?;
                if c != in_channels {
                    return Err(Error::shape(format!(
                        "layer {l} conv expects {in_channels} channels, got {c}"
                    )));
                }
                let geom = ConvGeometry::new(c, h, w, 3, 3, 1, 1)?;
                let (kw, bias) = self.layer_params(l);
                let plane = h * w;
                let mut out = vec![0.0; n * out_channels * plane];
                for i in 0..n {
                    let x = &input.data()[i * c * plane..(i + 1) * c * plane];
                    let cols = geom.im2col(x);
                    let dst = &mut out[i * out_channels * plane..(i + 1) * out_channels * plane];
                    for (o, &bo) in bias.iter().enumerate() {
                        dst[o * plane..(o + 1) * plane].fill(bo);
                    }
                    gemm(
                        out_channels,
                        geom.col_rows(),
                        plane,
                        MatRef::row_major(kw, geom.col_rows()),
                        MatRef::row_major(&cols, plane),
                        dst,
                        true,
                    );
                }
                Tensor::new(&[n, out_channels, h, w], out)?
            }
            LayerSpec::Relu => input.map(|v| if v > 0.0 { v } else { 0.0 }),
            LayerSpec::MaxPool2 => {
                let (n, [c, h, w]) = image_dims(input, l)?;
                if h % 2 != 0 || w % 2 != 0 {
                    return Err(Error::shape(format!(
                        "layer {l} maxpool2 needs even extents, got {h}x{w}"
                    )));
                }
                let (oh, ow) = (h / 2, w / 2);
                let mut out = Vec::with_capacity(n * c * oh * ow);
                let mut idx = Vec::with_capacity(n * c * oh * ow);
                let d = input.data();
                for p in 0..n * c {
                    let base = p * h * w;
                    for i in 0..oh {
                        for j in 0..ow {
                            let cand = [
                                base + 2 * i * w + 2 * j,
                                base + 2 * i * w + 2 * j + 1,
                                base + (2 * i + 1) * w + 2 * j,
                                base + (2 * i + 1) * w + 2 * j + 1,
                            ];
                            let mut best = cand[0];
                            for &k in &cand[1..] {
                                if d[k] > d[best] {
                                    best = k;
                                }
                            }
                            out.push(d[best]);
                            idx.push(best);
                        }
                    }
                }
                return Ok((Tensor::new(&[n, c, oh, ow], out)?, Some(idx)));
            }
            LayerSpec::Upsample2 => {
                let (n, [c, h, w]) = image_dims(input, l)?;
                let (oh, ow) = (2 * h, 2 * w);
                let d = input.data();
                let mut out = Vec::with_capacity(n * c * oh * ow);
                for p in 0..n * c {
                    for i in 0..oh {
                        let row = &d[(p * h + i / 2) * w..(p * h + i / 2 + 1) * w];
                        for j in 0..ow {
                            out.push(row[j / 2]);
                        }
                    }
                }
                Tensor::new(&[n, c, oh, ow], out)?
            }
            LayerSpec::ConcatSkip { source } => {
                let skip = if source + 1 == acts.len() {
                    input
                } else {
                    &acts[source + 1]
                };
                let (n, [c1, h, w]) = image_dims(input, l)?;
                let (n2, [c2, h2, w2]) = image_dims(skip, l)?;
                if n != n2 || h != h2 || w != w2 {
                    return Err(Error::shape(format!(
                        "layer {l} concat {:?} with {:?}",
                        input.shape(),
                        skip.shape()
                    )));
                }
                let plane = h * w;
                let mut out = Vec::with_capacity(n * (c1 + c2) * plane);
                for i in 0..n {
                    out.extend_from_slice(&input.data()[i * c1 * plane..(i + 1) * c1 * plane]);
                    out.extend_from_slice(&skip.data()[i * c2 * plane..(i + 1) * c2 * plane]);
                }
                Tensor::new(&[n, c1 + c2, h, w], out)?
            }
            LayerSpec::SoftmaxHead => softmax_axis1(input)?,
        };
        Ok((out, None))
    }

    /// Backpropagates `d_out` (gradient of a scalar loss with respect to the
    /// network output) through a tape from a matching forward pass.
    pub fn backward(&self, tape: &ActivationTape, d_out: &Tensor) -> Result<Gradients> {
        if tape.version != self.version || tape.acts.len() != self.layers.len() + 1 {
            return Err(Error::StaleTape);
        }
        tape.output().expect_same_shape(d_out)?;
        let mut d_params = vec![0.0; self.params.len()];
        let mut grads: Vec<Option<Tensor>> = vec![None; tape.acts.len()];
        grads[self.layers.len()] = Some(d_out.clone());
        for l in (0..self.layers.len()).rev() {
            let g = match grads[l + 1].take() {
                Some(g) => g,
                None => Tensor::zeros(tape.acts[l + 1].shape()),
            };
            let input = &tape.acts[l];
            let output = &tape.acts[l + 1];
            let d_in = match self.layers[l] {
                LayerSpec::Dense { inputs, outputs } => {
                    let n = input.shape()[0];
                    let (w, _) = self.layer_params(l);
                    let (start, end) = (self.offsets[l], self.offsets[l + 1]);
                    let (dw, db) = d_params[start..end].split_at_mut(inputs * outputs);
                    gemm(
                        inputs,
                        n,
                        outputs,
                        MatRef::transposed(input.data(), inputs),
                        MatRef::row_major(g.data(), outputs),
                        dw,
                        false,
                    );
                    for row in g.data().chunks_exact(outputs) {
                        for (b, v) in db.iter_mut().zip(row) {
                            *b += v;
                        }
                    }
                    let mut dx = vec![0.0; n * inputs];
                    gemm(
                        n,
                        outputs,
                        inputs,
                        MatRef::row_major(g.data(), outputs),
                        MatRef::transposed(w, outputs),
                        &mut dx,
                        false,
                    );
                    Tensor::new(input.shape(), dx)?
                }
                LayerSpec::Conv3x3 {
                    in_channels,
                    out_channels,
                } => {
                    let (n, [c, h, w]) = image_dims(input, l)?;
                    let geom = ConvGeometry::new(c, h, w, 3, 3, 1, 1)?;
                    let (kw, _) = self.layer_params(l);
                    let plane = h * w;
                    let (start, end) = (self.offsets[l], self.offsets[l + 1]);
                    let (dw, db) =
                        d_params[start..end].split_at_mut(out_channels * in_channels * 9);
                    let mut dx = vec![0.0; input.len()];
                    let mut dcols = vec![0.0; geom.col_rows() * plane];
                    for i in 0..n {
                        let x = &input.data()[i * c * plane..(i + 1) * c * plane];
                        let gy =
                            &g.data()[i * out_channels * plane..(i + 1) * out_channels * plane];
                        let cols = geom.im2col(x);
                        gemm(
                            out_channels,
                            plane,
                            geom.col_rows(),
                            MatRef::row_major(gy, plane),
                            MatRef::transposed(&cols, plane),
                            dw,
                            true,
                        );
                        for (o, b) in db.iter_mut().enumerate() {
                            *b += gy[o * plane..(o + 1) * plane].iter().sum::<f64>();
                        }
                        gemm(
                            geom.col_rows(),
                            out_channels,
                            plane,
                            MatRef::transposed(kw, geom.col_rows()),
                            MatRef::row_major(gy, plane),
                            &mut dcols,
                            false,
                        );
                        geom.col2im(&dcols, &mut dx[i * c * plane..(i + 1) * c * plane]);
                    }
                    Tensor::new(input.shape(), dx)?
                }
                LayerSpec::Relu => input.zip_map(&g, |x, g| if x > 0.0 { g } else { 0.0 })?,
                LayerSpec::MaxPool2 => {
                    let idx = tape.pool_argmax[l].as_ref().ok_or(Error::StaleTape)?;
                    let mut dx = vec![0.0; input.len()];
                    for (&k, &v) in idx.iter().zip(g.data()) {
                        dx[k] += v;
                    }
                    Tensor::new(input.shape(), dx)?
                }
                LayerSpec::Upsample2 => {
                    let (n, [c, h, w]) = image_dims(input, l)?;
                    let ow = 2 * w;
                    let mut dx = vec![0.0; input.len()];
                    for p in 0..n * c {
                        for i in 0..2 * h {
                            for j in 0..ow {
                                dx[(p * h + i / 2) * w + j / 2] +=
                                    g.data()[(p * 2 * h + i) * ow + j];
                            }
                        }
                    }
                    Tensor::new(input.shape(), dx)?
                }
                LayerSpec::ConcatSkip { source } => {
                    let skip_shape = tape.acts[source + 1].shape().to_vec();
                    let (n, [c1, h, w]) = image_dims(input, l)?;
                    let c2 = skip_shape[1];
                    let plane = h * w;
                    let mut d_main = Vec::with_capacity(input.len());
                    let mut d_skip = Vec::with_capacity(n * c2 * plane);
                    for i in 0..n {
                        let block = &g.data()[i * (c1 + c2) * plane..(i + 1) * (c1 + c2) * plane];
                        d_main.extend_from_slice(&block[..c1 * plane]);
                        d_skip.extend_from_slice(&block[c1 * plane..]);
                    }
                    accumulate(&mut grads[source + 1], Tensor::new(&skip_shape, d_skip)?)?;
                    Tensor::new(input.shape(), d_main)?
                }
                LayerSpec::SoftmaxHead => softmax_backward(output, &g)?,
            };
            accumulate(&mut grads[l], d_in)?;
        }
        let input = grads[0]
            .take()
            .unwrap_or_else(|| Tensor::zeros(tape.acts[0].shape()));
        Ok(Gradients {
            params: Tensor::new(&[self.params.len()], d_params)?,
            input,
        })
    }
}

fn accumulate(slot: &mut Option<Tensor>, g: Tensor) -> Result<()> {
    match slot {
        Some(existing) => existing.axpy(1.0, &g),
        None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

fn image_dims(t: &Tensor, l: usize) -> Result<(usize, [usize; 3])> {
    if t.ndim() != 4 {
        return Err(Error::shape(format!(
            "layer {l} expects [N, C, H, W], got {:?}",
            t.shape()
        )));
    }
    let s = t.shape();
    Ok((s[0], [s[1], s[2], s[3]]))
}

fn validate(layers: &[LayerSpec]) -> Result<()> {
    let mut sig = Signature::Unknown;
    let mut outs = Vec::with_capacity(layers.len());
    for (l, spec) in layers.iter().enumerate() {
        let bad = |msg: String| Err(Error::invalid(format!("layer {l} ({spec}): {msg}")));
        sig = match *spec {
            LayerSpec::Dense { inputs, outputs } => match sig {
                Signature::Unknown => Signature::Features(outputs),
                Signature::Features(f) if f == inputs => Signature::Features(outputs),
                other => return bad(format!("incompatible with {other:?}")),
            },
            LayerSpec::Conv3x3 {
                in_channels,
                out_channels,
            } => match sig {
                Signature::Unknown => Signature::Channels(out_channels),
                Signature::Channels(c) if c == in_channels => Signature::Channels(out_channels),
                other => return bad(format!("incompatible with {other:?}")),
            },
            LayerSpec::MaxPool2 | LayerSpec::Upsample2 => match sig {
                Signature::Features(_) => return bad("spatial layer after dense".into()),
                s => s,
            },
            LayerSpec::ConcatSkip { source } => {
                if source >= l {
                    return bad("skip source must precede the layer".into());
                }
                match (sig, outs[source]) {
                    (Signature::Channels(a), Signature::Channels(b)) => Signature::Channels(a + b),
                    _ => return bad("skip needs channel activations on both sides".into()),
                }
            }
            LayerSpec::Relu | LayerSpec::SoftmaxHead => sig,
        };
        if matches!(
            spec,
            LayerSpec::Dense { inputs: 0, .. } | LayerSpec::Dense { outputs: 0, .. }
        ) {
            return Err(Error::invalid(format!("layer {l}: zero-width dense layer")));
        }
        outs.push(sig);
    }
    Ok(())
}

/// Softmax over axis 1 of a tensor shaped `[N, K, ...]`.
pub fn softmax_axis1(z: &Tensor) -> Result<Tensor> {
    if z.ndim() < 2 {
        return Err(Error::shape(format!(
            "softmax needs [N, K, ...], got {:?}",
            z.shape()
        )));
    }
    let (n, k) = (z.shape()[0], z.shape()[1]);
    let inner: usize = z.shape()[2..].iter().product();
    let mut out = z.clone();
    let d = out.data_mut();
    for b in 0..n {
        for i in 0..inner {
            let at = |c: usize| (b * k + c) * inner + i;
            let m = (0..k).map(|c| d[at(c)]).fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for c in 0..k {
                let e = (d[at(c)] - m).exp();
                d[at(c)] = e;
                s += e;
            }
            for c in 0..k {
                d[at(c)] /= s;
            }
        }
    }
    Ok(out)
}

fn softmax_backward(p: &Tensor, g: &Tensor) -> Result<Tensor> {
    let (n, k) = (p.shape()[0], p.shape()[1]);
    let inner: usize = p.shape()[2..].iter().product();
    let mut out = vec![0.0; p.len()];
    for b in 0..n {
        for i in 0..inner {
            let at = |c: usize| (b * k + c) * inner + i;
            let dot: f64 = (0..k).map(|c| p.data()[at(c)] * g.data()[at(c)]).sum();
            for c in 0..k {
                out[at(c)] = p.data()[at(c)] * (g.data()[at(c)] - dot);
            }
        }
    }
    Tensor::new(p.shape(), out)
}
