//! Layered networks with explicit forward tapes and reverse-mode gradients.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::kernels::{axpy, col2im_add, dot, im2col};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::{c, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Linear,
    Sigmoid,
    Softmax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense {
        inputs: usize,
        outputs: usize,
        activation: Activation,
    },
    /// Square kernel over `[channels, height, width]` items.
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        activation: Activation,
    },
    /// `relu(x + conv(relu(conv(x))))` with same-size padding.
    Residual { channels: usize, kernel: usize },
    GlobalAvgPool,
    Flatten,
}

impl LayerSpec {
    fn describe(&self) -> String {
        match self {
            LayerSpec::Dense { inputs, outputs, .. } => format!("dense {inputs}->{outputs}"),
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => format!("conv2d {in_channels}->{out_channels} k{kernel}"),
            LayerSpec::Residual { channels, kernel } => format!("residual {channels} k{kernel}"),
            LayerSpec::GlobalAvgPool => "global_avg_pool".into(),
            LayerSpec::Flatten => "flatten".into(),
        }
    }
}

/// Architecture plus initialization seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// Shape of one input item (without the batch axis).
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
    pub seed: u64,
}

impl NetworkSpec {
    /// Fully connected network: `hidden` layers with `hidden_activation`,
    /// then an `outputs`-wide head with `output_activation`.
    pub fn mlp(
        inputs: usize,
        hidden: &[usize],
        outputs: usize,
        hidden_activation: Activation,
        output_activation: Activation,
        seed: u64,
    ) -> Self {
        let mut layers = Vec::new();
        let mut prev = inputs;
        for &h in hidden {
            layers.push(LayerSpec::Dense {
                inputs: prev,
                outputs: h,
                activation: hidden_activation,
            });
            prev = h;
        }
        layers.push(LayerSpec::Dense {
            inputs: prev,
            outputs,
            activation: output_activation,
        });
        NetworkSpec {
            input_shape: vec![inputs],
            layers,
            seed,
        }
    }

    /// Conv stem, residual blocks, global average pooling and a softmax head.
    pub fn resnet(
        input_shape: [usize; 3],
        channels: usize,
        blocks: usize,
        kernel: usize,
        classes: usize,
        seed: u64,
    ) -> Self {
        let mut layers = vec![LayerSpec::Conv2d {
            in_channels: input_shape[0],
            out_channels: channels,
            kernel,
            stride: 1,
            padding: kernel / 2,
            activation: Activation::Relu,
        }];
        layers.extend((0..blocks).map(|_| LayerSpec::Residual { channels, kernel }));
        layers.push(LayerSpec::GlobalAvgPool);
        layers.push(LayerSpec::Dense {
            inputs: channels,
            outputs: classes,
            activation: Activation::Softmax,
        });
        NetworkSpec {
            input_shape: input_shape.to_vec(),
            layers,
            seed,
        }
    }

    /// Item shapes after every layer; fails on the first incompatible layer.
    pub fn output_shapes(&self) -> Result<Vec<Vec<usize>>> {
        let mut shape = self.input_shape.clone();
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let err = |msg: String| Error::Shape {
                layer: format!("layer {i} ({})", layer.describe()),
                msg,
            };
            shape = match *layer {
                LayerSpec::Dense { inputs, outputs, .. } => {
                    if shape != [inputs] {
                        return Err(err(format!("expects [{inputs}], got {shape:?}")));
                    }
                    vec![outputs]
                }
                LayerSpec::Conv2d {
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                    padding,
                    activation,
                } => {
                    if shape.len() != 3 || shape[0] != in_channels {
                        return Err(err(format!("expects [{in_channels}, H, W], got {shape:?}")));
                    }
                    if activation == Activation::Softmax {
                        return Err(err("softmax is only supported on dense layers".into()));
                    }
                    if kernel == 0 || stride == 0 {
                        return Err(err("kernel and stride must be positive".into()));
                    }
                    let (h, w) = (shape[1] + 2 * padding, shape[2] + 2 * padding);
                    if h < kernel || w < kernel {
                        return Err(err(format!("kernel {kernel} larger than padded input {shape:?}")));
                    }
                    vec![out_channels, (h - kernel) / stride + 1, (w - kernel) / stride + 1]
                }
                LayerSpec::Residual { channels, kernel } => {
                    if shape.len() != 3 || shape[0] != channels {
                        return Err(err(format!("expects [{channels}, H, W], got {shape:?}")));
                    }
                    if kernel % 2 == 0 {
                        return Err(err("residual kernel must be odd".into()));
                    }
                    shape
                }
                LayerSpec::GlobalAvgPool => {
                    if shape.len() != 3 {
                        return Err(err(format!("expects [C, H, W], got {shape:?}")));
                    }
                    vec![shape[0]]
                }
                LayerSpec::Flatten => vec![shape.iter().product()],
            };
            out.push(shape.clone());
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
struct Plan {
    spec: LayerSpec,
    in_shape: Vec<usize>,
    out_shape: Vec<usize>,
    offset: usize,
    len: usize,
}

fn param_count(spec: &LayerSpec) -> usize {
    match *spec {
        LayerSpec::Dense { inputs, outputs, .. } => inputs * outputs + outputs,
        LayerSpec::Conv2d {
            in_channels,
            out_channels,
            kernel,
            ..
        } => out_channels * in_channels * kernel * kernel + out_channels,
        LayerSpec::Residual { channels, kernel } => 2 * (channels * channels * kernel * kernel + channels),
        LayerSpec::GlobalAvgPool | LayerSpec::Flatten => 0,
    }
}

/// Values recorded by a forward pass, consumed by [`Network::backward`].
#[derive(Debug, Clone)]
pub struct Tape<T> {
    /// `acts[0]` is the input, `acts[i + 1]` the output of layer `i`.
    acts: Vec<Tensor<T>>,
    /// Pre-activation of dense/conv layers; inner activation of residual blocks.
    extra: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Tape<T> {
    pub fn output(&self) -> &Tensor<T> {
        self.acts.last().expect("tape has at least the input")
    }

    /// Pre-activation of the last layer (logits for a softmax head).
    pub fn logits(&self) -> Option<&Tensor<T>> {
        self.extra.last().and_then(|e| e.as_ref())
    }
}

/// Where backpropagation starts.
pub enum GradSeed<'a, T> {
    /// Gradient with respect to the network output.
    Output(&'a [T]),
    /// Gradient with respect to the last layer's pre-activation (fused
    /// sigmoid/BCE or softmax/CE).
    PreActivation(&'a [T]),
}

/// A network with all parameters in one flat vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    spec: NetworkSpec,
    params: Vec<T>,
}

/// Per-layer fan-in/fan-out and init flavour for each weight block.
fn weight_blocks(spec: &LayerSpec) -> Vec<(usize, usize, usize, bool)> {
    // (weight count, fan_in, fan_out, relu-follows)
    match *spec {
        LayerSpec::Dense { inputs, outputs, activation } => {
            vec![(inputs * outputs, inputs, outputs, activation == Activation::Relu)]
        }
        LayerSpec::Conv2d {
            in_channels,
            out_channels,
            kernel,
            activation,
            ..
        } => vec![(
            out_channels * in_channels * kernel * kernel,
            in_channels * kernel * kernel,
            out_channels * kernel * kernel,
            activation == Activation::Relu,
        )],
        LayerSpec::Residual { channels, kernel } => {
            let n = channels * channels * kernel * kernel;
            let fan = channels * kernel * kernel;
            vec![(n, fan, fan, true), (n, fan, fan, false)]
        }
        _ => vec![],
    }
}

impl<T: Scalar> Network<T> {
    /// Builds the network and draws its initial weights from `spec.seed`:
    /// Kaiming-uniform before a relu, Xavier-uniform otherwise, zero biases.
    pub fn new(spec: NetworkSpec) -> Result<Self> {
        spec.output_shapes()?;
        let mut r = rng::seeded(spec.seed);
        let mut params = Vec::new();
        for layer in &spec.layers {
            let blocks = weight_blocks(layer);
            let bias_len = match *layer {
                LayerSpec::Dense { outputs, .. } => outputs,
                LayerSpec::Conv2d { out_channels, .. } => out_channels,
                LayerSpec::Residual { channels, .. } => channels,
                _ => 0,
            };
            for (count, fan_in, fan_out, relu) in blocks {
                let bound = if relu {
                    (6.0 / fan_in as f64).sqrt()
                } else {
                    (6.0 / (fan_in + fan_out) as f64).sqrt()
                };
                params.extend((0..count).map(|_| T::from_f64_lossy(r.random_range(-bound..bound))));
                params.extend(std::iter::repeat_n(T::zero(), bias_len));
            }
        }
        Ok(Network { spec, params })
    }

    pub fn from_params(spec: NetworkSpec, params: Vec<T>) -> Result<Self> {
        spec.output_shapes()?;
        let expected: usize = spec.layers.iter().map(param_count).sum();
        if params.len() != expected {
            return Err(Error::invalid(format!(
                "network needs {expected} parameters, got {}",
                params.len()
            )));
        }
        Ok(Network { spec, params })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn output_len(&self) -> usize {
        self.plans().last().map(|p| p.out_shape.iter().product()).unwrap_or(0)
    }

    fn plans(&self) -> Vec<Plan> {
        let shapes = self.spec.output_shapes().expect("validated at construction");
        let mut offset = 0;
        let mut in_shape = self.spec.input_shape.clone();
        self.spec
            .layers
            .iter()
            .zip(shapes)
            .map(|(spec, out_shape)| {
                let len = param_count(spec);
                let p = Plan {
                    spec: spec.clone(),
                    in_shape: std::mem::replace(&mut in_shape, out_shape.clone()),
                    out_shape,
                    offset,
                    len,
                };
                offset += len;
                p
            })
            .collect()
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        if x.shape().len() < 1 || x.shape()[1..] != self.spec.input_shape[..] {
            let layer = self
                .spec
                .layers
                .first()
                .map(|l| format!("layer 0 ({})", l.describe()))
                .unwrap_or_else(|| "input".into());
            return Err(Error::Shape {
                layer,
                msg: format!(
                    "expects items of shape {:?}, got batch shape {:?}",
                    self.spec.input_shape,
                    x.shape()
                ),
            });
        }
        Ok(())
    }

    /// Inference.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = self.forward_tape(x)?;
        Ok(tape.acts.pop().expect("non-empty tape"))
    }

    /// Forward pass that records everything the backward pass needs.
    pub fn forward_tape(&self, x: &Tensor<T>) -> Result<Tape<T>> {
        self.check_input(x)?;
        let n = x.batch();
        let mut acts = vec![x.clone()];
        let mut extra = Vec::with_capacity(self.spec.layers.len());
        for plan in self.plans() {
            let p = &self.params[plan.offset..plan.offset + plan.len];
            let input = acts.last().expect("non-empty");
            let mut out_shape = vec![n];
            out_shape.extend_from_slice(&plan.out_shape);
            let (y, e) = match plan.spec {
                LayerSpec::Dense {
                    inputs,
                    outputs,
                    activation,
                } => {
                    let mut z = vec![T::zero(); n * outputs];
                    dense_forward(input.data(), p, n, inputs, outputs, &mut z);
                    let mut y = z.clone();
                    activate(&mut y, outputs, activation);
                    (y, Some(Tensor::from_vec(&out_shape, z)?))
                }
                LayerSpec::Conv2d {
                    kernel,
                    stride,
                    padding,
                    activation,
                    ..
                } => {
                    let geo = ConvGeom::new(&plan.in_shape, &plan.out_shape, kernel, stride, padding);
                    let z = geo.forward(input.data(), p, n);
                    let mut y = z.clone();
                    activate(&mut y, plan.out_shape.iter().product(), activation);
                    (y, Some(Tensor::from_vec(&out_shape, z)?))
                }
                LayerSpec::Residual { channels, kernel } => {
                    let geo = ConvGeom::new(&plan.in_shape, &plan.out_shape, kernel, 1, kernel / 2);
                    let half = channels * channels * kernel * kernel + channels;
                    let mut h = geo.forward(input.data(), &p[..half], n);
                    relu(&mut h);
                    let mut y = geo.forward(&h, &p[half..], n);
                    for (v, xv) in y.iter_mut().zip(input.data()) {
                        *v += *xv;
                    }
                    relu(&mut y);
                    (y, Some(Tensor::from_vec(&out_shape, h)?))
                }
                LayerSpec::GlobalAvgPool => {
                    let (ch, hw) = (plan.in_shape[0], plan.in_shape[1] * plan.in_shape[2]);
                    let scale = T::one() / c::<T>(hw as f64);
                    let y = input
                        .data()
                        .chunks_exact(hw)
                        .map(|plane| plane.iter().copied().sum::<T>() * scale)
                        .collect::<Vec<_>>();
                    debug_assert_eq!(y.len(), n * ch);
                    (y, None)
                }
                LayerSpec::Flatten => (input.data().to_vec(), None),
            };
            acts.push(Tensor::from_vec(&out_shape, y)?);
            extra.push(e);
        }
        Ok(Tape { acts, extra })
    }

    /// Accumulates (adds) parameter gradients into `grads`.
    pub fn backward(&self, tape: &Tape<T>, seed: GradSeed<'_, T>, grads: &mut [T]) -> Result<()> {
        assert_eq!(grads.len(), self.params.len(), "gradient buffer size");
        let n = tape.acts[0].batch();
        let plans = self.plans();
        let (mut g, mut seed_is_pre) = match seed {
            GradSeed::Output(g) => (g.to_vec(), false),
            GradSeed::PreActivation(g) => (g.to_vec(), true),
        };
        if g.len() != tape.output().data().len() {
            return Err(Error::invalid(format!(
                "output gradient has {} values, output has {}",
                g.len(),
                tape.output().data().len()
            )));
        }
        for (i, plan) in plans.iter().enumerate().rev() {
            let p = &self.params[plan.offset..plan.offset + plan.len];
            let gp = &mut grads[plan.offset..plan.offset + plan.len];
            let x = &tape.acts[i];
            let y = &tape.acts[i + 1];
            let need_input = i > 0;
            g = match plan.spec {
                LayerSpec::Dense {
                    inputs,
                    outputs,
                    activation,
                } => {
                    if !seed_is_pre {
                        activation_backward(&mut g, y.data(), outputs, activation);
                    }
                    dense_backward(x.data(), &g, p, gp, n, inputs, outputs, need_input)
                }
                LayerSpec::Conv2d {
                    kernel,
                    stride,
                    padding,
                    activation,
                    ..
                } => {
                    if !seed_is_pre {
                        activation_backward(&mut g, y.data(), 0, activation);
                    }
                    let geo = ConvGeom::new(&plan.in_shape, &plan.out_shape, kernel, stride, padding);
                    geo.backward(x.data(), &g, p, gp, n, need_input)
                }
                LayerSpec::Residual { channels, kernel } => {
                    // y = relu(x + conv2(h)),  h = relu(conv1(x))
                    let geo = ConvGeom::new(&plan.in_shape, &plan.out_shape, kernel, 1, kernel / 2);
                    let half = channels * channels * kernel * kernel + channels;
                    let h = tape.extra[i].as_ref().expect("residual tape").data();
                    relu_backward(&mut g, y.data());
                    let (g1, g2) = gp.split_at_mut(half);
                    let mut dh = geo.backward(h, &g, &p[half..], g2, n, true);
                    relu_backward(&mut dh, h);
                    let dx = geo.backward(x.data(), &dh, &p[..half], g1, n, need_input);
                    if need_input {
                        dx.iter().zip(&g).map(|(a, b)| *a + *b).collect()
                    } else {
                        Vec::new()
                    }
                }
                LayerSpec::GlobalAvgPool => {
                    let hw = plan.in_shape[1] * plan.in_shape[2];
                    let scale = T::one() / c::<T>(hw as f64);
                    g.iter()
                        .flat_map(|&v| std::iter::repeat_n(v * scale, hw))
                        .collect()
                }
                LayerSpec::Flatten => g,
            };
            seed_is_pre = false;
        }
        Ok(())
    }
}

fn relu<T: Scalar>(v: &mut [T]) {
    for x in v {
        if *x < T::zero() {
            *x = T::zero();
        }
    }
}

fn relu_backward<T: Scalar>(g: &mut [T], y: &[T]) {
    for (gv, yv) in g.iter_mut().zip(y) {
        if *yv <= T::zero() {
            *gv = T::zero();
        }
    }
}

pub(crate) fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// Row-wise softmax with max subtraction.
pub(crate) fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let m = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = (*v - m).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

fn activate<T: Scalar>(v: &mut [T], width: usize, act: Activation) {
    match act {
        Activation::Linear => {}
        Activation::Relu => relu(v),
        Activation::Sigmoid => v.iter_mut().for_each(|x| *x = sigmoid(*x)),
        Activation::Softmax => v.chunks_exact_mut(width).for_each(softmax_in_place),
    }
}

fn activation_backward<T: Scalar>(g: &mut [T], y: &[T], width: usize, act: Activation) {
    match act {
        Activation::Linear => {}
        Activation::Relu => relu_backward(g, y),
        Activation::Sigmoid => {
            for (gv, yv) in g.iter_mut().zip(y) {
                *gv *= *yv * (T::one() - *yv);
            }
        }
        Activation::Softmax => {
            for (grow, yrow) in g.chunks_exact_mut(width).zip(y.chunks_exact(width)) {
                let s = dot(grow, yrow);
                for (gv, yv) in grow.iter_mut().zip(yrow) {
                    *gv = *yv * (*gv - s);
                }
            }
        }
    }
}

/// Rows processed together so the output block stays cache resident.
const ROW_BLOCK: usize = 32;

/// `z = x·W + b` with `W` stored `[inputs][outputs]`.
fn dense_forward<T: Scalar>(x: &[T], p: &[T], n: usize, inputs: usize, outputs: usize, z: &mut [T]) {
    let (w, b) = p.split_at(inputs * outputs);
    for row in z.chunks_exact_mut(outputs) {
        row.copy_from_slice(b);
    }
    for r0 in (0..n).step_by(ROW_BLOCK) {
        let r1 = (r0 + ROW_BLOCK).min(n);
        for k in 0..inputs {
            let wrow = &w[k * outputs..(k + 1) * outputs];
            for r in r0..r1 {
                let xv = x[r * inputs + k];
                if xv != T::zero() {
                    axpy(&mut z[r * outputs..(r + 1) * outputs], xv, wrow);
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn dense_backward<T: Scalar>(
    x: &[T],
    dz: &[T],
    p: &[T],
    gp: &mut [T],
    n: usize,
    inputs: usize,
    outputs: usize,
    need_input: bool,
) -> Vec<T> {
    let (w, _) = p.split_at(inputs * outputs);
    let (gw, gb) = gp.split_at_mut(inputs * outputs);
    for r in 0..n {
        axpy(gb, T::one(), &dz[r * outputs..(r + 1) * outputs]);
    }
    for r0 in (0..n).step_by(ROW_BLOCK) {
        let r1 = (r0 + ROW_BLOCK).min(n);
        for k in 0..inputs {
            let gwrow = &mut gw[k * outputs..(k + 1) * outputs];
            for r in r0..r1 {
                let xv = x[r * inputs + k];
                if xv != T::zero() {
                    axpy(gwrow, xv, &dz[r * outputs..(r + 1) * outputs]);
                }
            }
        }
    }
    if !need_input {
        return Vec::new();
    }
    let mut dx = vec![T::zero(); n * inputs];
    for r0 in (0..n).step_by(ROW_BLOCK) {
        let r1 = (r0 + ROW_BLOCK).min(n);
        for k in 0..inputs {
            let wrow = &w[k * outputs..(k + 1) * outputs];
            for r in r0..r1 {
                dx[r * inputs + k] = dot(&dz[r * outputs..(r + 1) * outputs], wrow);
            }
        }
    }
    dx
}

/// Geometry of one convolution over `[C, H, W]` items.
struct ConvGeom {
    c: usize,
    h: usize,
    w: usize,
    f: usize,
    ho: usize,
    wo: usize,
    k: usize,
    stride: usize,
    pad: usize,
}

impl ConvGeom {
    fn new(in_shape: &[usize], out_shape: &[usize], k: usize, stride: usize, pad: usize) -> Self {
        ConvGeom {
            c: in_shape[0],
            h: in_shape[1],
            w: in_shape[2],
            f: out_shape[0],
            ho: out_shape[1],
            wo: out_shape[2],
            k,
            stride,
            pad,
        }
    }

    fn cols_rows(&self) -> usize {
        self.c * self.k * self.k
    }

    fn forward<T: Scalar>(&self, x: &[T], p: &[T], n: usize) -> Vec<T> {
        let q = self.cols_rows();
        let pix = self.ho * self.wo;
        let (w, b) = p.split_at(self.f * q);
        let in_len = self.c * self.h * self.w;
        let mut cols = vec![T::zero(); q * pix];
        let mut out = vec![T::zero(); n * self.f * pix];
        for i in 0..n {
            im2col(
                &x[i * in_len..(i + 1) * in_len],
                [self.c, self.h, self.w],
                self.k,
                self.stride,
                self.pad,
                [self.ho, self.wo],
                &mut cols,
            );
            let o = &mut out[i * self.f * pix..(i + 1) * self.f * pix];
            for f in 0..self.f {
                let orow = &mut o[f * pix..(f + 1) * pix];
                orow.iter_mut().for_each(|v| *v = b[f]);
                for j in 0..q {
                    let wv = w[f * q + j];
                    axpy(orow, wv, &cols[j * pix..(j + 1) * pix]);
                }
            }
        }
        out
    }

    fn backward<T: Scalar>(&self, x: &[T], dz: &[T], p: &[T], gp: &mut [T], n: usize, need_input: bool) -> Vec<T> {
        let q = self.cols_rows();
        let pix = self.ho * self.wo;
        let (w, _) = p.split_at(self.f * q);
        let (gw, gb) = gp.split_at_mut(self.f * q);
        let in_len = self.c * self.h * self.w;
        let mut cols = vec![T::zero(); q * pix];
        let mut dcols = vec![T::zero(); q * pix];
        let mut dx = if need_input { vec![T::zero(); n * in_len] } else { Vec::new() };
        for i in 0..n {
            im2col(
                &x[i * in_len..(i + 1) * in_len],
                [self.c, self.h, self.w],
                self.k,
                self.stride,
                self.pad,
                [self.ho, self.wo],
                &mut cols,
            );
            let d = &dz[i * self.f * pix..(i + 1) * self.f * pix];
            for f in 0..self.f {
                let drow = &d[f * pix..(f + 1) * pix];
                gb[f] += drow.iter().copied().sum::<T>();
                for j in 0..q {
                    gw[f * q + j] += dot(drow, &cols[j * pix..(j + 1) * pix]);
                }
            }
            if need_input {
                dcols.iter_mut().for_each(|v| *v = T::zero());
                for f in 0..self.f {
                    let drow = &d[f * pix..(f + 1) * pix];
                    for j in 0..q {
                        axpy(&mut dcols[j * pix..(j + 1) * pix], w[f * q + j], drow);
                    }
                }
                col2im_add(
                    &dcols,
                    [self.c, self.h, self.w],
                    self.k,
                    self.stride,
                    self.pad,
                    [self.ho, self.wo],
                    &mut dx[i * in_len..(i + 1) * in_len],
                );
            }
        }
        dx
    }
}
