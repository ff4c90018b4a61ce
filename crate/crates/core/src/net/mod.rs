//! The six-layer OCT classifier: four convolutions and two dense layers,
//! interleaved with 3×3/2 max pooling and dropout, with a sigmoid head.
//!
//! | # | layer          | input        | output       | params  |
//! |---|----------------|--------------|--------------|---------|
//! | 1 | conv 5×5, s2   | 224×224×3    | 110×110×64   | 4 864   |
//! | 2 | max pool       | 110×110×64   | 54×54×64     | 0       |
//! | 3 | conv 1×1       | 54×54×64     | 54×54×32     | 2 080   |
//! | 4 | max pool       | 54×54×32     | 26×26×32     | 0       |
//! | 5 | conv 1×1       | 26×26×32     | 26×26×128    | 4 224   |
//! | 6 | max pool       | 26×26×128    | 12×12×128    | 0       |
//! | 7 | conv 3×3, same | 12×12×128    | 12×12×128    | 147 584 |
//! | 8 | max pool       | 12×12×128    | 5×5×128      | 0       |
//! | 9 | dropout        | 5×5×128      | 5×5×128      | 0       |
//! |10 | max pool       | 5×5×128      | 2×2×128      | 0       |
//! |11 | flatten        | 2×2×128      | 512          | 0       |
//! |12 | dense          | 512          | 512          | 262 656 |
//! |13 | dropout        | 512          | 512          | 0       |
//! |14 | dense          | 512          | 4            | 2 052   |
//!
//! Convolutions and the first dense layer are followed by ReLU.

pub mod weights;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::class::{argmax, Class, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::ops::{
    self, conv2d, conv2d_backward, dense, dense_grad, dropout_scale, maxpool2d, maxpool2d_grad, relu_backward,
    sigmoid, splitmix64, ArgmaxMap, ConvSpec, Mode, PoolSpec,
};
use crate::tensor::{Element, Tensor};

pub const INPUT_SHAPE: [usize; 3] = [224, 224, 3];
pub const TOTAL_PARAMS: usize = 423_460;
/// Index of the last convolution, whose activation feeds Grad-CAM.
pub const LAST_CONV: usize = 6;
/// Probabilities are clamped to `[EPS, 1 - EPS]` before taking logs.
pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Per-class binary cross-entropy on the sigmoid outputs.
    #[default]
    BceSigmoid,
    /// Softmax over the logits with categorical cross-entropy.
    SoftmaxCe,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T = f32> {
    /// Convolution followed by ReLU.
    Conv {
        spec: ConvSpec,
        weights: Tensor<T>,
        bias: Tensor<T>,
    },
    MaxPool(PoolSpec),
    Dropout {
        rate: f64,
    },
    Flatten,
    Dense {
        weights: Tensor<T>,
        bias: Tensor<T>,
        relu: bool,
    },
}

impl<T: Element> Layer<T> {
    pub fn name(&self) -> String {
        match self {
            Layer::Conv { spec, .. } => format!("conv{}x{}-{}", spec.kernel_h, spec.kernel_w, spec.out_channels),
            Layer::MaxPool(_) => "max_pool".into(),
            Layer::Dropout { .. } => "dropout".into(),
            Layer::Flatten => "flatten".into(),
            Layer::Dense { weights, .. } => format!("dense-{}", weights.shape()[1]),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Layer::Conv { weights, bias, .. } | Layer::Dense { weights, bias, .. } => weights.len() + bias.len(),
            _ => 0,
        }
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        Ok(match self {
            Layer::Conv { spec, .. } => {
                let (oh, ow) = spec.output_hw(input[0], input[1])?;
                vec![oh, ow, spec.out_channels]
            }
            Layer::MaxPool(p) => {
                let (oh, ow) = p.output_hw(input[0], input[1])?;
                vec![oh, ow, input[2]]
            }
            Layer::Dropout { .. } => input.to_vec(),
            Layer::Flatten => vec![input.iter().product()],
            Layer::Dense { weights, .. } => vec![weights.shape()[1]],
        })
    }
}

/// Per-layer shape and parameter summary, one entry per layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSummary {
    pub name: String,
    pub input: Vec<usize>,
    pub output: Vec<usize>,
    pub params: usize,
}

#[derive(Debug, Clone)]
enum Aux<T> {
    None,
    Pool(ArgmaxMap),
    Dropout(Option<Vec<T>>),
}

/// Intermediates of one forward pass, retained for backprop and Grad-CAM.
#[derive(Debug, Clone)]
pub struct ForwardTrace<T = f32> {
    /// First layer that was run; `input` feeds this layer.
    pub start: usize,
    pub input: Tensor<T>,
    /// Output of each layer (post-ReLU for conv and the first dense layer).
    pub outputs: Vec<Tensor<T>>,
    aux: Vec<Aux<T>>,
}

impl<T: Element> ForwardTrace<T> {
    pub fn logits(&self) -> &Tensor<T> {
        self.outputs.last().expect("non-empty trace")
    }

    /// The 12×12×128 activation of the last convolution.
    pub fn last_conv_activation(&self) -> &Tensor<T> {
        &self.outputs[LAST_CONV]
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct Forward<T = f32> {
    pub probs: Tensor<T>,
    pub trace: ForwardTrace<T>,
}

/// The fixed layer stack. `T` is `f32` for storage and inference; `f64`
/// instances are used for gradient checking.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T = f32> {
    layers: Vec<Layer<T>>,
}

pub type OctNet = Network<f32>;

/// Dropout rates used when none are configured.
pub const DEFAULT_DROPOUT: (f64, f64) = (0.25, 0.5);

impl<T: Element> Network<T> {
    /// Fresh network with uniform ±sqrt(6/fan_in) weights and zero biases.
    pub fn build(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform = |shape: &[usize], fan_in: usize| {
            let limit = (6.0 / fan_in as f64).sqrt();
            Tensor::from_fn(shape, |_| T::from_f64(rng.gen_range(-limit..limit)))
        };
        let mut conv = |spec: ConvSpec| {
            let fan_in = spec.kernel_h * spec.kernel_w * spec.in_channels;
            Layer::Conv {
                weights: uniform(&spec.weight_shape(), fan_in),
                bias: Tensor::zeros(&[spec.out_channels]),
                spec,
            }
        };
        let conv1 = conv(ConvSpec::valid(5, 3, 64, 2));
        let conv2 = conv(ConvSpec::valid(1, 64, 32, 1));
        let conv3 = conv(ConvSpec::valid(1, 32, 128, 1));
        let conv4 = conv(ConvSpec::same(3, 128, 128));
        let mut dense_layer = |n: usize, m: usize, relu: bool| Layer::Dense {
            weights: uniform(&[n, m], n),
            bias: Tensor::zeros(&[m]),
            relu,
        };
        let dense1 = dense_layer(512, 512, true);
        let dense2 = dense_layer(512, NUM_CLASSES, false);
        let pool = || Layer::MaxPool(PoolSpec::default());
        let (r1, r2) = DEFAULT_DROPOUT;
        Self {
            layers: vec![
                conv1,
                pool(),
                conv2,
                pool(),
                conv3,
                pool(),
                conv4,
                pool(),
                Layer::Dropout { rate: r1 },
                pool(),
                Layer::Flatten,
                dense1,
                Layer::Dropout { rate: r2 },
                dense2,
            ],
        }
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn set_dropout_rates(&mut self, conv_rate: f64, dense_rate: f64) -> Result<()> {
        for r in [conv_rate, dense_rate] {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::Parameter(format!("dropout rate {r} outside [0, 1)")));
            }
        }
        let mut rates = [conv_rate, dense_rate].into_iter();
        for layer in &mut self.layers {
            if let Layer::Dropout { rate } = layer {
                *rate = rates.next().unwrap_or(dense_rate);
            }
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Shape propagation from the 224×224×3 input without running the layers.
    pub fn summary(&self) -> Result<Vec<LayerSummary>> {
        let mut shape = INPUT_SHAPE.to_vec();
        let mut rows = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let out = layer.output_shape(&shape)?;
            rows.push(LayerSummary {
                name: layer.name(),
                input: shape,
                output: out.clone(),
                params: layer.param_count(),
            });
            shape = out;
        }
        Ok(rows)
    }

    /// Parameter tensors in layer order, weights before bias.
    pub fn params(&self) -> Vec<&Tensor<T>> {
        let mut out = Vec::new();
        for layer in &self.layers {
            if let Layer::Conv { weights, bias, .. } | Layer::Dense { weights, bias, .. } = layer {
                out.push(weights);
                out.push(bias);
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            if let Layer::Conv { weights, bias, .. } | Layer::Dense { weights, bias, .. } = layer {
                out.push(weights);
                out.push(bias);
            }
        }
        out
    }

    pub fn flat_params(&self) -> Vec<T> {
        self.params().iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    pub fn set_flat_params(&mut self, flat: &[T]) -> Result<()> {
        let total = self.param_count();
        if flat.len() != total {
            return Err(Error::dim("set_flat_params", "parameter count", total, flat.len()));
        }
        let mut offset = 0;
        for t in self.params_mut() {
            let n = t.len();
            t.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    pub fn cast<U: Element>(&self) -> Network<U> {
        let layers = self
            .layers
            .iter()
            .map(|l| match l {
                Layer::Conv { spec, weights, bias } => Layer::Conv {
                    spec: *spec,
                    weights: weights.cast(),
                    bias: bias.cast(),
                },
                Layer::MaxPool(p) => Layer::MaxPool(*p),
                Layer::Dropout { rate } => Layer::Dropout { rate: *rate },
                Layer::Flatten => Layer::Flatten,
                Layer::Dense { weights, bias, relu } => Layer::Dense {
                    weights: weights.cast(),
                    bias: bias.cast(),
                    relu: *relu,
                },
            })
            .collect();
        Network { layers }
    }

    /// Eval-mode forward pass with no dropout randomness.
    pub fn forward(&self, image: &Tensor<T>, mode: Mode) -> Result<Forward<T>> {
        self.forward_seeded(image, mode, 0)
    }

    /// Forward pass; `seed` drives the dropout masks in train mode.
    pub fn forward_seeded(&self, image: &Tensor<T>, mode: Mode, seed: u64) -> Result<Forward<T>> {
        if image.shape() != INPUT_SHAPE {
            let s = image.shape();
            let (axis, i) = match s.len() {
                3 => {
                    let i = (0..3).find(|&i| s[i] != INPUT_SHAPE[i]).unwrap_or(0);
                    (["height", "width", "channels"][i], i)
                }
                _ => return Err(Error::dim("forward", "input rank", 3, s.len())),
            };
            return Err(Error::dim("forward", axis, INPUT_SHAPE[i], s[i]));
        }
        let trace = self.run_from(0, image.clone(), mode, seed)?;
        let probs = trace.logits().map(sigmoid);
        Ok(Forward { probs, trace })
    }

    /// Runs layers `start..` on `activation`, the input to layer `start`.
    pub fn run_from(&self, start: usize, activation: Tensor<T>, mode: Mode, seed: u64) -> Result<ForwardTrace<T>> {
        if start >= self.layers.len() {
            return Err(Error::Parameter(format!("no layer {start}")));
        }
        let mut outputs = Vec::with_capacity(self.layers.len());
        let mut aux = Vec::with_capacity(self.layers.len());
        let input = activation;
        for (i, layer) in self.layers.iter().enumerate() {
            if i < start {
                // Layers before `start` are skipped; keep indices aligned.
                outputs.push(Tensor::zeros(&[1]));
                aux.push(Aux::None);
                continue;
            }
            let x = if i == start { &input } else { &outputs[i - 1] };
            let (y, a) = match layer {
                Layer::Conv { spec, weights, bias } => (conv2d(x, weights, bias, spec)?.map(ops::relu), Aux::None),
                Layer::MaxPool(p) => {
                    let (y, map) = maxpool2d(x, p)?;
                    (y, Aux::Pool(map))
                }
                Layer::Dropout { rate } => {
                    if mode == Mode::Train && *rate > 0.0 {
                        let scale = dropout_scale::<T>(x.len(), *rate, layer_seed(seed, i))?;
                        let mut y = x.clone();
                        for (v, &s) in y.data_mut().iter_mut().zip(&scale) {
                            *v = *v * s;
                        }
                        (y, Aux::Dropout(Some(scale)))
                    } else {
                        (x.clone(), Aux::Dropout(None))
                    }
                }
                Layer::Flatten => (x.clone().reshape(&[x.len()])?, Aux::None),
                Layer::Dense { weights, bias, relu } => {
                    let y = dense(x, weights, bias)?;
                    (if *relu { y.map(ops::relu) } else { y }, Aux::None)
                }
            };
            outputs.push(y);
            aux.push(a);
        }
        Ok(ForwardTrace {
            start,
            input,
            outputs,
            aux,
        })
    }

    /// Backpropagates `grad_logits` from the last layer down to layer `stop`.
    ///
    /// Returns parameter gradients (same order as [`Network::params`], zero
    /// for layers below `stop`) and the gradient with respect to the input of
    /// layer `stop`. The input gradient is `None` when `stop == 0`.
    pub fn backward(
        &self,
        trace: &ForwardTrace<T>,
        grad_logits: &Tensor<T>,
        stop: usize,
    ) -> Result<(Vec<Tensor<T>>, Option<Tensor<T>>)> {
        if stop < trace.start {
            return Err(Error::Parameter(format!(
                "cannot backpropagate to layer {stop}; trace starts at {}",
                trace.start
            )));
        }
        let mut grads: Vec<Option<(Tensor<T>, Tensor<T>)>> = vec![None; self.layers.len()];
        let mut g = grad_logits.clone();
        for i in (stop..self.layers.len()).rev() {
            let x = if i == trace.start { &trace.input } else { &trace.outputs[i - 1] };
            let y = &trace.outputs[i];
            g = match (&self.layers[i], &trace.aux[i]) {
                (Layer::Conv { spec, weights, .. }, _) => {
                    let gated = relu_backward(y, &g);
                    let cg = conv2d_backward(x, weights, spec, &gated, i > 0)?;
                    grads[i] = Some((cg.weights, cg.bias));
                    match cg.input {
                        Some(gi) => gi,
                        None => break,
                    }
                }
                (Layer::MaxPool(_), Aux::Pool(map)) => maxpool2d_grad(map, &g, x.shape())?,
                (Layer::Dropout { .. }, Aux::Dropout(mask)) => match mask {
                    Some(scale) => {
                        let mut gi = g;
                        for (v, &s) in gi.data_mut().iter_mut().zip(scale) {
                            *v = *v * s;
                        }
                        gi
                    }
                    None => g,
                },
                (Layer::Flatten, _) => g.reshape(x.shape())?,
                (Layer::Dense { weights, relu, .. }, _) => {
                    let gated = if *relu { relu_backward(y, &g) } else { g };
                    let (gx, gw, gb) = dense_grad(x, weights, &gated)?;
                    grads[i] = Some((gw, gb));
                    gx
                }
                _ => return Err(Error::Numeric(format!("trace does not match layer {i}"))),
            };
        }
        let mut params = Vec::new();
        for (layer, grad) in self.layers.iter().zip(grads) {
            if let Layer::Conv { weights, bias, .. } | Layer::Dense { weights, bias, .. } = layer {
                match grad {
                    Some((gw, gb)) => {
                        params.push(gw);
                        params.push(gb);
                    }
                    None => {
                        params.push(Tensor::zeros(weights.shape()));
                        params.push(Tensor::zeros(bias.shape()));
                    }
                }
            }
        }
        Ok((params, if stop > 0 { Some(g) } else { None }))
    }
}

fn layer_seed(seed: u64, layer: usize) -> u64 {
    splitmix64(seed ^ (layer as u64).wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// Loss value and its gradient with respect to the logits.
pub fn loss_and_logit_grad<T: Element>(logits: &Tensor<T>, target: &[f32], kind: LossKind) -> (f64, Vec<f64>) {
    let z: Vec<f64> = logits.data().iter().map(|v| v.as_f64()).collect();
    let y: Vec<f64> = target.iter().map(|&v| v as f64).collect();
    match kind {
        LossKind::BceSigmoid => {
            let n = z.len() as f64;
            let mut loss = 0.0;
            let mut grad = vec![0.0; z.len()];
            for i in 0..z.len() {
                let p_raw = sigmoid(z[i]);
                let p = p_raw.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
                loss -= y[i] * p.ln() + (1.0 - y[i]) * (1.0 - p).ln();
                // The clamp is flat outside its range.
                if p_raw == p {
                    grad[i] = (p - y[i]) / n;
                }
            }
            (loss / n, grad)
        }
        LossKind::SoftmaxCe => {
            let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
            let s: f64 = exps.iter().sum();
            let log_s = s.ln();
            let mut loss = 0.0;
            let mut grad = vec![0.0; z.len()];
            for i in 0..z.len() {
                let logp = z[i] - m - log_s;
                loss -= y[i] * logp;
                grad[i] = exps[i] / s * y.iter().sum::<f64>() - y[i];
            }
            (loss, grad)
        }
    }
}

fn check_one_hot(row: &[f32]) -> Result<()> {
    let ones = row.iter().filter(|&&v| v == 1.0).count();
    let zeros = row.iter().filter(|&&v| v == 0.0).count();
    if row.len() != NUM_CLASSES || ones != 1 || zeros != NUM_CLASSES - 1 {
        return Err(Error::Parameter(format!("label row {row:?} is not one-hot over 4 classes")));
    }
    Ok(())
}

/// Loss, gradients and argmax predictions for one batch.
#[derive(Debug, Clone)]
pub struct BatchGrad {
    pub loss: f64,
    pub grads: Vec<Tensor<f64>>,
    pub predicted: Vec<usize>,
}

/// Mean loss over a batch and its gradient for every parameter tensor,
/// accumulated in `f64`.
///
/// `images` is a sequence of 224×224×3 tensors and `one_hot` a B×4 tensor.
/// In train mode, sample `i` uses dropout seed `seed + i`.
pub fn loss_and_grad<T: Element>(
    net: &Network<T>,
    images: &[Tensor<T>],
    one_hot: &Tensor<f32>,
    kind: LossKind,
    mode: Mode,
    seed: u64,
) -> Result<(f64, Vec<Tensor<f64>>)> {
    let out = batch_grad(net, images, one_hot, kind, mode, seed)?;
    Ok((out.loss, out.grads))
}

pub fn batch_grad<T: Element>(
    net: &Network<T>,
    images: &[Tensor<T>],
    one_hot: &Tensor<f32>,
    kind: LossKind,
    mode: Mode,
    seed: u64,
) -> Result<BatchGrad> {
    let b = images.len();
    if b == 0 {
        return Err(Error::Parameter("empty batch".into()));
    }
    if one_hot.shape() != [b, NUM_CLASSES] {
        return Err(Error::dim("loss_and_grad", "label rows", b, one_hot.shape()[0]));
    }
    for row in one_hot.data().chunks(NUM_CLASSES) {
        check_one_hot(row)?;
    }
    let mut total = 0.0;
    let mut predicted = Vec::with_capacity(b);
    let mut acc: Vec<Tensor<f64>> = net.params().iter().map(|p| Tensor::zeros(p.shape())).collect();
    for (i, image) in images.iter().enumerate() {
        let fwd = net.forward_seeded(image, mode, seed.wrapping_add(i as u64))?;
        predicted.push(argmax(fwd.trace.logits().data()));
        let target = &one_hot.data()[i * NUM_CLASSES..(i + 1) * NUM_CLASSES];
        let (loss, gz) = loss_and_logit_grad(fwd.trace.logits(), target, kind);
        total += loss;
        let gz = Tensor::new(&[NUM_CLASSES], gz.iter().map(|&v| T::from_f64(v / b as f64)).collect())?;
        let (grads, _) = net.backward(&fwd.trace, &gz, 0)?;
        for (a, g) in acc.iter_mut().zip(&grads) {
            for (av, &gv) in a.data_mut().iter_mut().zip(g.data()) {
                *av += gv.as_f64();
            }
        }
    }
    Ok(BatchGrad {
        loss: total / b as f64,
        grads: acc,
        predicted,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: Class,
    pub probs: [f32; NUM_CLASSES],
}

impl OctNet {
    pub fn predict(&self, image: &Tensor<f32>) -> Result<Prediction> {
        let fwd = self.forward(image, Mode::Eval)?;
        let mut probs = [0.0; NUM_CLASSES];
        probs.copy_from_slice(fwd.probs.data());
        Ok(Prediction {
            label: label_from_probs(&probs),
            probs,
        })
    }
}

pub fn label_from_probs(probs: &[f32]) -> Class {
    Class::from_index(argmax(probs)).expect("four outputs")
}
