use std::borrow::Cow;

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Geometry of a 2-D convolution over an H×W×C input with a
/// kh×kw×C_in×C_out kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvSpec {
    /// Square kernel with valid padding.
    pub fn valid(kernel: usize, in_channels: usize, out_channels: usize, stride: usize) -> Self {
        Self {
            kernel_h: kernel,
            kernel_w: kernel,
            in_channels,
            out_channels,
            stride,
            padding: 0,
        }
    }

    /// Square odd kernel, stride 1, padding (k-1)/2.
    pub fn same(kernel: usize, in_channels: usize, out_channels: usize) -> Self {
        Self {
            padding: (kernel - 1) / 2,
            ..Self::valid(kernel, in_channels, out_channels, 1)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel_h == 0 || self.kernel_w == 0 {
            return Err(Error::Parameter("convolution kernel must be at least 1x1".into()));
        }
        if self.stride == 0 {
            return Err(Error::Parameter("convolution stride must be at least 1".into()));
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::Parameter("convolution channel counts must be positive".into()));
        }
        Ok(())
    }

    pub fn weight_shape(&self) -> [usize; 4] {
        [self.kernel_h, self.kernel_w, self.in_channels, self.out_channels]
    }

    pub fn param_count(&self) -> usize {
        self.kernel_h * self.kernel_w * self.in_channels * self.out_channels + self.out_channels
    }

    /// Output spatial extent `floor((in + 2p - k) / s) + 1`.
    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let ph = h + 2 * self.padding;
        let pw = w + 2 * self.padding;
        if ph < self.kernel_h {
            return Err(Error::dim("conv2d", "height", self.kernel_h, ph));
        }
        if pw < self.kernel_w {
            return Err(Error::dim("conv2d", "width", self.kernel_w, pw));
        }
        Ok((
            (ph - self.kernel_h) / self.stride + 1,
            (pw - self.kernel_w) / self.stride + 1,
        ))
    }

    fn is_pointwise(&self) -> bool {
        self.kernel_h == 1 && self.kernel_w == 1 && self.stride == 1 && self.padding == 0
    }
}

/// Gradients of `sum(upstream ⊙ conv2d(input, weights, bias))`.
#[derive(Debug, Clone)]
pub struct ConvGrads<T> {
    pub input: Option<Tensor<T>>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

fn check_args<T: Element>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    spec: &ConvSpec,
) -> Result<(usize, usize, usize, usize, usize)> {
    spec.validate()?;
    let (h, w, c) = input.dims3()?;
    if c != spec.in_channels {
        return Err(Error::dim("conv2d", "input channels", spec.in_channels, c));
    }
    let ws = spec.weight_shape();
    if weights.shape() != ws {
        let (axis, i) = weights
            .shape()
            .iter()
            .zip(ws.iter())
            .position(|(a, b)| a != b)
            .map(|i| (["kernel height", "kernel width", "kernel in-channels", "kernel out-channels"][i], i))
            .unwrap_or(("kernel rank", 0));
        let actual = if axis == "kernel rank" {
            weights.shape().len()
        } else {
            weights.shape()[i]
        };
        let expected = if axis == "kernel rank" { 4 } else { ws[i] };
        return Err(Error::dim("conv2d", axis, expected, actual));
    }
    let (oh, ow) = spec.output_hw(h, w)?;
    Ok((h, w, c, oh, ow))
}

/// Unfolds receptive fields into a (oh·ow)×(kh·kw·c) matrix, column order
/// (ky, kx, channel) to match the kernel layout.
fn im2col<'a, T: Element>(
    input: &'a Tensor<T>,
    spec: &ConvSpec,
    (h, w, c, oh, ow): (usize, usize, usize, usize, usize),
) -> Cow<'a, [T]> {
    if spec.is_pointwise() {
        return Cow::Borrowed(input.data());
    }
    let k = spec.kernel_h * spec.kernel_w * c;
    let src = input.data();
    let mut cols = vec![T::zero(); oh * ow * k];
    let pad = spec.padding as isize;
    for oy in 0..oh {
        for ox in 0..ow {
            let row = &mut cols[(oy * ow + ox) * k..(oy * ow + ox + 1) * k];
            for ky in 0..spec.kernel_h {
                let iy = (oy * spec.stride + ky) as isize - pad;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                for kx in 0..spec.kernel_w {
                    let ix = (ox * spec.stride + kx) as isize - pad;
                    if ix < 0 || ix >= w as isize {
                        continue;
                    }
                    let s = (iy as usize * w + ix as usize) * c;
                    let d = (ky * spec.kernel_w + kx) * c;
                    row[d..d + c].copy_from_slice(&src[s..s + c]);
                }
            }
        }
    }
    Cow::Owned(cols)
}

fn col2im<T: Element>(
    cols: &[T],
    spec: &ConvSpec,
    (h, w, c, oh, ow): (usize, usize, usize, usize, usize),
) -> Vec<T> {
    let k = spec.kernel_h * spec.kernel_w * c;
    let mut out = vec![T::zero(); h * w * c];
    let pad = spec.padding as isize;
    for oy in 0..oh {
        for ox in 0..ow {
            let row = &cols[(oy * ow + ox) * k..(oy * ow + ox + 1) * k];
            for ky in 0..spec.kernel_h {
                let iy = (oy * spec.stride + ky) as isize - pad;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                for kx in 0..spec.kernel_w {
                    let ix = (ox * spec.stride + kx) as isize - pad;
                    if ix < 0 || ix >= w as isize {
                        continue;
                    }
                    let s = (iy as usize * w + ix as usize) * c;
                    let d = (ky * spec.kernel_w + kx) * c;
                    for (o, &g) in out[s..s + c].iter_mut().zip(&row[d..d + c]) {
                        *o += g;
                    }
                }
            }
        }
    }
    out
}

/// 2-D convolution of an H×W×C input.
pub fn conv2d<T: Element>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
    spec: &ConvSpec,
) -> Result<Tensor<T>> {
    let dims = check_args(input, weights, spec)?;
    if bias.len() != spec.out_channels {
        return Err(Error::dim("conv2d", "bias", spec.out_channels, bias.len()));
    }
    let (_, _, c, oh, ow) = dims;
    let cols = im2col(input, spec, dims);
    let (p, k, f) = (oh * ow, spec.kernel_h * spec.kernel_w * c, spec.out_channels);
    let mut out = Vec::with_capacity(p * f);
    for _ in 0..p {
        out.extend_from_slice(bias.data());
    }
    T::gemm(p, k, f, &cols, false, weights.data(), false, &mut out, true);
    Tensor::new(&[oh, ow, f], out)
}

/// Backward pass of [`conv2d`]. Set `need_input` to false for a first layer
/// whose input gradient is never consumed.
pub fn conv2d_backward<T: Element>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    spec: &ConvSpec,
    upstream: &Tensor<T>,
    need_input: bool,
) -> Result<ConvGrads<T>> {
    let dims = check_args(input, weights, spec)?;
    let (h, w, c, oh, ow) = dims;
    let f = spec.out_channels;
    if upstream.shape() != [oh, ow, f] {
        let (axis, exp, act) = match upstream.shape() {
            &[a, _, _] if a != oh => ("upstream height", oh, a),
            &[_, b, _] if b != ow => ("upstream width", ow, b),
            &[_, _, d] => ("upstream channels", f, d),
            s => ("upstream rank", 3, s.len()),
        };
        return Err(Error::dim("conv2d_grad", axis, exp, act));
    }
    let (p, k) = (oh * ow, spec.kernel_h * spec.kernel_w * c);
    let g = upstream.data();

    let mut grad_bias = vec![T::zero(); f];
    for row in g.chunks_exact(f) {
        for (b, &v) in grad_bias.iter_mut().zip(row) {
            *b += v;
        }
    }

    let cols = im2col(input, spec, dims);
    let mut grad_w = vec![T::zero(); k * f];
    T::gemm(k, p, f, &cols, true, g, false, &mut grad_w, false);
    drop(cols);

    let grad_input = if need_input {
        let mut grad_cols = vec![T::zero(); p * k];
        T::gemm(p, f, k, g, false, weights.data(), true, &mut grad_cols, false);
        let gi = if spec.is_pointwise() {
            grad_cols
        } else {
            col2im(&grad_cols, spec, dims)
        };
        Some(Tensor::new(&[h, w, c], gi)?)
    } else {
        None
    };

    Ok(ConvGrads {
        input: grad_input,
        weights: Tensor::new(&spec.weight_shape(), grad_w)?,
        bias: Tensor::new(&[f], grad_bias)?,
    })
}

/// Gradients of `sum(upstream ⊙ conv2d(input, weights, bias))` with respect
/// to input, weights and bias.
pub fn conv2d_grad<T: Element>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    spec: &ConvSpec,
    upstream: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let g = conv2d_backward(input, weights, spec, upstream, true)?;
    Ok((g.input.expect("input gradient requested"), g.weights, g.bias))
}
