use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolSpec {
    pub window: usize,
    pub stride: usize,
}

impl Default for PoolSpec {
    fn default() -> Self {
        Self {
            window: 3,
            stride: 2,
        }
    }
}

impl PoolSpec {
    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        if self.window == 0 || self.stride == 0 {
            return Err(Error::Parameter("pool window and stride must be positive".into()));
        }
        if h < self.window {
            return Err(Error::dim("maxpool2d", "height", self.window, h));
        }
        if w < self.window {
            return Err(Error::dim("maxpool2d", "width", self.window, w));
        }
        Ok((
            (h - self.window) / self.stride + 1,
            (w - self.window) / self.stride + 1,
        ))
    }
}

/// Flat input index of the winning element for every pooled output cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArgmaxMap {
    pub input_shape: [usize; 3],
    pub output_shape: [usize; 3],
    pub indices: Vec<u32>,
}

/// Max pooling over an H×W×C tensor. Ties resolve to the first element in
/// row-major window order.
pub fn maxpool2d<T: Element>(input: &Tensor<T>, spec: &PoolSpec) -> Result<(Tensor<T>, ArgmaxMap)> {
    let (h, w, c) = input.dims3()?;
    let (oh, ow) = spec.output_hw(h, w)?;
    let src = input.data();
    let mut out = Vec::with_capacity(oh * ow * c);
    let mut idx = Vec::with_capacity(oh * ow * c);
    for oy in 0..oh {
        for ox in 0..ow {
            let (y0, x0) = (oy * spec.stride, ox * spec.stride);
            for ch in 0..c {
                let mut best = (y0 * w + x0) * c + ch;
                for y in y0..y0 + spec.window {
                    for x in x0..x0 + spec.window {
                        let i = (y * w + x) * c + ch;
                        if src[i] > src[best] {
                            best = i;
                        }
                    }
                }
                out.push(src[best]);
                idx.push(best as u32);
            }
        }
    }
    Ok((
        Tensor::new(&[oh, ow, c], out)?,
        ArgmaxMap {
            input_shape: [h, w, c],
            output_shape: [oh, ow, c],
            indices: idx,
        },
    ))
}

/// Routes each upstream gradient to the recorded argmax; overlapping windows
/// accumulate.
pub fn maxpool2d_grad<T: Element>(
    argmax: &ArgmaxMap,
    upstream: &Tensor<T>,
    input_shape: &[usize],
) -> Result<Tensor<T>> {
    if input_shape != argmax.input_shape {
        return Err(Error::dim(
            "maxpool2d_grad",
            "input size",
            argmax.input_shape.iter().product(),
            input_shape.iter().product(),
        ));
    }
    if upstream.shape() != argmax.output_shape {
        return Err(Error::dim(
            "maxpool2d_grad",
            "upstream size",
            argmax.output_shape.iter().product(),
            upstream.len(),
        ));
    }
    let mut grad = vec![T::zero(); input_shape.iter().product()];
    for (&i, &g) in argmax.indices.iter().zip(upstream.data()) {
        grad[i as usize] += g;
    }
    Tensor::new(input_shape, grad)
}
