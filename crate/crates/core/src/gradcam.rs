//! Gradient-weighted class activation maps over the last convolution.
//!
//! The class score is the pre-sigmoid logit, so saturated probabilities do
//! not flatten the gradient.

use std::fmt::Write as _;

use image::RgbImage;
use serde::Serialize;

use crate::class::{Class, NUM_CLASSES};
use crate::data::{resize_bilinear, IMAGE_SIDE};
use crate::error::{Error, Result};
use crate::net::{Network, LAST_CONV};
use crate::ops::Mode;
use crate::render::{blend, tensor_to_rgb, to_u8};
use crate::tensor::{Element, Tensor};

pub const HEATMAP_ALPHA: f64 = 0.4;

const fn jet_entry(i: usize) -> [u8; 3] {
    // Stops every quarter: blue, cyan, green, yellow, red.
    const STOPS: [[u16; 3]; 5] = [[0, 0, 255], [0, 255, 255], [0, 255, 0], [255, 255, 0], [255, 0, 0]];
    let x = i * 4;
    let k = if x / 255 > 3 { 3 } else { x / 255 };
    let f = (x - 255 * k) as u16;
    let (a, b) = (STOPS[k], STOPS[k + 1]);
    let mut out = [0u8; 3];
    let mut c = 0;
    while c < 3 {
        // Stops are 0 or 255, so the interpolation is exact in integers.
        out[c] = if b[c] >= a[c] {
            (a[c] + (b[c] - a[c]) * f / 255) as u8
        } else {
            (a[c] - (a[c] - b[c]) * f / 255) as u8
        };
        c += 1;
    }
    out
}

const fn jet_table() -> [[u8; 3]; 256] {
    let mut t = [[0u8; 3]; 256];
    let mut i = 0;
    while i < 256 {
        t[i] = jet_entry(i);
        i += 1;
    }
    t
}

/// Fixed 256-entry jet ramp.
pub const JET: [[u8; 3]; 256] = jet_table();

pub fn ramp(h: f64) -> [u8; 3] {
    JET[(h.clamp(0.0, 1.0) * 255.0).round() as usize]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Heatmap {
    pub target: Class,
    pub raw_height: usize,
    pub raw_width: usize,
    /// ReLU of the weighted activation sum, row-major.
    pub raw: Vec<f64>,
    /// One weight per channel: the spatial mean of the score gradient.
    pub alphas: Vec<f64>,
    /// 224×224, divided by its maximum unless `empty`.
    pub upsampled: Vec<f64>,
    pub empty: bool,
}

impl Heatmap {
    /// The raw grid as whitespace-separated rows.
    pub fn raw_text(&self) -> String {
        let mut out = String::new();
        for row in self.raw.chunks(self.raw_width) {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            let _ = writeln!(out, "{}", cells.join(" "));
        }
        out
    }
}

/// Channel weights and raw map from an H×W×K activation and the score
/// gradient with respect to it.
pub fn cam_from_parts<T: Element>(activation: &Tensor<T>, gradient: &Tensor<T>) -> Result<(Vec<f64>, Vec<f64>)> {
    let (h, w, k) = activation.dims3()?;
    if gradient.shape() != activation.shape() {
        return Err(Error::dim("gradcam", "gradient size", activation.len(), gradient.len()));
    }
    let mut alphas = vec![0.0; k];
    for px in gradient.data().chunks(k) {
        for (a, g) in alphas.iter_mut().zip(px) {
            *a += g.as_f64();
        }
    }
    for a in &mut alphas {
        *a /= (h * w) as f64;
    }
    let raw = activation
        .data()
        .chunks(k)
        .map(|px| px.iter().zip(&alphas).map(|(v, a)| v.as_f64() * a).sum::<f64>().max(0.0))
        .collect();
    Ok((alphas, raw))
}

/// Upsamples and normalises a raw map into a [`Heatmap`].
pub fn heatmap_from_raw(target: Class, raw: Vec<f64>, h: usize, w: usize, alphas: Vec<f64>) -> Heatmap {
    let empty = raw.iter().all(|&v| v == 0.0);
    let mut upsampled = resize_bilinear(&raw, h, w, 1, IMAGE_SIDE, IMAGE_SIDE);
    if !empty {
        let max = upsampled.iter().copied().fold(0.0, f64::max);
        for v in &mut upsampled {
            *v /= max;
        }
    }
    Heatmap {
        target,
        raw_height: h,
        raw_width: w,
        raw,
        alphas,
        upsampled,
        empty,
    }
}

pub fn gradcam<T: Element>(net: &Network<T>, image: &Tensor<T>, target: Class) -> Result<Heatmap> {
    let fwd = net.forward(image, Mode::Eval)?;
    let mut seed = vec![T::zero(); NUM_CLASSES];
    seed[target.index()] = T::one();
    let (_, grad) = net.backward(&fwd.trace, &Tensor::new(&[NUM_CLASSES], seed)?, LAST_CONV + 1)?;
    let grad = grad.expect("stop above layer 0 yields an input gradient");
    let activation = fwd.trace.last_conv_activation();
    let (h, w, _) = activation.dims3()?;
    let (alphas, raw) = cam_from_parts(activation, &grad)?;
    Ok(heatmap_from_raw(target, raw, h, w, alphas))
}

/// `(1 - alpha)·image + alpha·jet(heat)` per pixel.
pub fn render_heatmap(image: &Tensor<f32>, heatmap: &Heatmap, alpha: f64) -> Result<RgbImage> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Parameter(format!("alpha must be in [0, 1], got {alpha}")));
    }
    let mut out = tensor_to_rgb(image)?;
    if out.width() as usize * out.height() as usize != heatmap.upsampled.len() {
        return Err(Error::dim("render_heatmap", "pixels", heatmap.upsampled.len(), image.len() / 3));
    }
    for ((px, src), &h) in out.pixels_mut().zip(image.data().chunks(3)).zip(&heatmap.upsampled) {
        let color = ramp(h).map(|c| c as f64 / 255.0);
        let src = [src[0] as f64, src[1] as f64, src[2] as f64];
        px.0 = blend(src, color, alpha).map(to_u8);
    }
    Ok(out)
}
