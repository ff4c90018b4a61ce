//! Raster helpers shared by the explanation renderers.

use std::io::Cursor;

use image::{ImageFormat, RgbImage};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// H×W×3 tensor with values in [0, 1] to an 8-bit RGB raster.
pub fn tensor_to_rgb(image: &Tensor<f32>) -> Result<RgbImage> {
    let (h, w, c) = image.dims3()?;
    if c != 3 {
        return Err(Error::dim("tensor_to_rgb", "channels", 3, c));
    }
    let raw = image.data().iter().map(|&v| to_u8(v as f64)).collect();
    Ok(RgbImage::from_raw(w as u32, h as u32, raw).expect("buffer matches dimensions"))
}

/// `(1 - alpha)·src + alpha·color`, per channel, on a [0, 1] scale.
pub fn blend(src: [f64; 3], color: [f64; 3], alpha: f64) -> [f64; 3] {
    [0, 1, 2].map(|k| (1.0 - alpha) * src[k] + alpha * color[k])
}

pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)
        .map_err(|e| Error::io("<png buffer>", std::io::Error::other(e)))?;
    Ok(buf.into_inner())
}
