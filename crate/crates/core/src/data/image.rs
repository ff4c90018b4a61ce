use std::path::Path;

use image::DynamicImage;

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

pub const IMAGE_SIDE: usize = 224;

/// Bilinear resize of an H×W×C buffer with half-pixel centres and edge
/// clamping. Interpolates as `a + t·(b - a)` so constant regions stay exact.
pub fn resize_bilinear<T: Element>(src: &[T], h: usize, w: usize, c: usize, out_h: usize, out_w: usize) -> Vec<T> {
    assert_eq!(src.len(), h * w * c);
    let axis = |out: usize, inp: usize| -> Vec<(usize, usize, f64)> {
        let scale = inp as f64 / out as f64;
        (0..out)
            .map(|o| {
                let s = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (inp - 1) as f64);
                let i0 = s.floor() as usize;
                let i1 = (i0 + 1).min(inp - 1);
                (i0, i1, s - i0 as f64)
            })
            .collect()
    };
    let ys = axis(out_h, h);
    let xs = axis(out_w, w);
    let at = |y: usize, x: usize, ch: usize| src[(y * w + x) * c + ch].as_f64();
    let lerp = |a: f64, b: f64, t: f64| a + t * (b - a);
    let mut out = Vec::with_capacity(out_h * out_w * c);
    for &(y0, y1, ty) in &ys {
        for &(x0, x1, tx) in &xs {
            for ch in 0..c {
                let top = lerp(at(y0, x0, ch), at(y0, x1, ch), tx);
                let bottom = lerp(at(y1, x0, ch), at(y1, x1, ch), tx);
                out.push(T::from_f64(lerp(top, bottom, ty)));
            }
        }
    }
    out
}

fn to_rgb_bytes(img: DynamicImage) -> (usize, usize, Vec<u8>) {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let rgb = match img {
        DynamicImage::ImageLuma8(g) => g.into_raw().into_iter().flat_map(|v| [v, v, v]).collect(),
        other => other.to_rgb8().into_raw(),
    };
    (h, w, rgb)
}

/// Decodes an 8-bit grayscale or RGB image, resizes it to 224×224 and
/// scales values by 1/255. `origin` only labels errors.
pub fn preprocess_bytes(bytes: &[u8], origin: &Path) -> Result<Tensor<f32>> {
    let img = image::load_from_memory(bytes).map_err(|e| Error::Decode {
        path: origin.to_path_buf(),
        reason: e.to_string(),
    })?;
    let (h, w, rgb) = to_rgb_bytes(img);
    let src: Vec<f64> = rgb.iter().map(|&v| v as f64).collect();
    let resized = resize_bilinear(&src, h, w, 3, IMAGE_SIDE, IMAGE_SIDE);
    let data = resized.into_iter().map(|v| (v / 255.0) as f32).collect();
    Tensor::new(&[IMAGE_SIDE, IMAGE_SIDE, 3], data)
}

pub fn load_and_preprocess(path: impl AsRef<Path>) -> Result<Tensor<f32>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    preprocess_bytes(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{GrayImage, ImageFormat, RgbImage};
    use std::io::Cursor;

    fn png(img: DynamicImage) -> Vec<u8> {
        let mut buf = Cursor::new(Vec::new());
        img.write_to(&mut buf, ImageFormat::Png).unwrap();
        buf.into_inner()
    }

    #[test]
    fn smallest_scans_resize() {
        let img = GrayImage::from_fn(512, 496, |x, y| image::Luma([((x + y) % 256) as u8]));
        let t = preprocess_bytes(&png(img.into()), Path::new("scan.png")).unwrap();
        assert_eq!(t.shape(), &[224, 224, 3]);
        assert!(t.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        // Grayscale is replicated across channels.
        assert!(t.data().chunks(3).all(|p| p[0] == p[1] && p[1] == p[2]));
    }

    #[test]
    fn white_is_exactly_one() {
        let img = RgbImage::from_pixel(300, 250, image::Rgb([255, 255, 255]));
        let t = preprocess_bytes(&png(img.into()), Path::new("white.png")).unwrap();
        assert!(t.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn checkerboard_corners_keep_source_values() {
        // 2×2 source: [[0, 255], [255, 0]]. With half-pixel centres the
        // outermost output pixels sample beyond the source centres and clamp
        // onto the corner values.
        let img = GrayImage::from_raw(2, 2, vec![0, 255, 255, 0]).unwrap();
        let t = preprocess_bytes(&png(img.into()), Path::new("cb.png")).unwrap();
        let px = |y: usize, x: usize| t.data()[(y * 224 + x) * 3];
        assert_eq!(px(0, 0), 0.0);
        assert_eq!(px(0, 223), 1.0);
        assert_eq!(px(223, 0), 1.0);
        assert_eq!(px(223, 223), 0.0);
        // Hand-computed interior sample: output x = 112 maps to source
        // 112.5·2/224 − 0.5 = 0.5044642857..., halfway-ish across the row.
        let sx = 112.5 * 2.0 / 224.0 - 0.5;
        let expected = (sx * 255.0 / 255.0) as f32;
        assert!((px(0, 112) - expected).abs() < 1e-6);
    }

    #[test]
    fn undecodable_bytes_carry_path() {
        let err = preprocess_bytes(b"not an image", Path::new("bad.jpeg")).unwrap_err();
        match err {
            Error::Decode { path, .. } => assert_eq!(path, Path::new("bad.jpeg")),
            other => panic!("unexpected {other:?}"),
        }
    }
}
