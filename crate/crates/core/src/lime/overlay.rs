use image::RgbImage;
use serde::{Deserialize, Serialize};

use super::segment::SegmentMap;
use super::Explanation;
use crate::error::{Error, Result};
use crate::render::{blend, tensor_to_rgb, to_u8};
use crate::tensor::Tensor;

pub const OVERLAY_ALPHA: f64 = 0.4;
pub const POSITIVE_COLOR: [f64; 3] = [0.0, 1.0, 0.0];
pub const NEGATIVE_COLOR: [f64; 3] = [1.0, 0.0, 0.0];
pub const OUTLINE_COLOR: [f64; 3] = [1.0, 1.0, 0.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlayMode {
    /// Green tint on selected segments with positive weight.
    PositiveOnly,
    /// Green for positive, red for negative weight.
    PosNeg,
    /// Outlines of the selected segments.
    Boundaries,
}

/// Paints the explanation's selected segments onto `image`. Pixels outside
/// selected segments keep their original value.
pub fn render_overlay(image: &Tensor<f32>, seg: &SegmentMap, explanation: &Explanation, mode: OverlayMode) -> Result<RgbImage> {
    let mut out = tensor_to_rgb(image)?;
    if (out.height() as usize, out.width() as usize) != (seg.height, seg.width) {
        return Err(Error::dim("render_overlay", "pixels", seg.height * seg.width, image.len() / 3));
    }
    // Per-segment sign: 1 positive, -1 negative, 0 not selected.
    let mut sign = vec![0i8; seg.count];
    for s in &explanation.selected {
        if s.segment >= seg.count {
            return Err(Error::Parameter(format!(
                "segment {} outside map of {} segments",
                s.segment, seg.count
            )));
        }
        sign[s.segment] = if s.weight > 0.0 {
            1
        } else if s.weight < 0.0 {
            -1
        } else {
            0
        };
    }
    let src = image.data();
    for y in 0..seg.height {
        for x in 0..seg.width {
            let sgn = sign[seg.id(y, x)];
            let color = match (mode, sgn) {
                (_, 0) => continue,
                (OverlayMode::PositiveOnly, 1) | (OverlayMode::PosNeg, 1) => POSITIVE_COLOR,
                (OverlayMode::PosNeg, _) => NEGATIVE_COLOR,
                (OverlayMode::PositiveOnly, _) => continue,
                (OverlayMode::Boundaries, _) => {
                    if seg.is_boundary(y, x) {
                        OUTLINE_COLOR
                    } else {
                        continue;
                    }
                }
            };
            let alpha = if mode == OverlayMode::Boundaries { 1.0 } else { OVERLAY_ALPHA };
            let i = (y * seg.width + x) * 3;
            let px = [src[i] as f64, src[i + 1] as f64, src[i + 2] as f64];
            let mixed = blend(px, color, alpha);
            out.put_pixel(x as u32, y as u32, image::Rgb(mixed.map(to_u8)));
        }
    }
    Ok(out)
}
