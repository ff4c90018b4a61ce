//! Superpixel segmentation: a regular grid, or k-means on position and
//! intensity.

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentMode {
    #[default]
    Grid,
    Slic,
}

/// Relative weight of normalised position against intensity in slic mode.
pub const SLIC_SPATIAL_WEIGHT: f64 = 0.5;
pub const SLIC_ITERATIONS: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentMap {
    pub height: usize,
    pub width: usize,
    /// Row-major segment id per pixel, contiguous from 0.
    pub labels: Vec<u32>,
    pub count: usize,
}

impl SegmentMap {
    pub fn id(&self, y: usize, x: usize) -> usize {
        self.labels[y * self.width + x] as usize
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.count];
        for &l in &self.labels {
            sizes[l as usize] += 1;
        }
        sizes
    }

    /// True when a 4-neighbour lies in a different segment.
    pub fn is_boundary(&self, y: usize, x: usize) -> bool {
        let id = self.id(y, x);
        (y > 0 && self.id(y - 1, x) != id)
            || (y + 1 < self.height && self.id(y + 1, x) != id)
            || (x > 0 && self.id(y, x - 1) != id)
            || (x + 1 < self.width && self.id(y, x + 1) != id)
    }
}

/// Rows and columns of the grid used for `target` segments.
pub fn grid_dims(target: usize, height: usize, width: usize) -> (usize, usize) {
    let rows = ((target as f64).sqrt().floor() as usize).clamp(1, height);
    let cols = target.div_ceil(rows).clamp(1, width);
    (rows, cols)
}

fn grid_labels(height: usize, width: usize, rows: usize, cols: usize) -> Vec<u32> {
    let mut labels = Vec::with_capacity(height * width);
    for y in 0..height {
        let r = y * rows / height;
        for x in 0..width {
            labels.push((r * cols + x * cols / width) as u32);
        }
    }
    labels
}

pub fn segment_image(image: &Tensor<f32>, mode: SegmentMode, target: usize) -> Result<SegmentMap> {
    let (h, w, c) = image.dims3()?;
    if target < 2 {
        return Err(Error::Parameter(format!("segment count must be at least 2, got {target}")));
    }
    if target > h * w {
        return Err(Error::Parameter(format!("segment count {target} exceeds pixel count {}", h * w)));
    }
    let labels = match mode {
        SegmentMode::Grid => {
            let (rows, cols) = grid_dims(target, h, w);
            grid_labels(h, w, rows, cols)
        }
        SegmentMode::Slic => {
            let intensity: Vec<f64> = image
                .data()
                .chunks(c)
                .map(|p| p.iter().map(|&v| v as f64).sum::<f64>() / c as f64)
                .collect();
            kmeans_labels(&intensity, h, w, target)
        }
    };
    Ok(relabel(h, w, labels))
}

fn features(intensity: &[f64], h: usize, w: usize) -> Vec<[f64; 3]> {
    let scale = SLIC_SPATIAL_WEIGHT / h.max(w) as f64;
    (0..h * w)
        .map(|i| [(i / w) as f64 * scale, (i % w) as f64 * scale, intensity[i]])
        .collect()
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

/// k-means++ seeding from a generator keyed on `k`, then a fixed number of
/// Lloyd iterations. Segments need not be spatially connected.
fn kmeans_labels(intensity: &[f64], h: usize, w: usize, k: usize) -> Vec<u32> {
    let feats = features(intensity, h, w);
    let mut rng = ChaCha8Rng::seed_from_u64(k as u64);
    let mut centers = vec![feats[(h / 2) * w + w / 2]];
    let mut nearest: Vec<f64> = feats.iter().map(|f| dist2(f, &centers[0])).collect();
    while centers.len() < k {
        let next = match WeightedIndex::new(&nearest) {
            Ok(d) => feats[d.sample(&mut rng)],
            // Every pixel coincides with a centre already.
            Err(_) => break,
        };
        for (n, f) in nearest.iter_mut().zip(&feats) {
            *n = n.min(dist2(f, &next));
        }
        centers.push(next);
    }
    let mut labels = vec![0u32; feats.len()];
    for _ in 0..SLIC_ITERATIONS {
        for (l, f) in labels.iter_mut().zip(&feats) {
            let mut best = (f64::INFINITY, 0);
            for (j, c) in centers.iter().enumerate() {
                let d = dist2(f, c);
                if d < best.0 {
                    best = (d, j);
                }
            }
            *l = best.1 as u32;
        }
        let mut sums = vec![([0.0; 3], 0usize); centers.len()];
        for (l, f) in labels.iter().zip(&feats) {
            let s = &mut sums[*l as usize];
            for d in 0..3 {
                s.0[d] += f[d];
            }
            s.1 += 1;
        }
        for (c, (s, n)) in centers.iter_mut().zip(sums) {
            if n > 0 {
                *c = s.map(|v| v / n as f64);
            }
        }
    }
    labels
}

/// Renumbers ids in raster order of first appearance, dropping empty ones.
fn relabel(height: usize, width: usize, labels: Vec<u32>) -> SegmentMap {
    let mut map = std::collections::HashMap::new();
    let labels: Vec<u32> = labels
        .into_iter()
        .map(|l| {
            let next = map.len() as u32;
            *map.entry(l).or_insert(next)
        })
        .collect();
    SegmentMap {
        height,
        width,
        labels,
        count: map.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blank() -> Tensor<f32> {
        Tensor::full(&[224, 224, 3], 0.3)
    }

    #[test]
    fn grid_64_is_8_by_8_blocks_of_28() {
        let seg = segment_image(&blank(), SegmentMode::Grid, 64).unwrap();
        assert_eq!(seg.count, 64);
        assert!(seg.sizes().iter().all(|&s| s == 28 * 28));
        assert_eq!(seg.id(27, 27), 0);
        assert_eq!(seg.id(0, 28), 1);
        assert_eq!(seg.id(28, 0), 8);
        assert_eq!(seg.id(223, 223), 63);
    }

    #[test]
    fn grid_is_deterministic_and_contiguous() {
        for target in [2, 3, 10, 50, 64, 100] {
            let a = segment_image(&blank(), SegmentMode::Grid, target).unwrap();
            let b = segment_image(&blank(), SegmentMode::Grid, target).unwrap();
            assert_eq!(a, b);
            assert!(a.count >= target);
            assert!(a.sizes().iter().all(|&s| s > 0));
        }
    }

    #[test]
    fn too_few_segments_rejected() {
        for mode in [SegmentMode::Grid, SegmentMode::Slic] {
            assert!(matches!(segment_image(&blank(), mode, 1), Err(Error::Parameter(_))));
        }
    }

    fn two_tone(split_rows: bool) -> Tensor<f32> {
        Tensor::from_fn(&[224, 224, 3], |i| {
            let p = i / 3;
            let (y, x) = (p / 224, p % 224);
            let first = if split_rows { y < 112 } else { x < 112 };
            if first {
                0.2
            } else {
                0.8
            }
        })
    }

    #[test]
    fn slic_follows_tone_boundary() {
        for split_rows in [false, true] {
            let img = two_tone(split_rows);
            let seg = segment_image(&img, SegmentMode::Slic, 2).unwrap();
            assert_eq!(seg.count, 2);
            let tone = |i: usize| (img.data()[i * 3] > 0.5) as u32;
            let agree = (0..seg.labels.len()).filter(|&i| seg.labels[i] == tone(i)).count();
            let agree = agree.max(seg.labels.len() - agree);
            assert!(agree as f64 >= 0.95 * seg.labels.len() as f64, "split_rows {split_rows}: {agree}");
        }
    }

    #[test]
    fn boundary_detection() {
        let seg = segment_image(&blank(), SegmentMode::Grid, 4).unwrap();
        assert!(seg.is_boundary(111, 5));
        assert!(seg.is_boundary(112, 5));
        assert!(!seg.is_boundary(50, 50));
    }
}
