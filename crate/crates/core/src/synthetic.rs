//! Synthetic four-class image sets for smoke tests and the toy benchmark.
//!
//! Each class draws one structured pattern with random geometry and
//! additive uniform noise: horizontal stripes (CNV), vertical stripes (DME),
//! bright disks (DRUSEN) and a checkerboard (NORMAL).

use std::path::{Path, PathBuf};

use image::GrayImage;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::class::Class;
use crate::data::{DatasetIndex, SampleRef, Splits};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub side: u32,
    /// Half-width of the uniform noise, on a 0..1 intensity scale.
    pub noise: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self { side: 224, noise: 0.15 }
    }
}

pub fn render(class: Class, spec: SyntheticSpec, rng: &mut impl Rng) -> GrayImage {
    let side = spec.side as f64;
    // Geometry is specified at 224 pixels and scaled to `side`.
    let scale = side / 224.0;
    let lo = rng.gen_range(0.1..0.3);
    let hi = rng.gen_range(0.7..0.9);
    let period = rng.gen_range(14.0..28.0) * scale;
    let phase = rng.gen_range(0.0..period);
    let disks: Vec<(f64, f64, f64)> = (0..rng.gen_range(4..9))
        .map(|_| {
            let r = rng.gen_range(8.0..18.0) * scale;
            (rng.gen_range(r..side - r), rng.gen_range(r..side - r), r)
        })
        .collect();
    let mut img = GrayImage::new(spec.side, spec.side);
    for (x, y, px) in img.enumerate_pixels_mut() {
        let (xf, yf) = (x as f64, y as f64);
        let on = match class {
            Class::Cnv => ((yf + phase) / period).floor() as i64 % 2 == 0,
            Class::Dme => ((xf + phase) / period).floor() as i64 % 2 == 0,
            Class::Drusen => disks.iter().any(|&(cx, cy, r)| (xf - cx).powi(2) + (yf - cy).powi(2) <= r * r),
            Class::Normal => {
                let cell = period * 1.5;
                (((xf + phase) / cell).floor() as i64 + ((yf + phase) / cell).floor() as i64) % 2 == 0
            }
        };
        let base = if on { hi } else { lo };
        let v = base + rng.gen_range(-spec.noise..=spec.noise);
        px.0[0] = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    }
    img
}

/// Writes `per_class` PNGs per class under `root/CLASS/` and returns them
/// as an index. File names follow `CLASS-<seed>-<n>.png`.
pub fn write_dataset(root: impl AsRef<Path>, per_class: usize, seed: u64, spec: SyntheticSpec) -> Result<DatasetIndex> {
    let root = root.as_ref();
    let mut samples = Vec::with_capacity(per_class * 4);
    for class in Class::ALL {
        let dir = root.join(class.name());
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((class.index() as u64 + 1) << 40));
        for n in 0..per_class {
            let path = dir.join(format!("{}-{seed}-{n}.png", class.name()));
            render(class, spec, &mut rng)
                .save(&path)
                .map_err(|e| Error::io(&path, std::io::Error::other(e)))?;
            samples.push(SampleRef::from_path(path, class));
        }
    }
    Ok(DatasetIndex::from_samples(samples))
}

/// Per-class sizes of a toy benchmark split.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ToySizes {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

impl Default for ToySizes {
    /// 400 / 80 / 80 images in total.
    fn default() -> Self {
        Self {
            train: 100,
            validation: 20,
            test: 20,
        }
    }
}

/// Generates independent train, validation and test folders under `root`.
pub fn write_toy_splits(root: impl AsRef<Path>, sizes: ToySizes, seed: u64) -> Result<Splits> {
    let root = root.as_ref();
    let part = |name: &str, n: usize, salt: u64| -> Result<Vec<SampleRef>> {
        let dir: PathBuf = root.join(name);
        Ok(write_dataset(&dir, n, seed.wrapping_add(salt), SyntheticSpec::default())?.samples)
    };
    Ok(Splits {
        train: part("train", sizes.train, 0)?,
        validation: part("validation", sizes.validation, 1)?,
        test: part("test", sizes.test, 2)?,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_pixels() {
        let a = render(Class::Drusen, SyntheticSpec::default(), &mut ChaCha8Rng::seed_from_u64(3));
        let b = render(Class::Drusen, SyntheticSpec::default(), &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
    }

    #[test]
    fn stripes_follow_orientation() {
        let spec = SyntheticSpec { side: 224, noise: 0.0 };
        let h = render(Class::Cnv, spec, &mut ChaCha8Rng::seed_from_u64(1));
        let v = render(Class::Dme, spec, &mut ChaCha8Rng::seed_from_u64(1));
        // Horizontal stripes are constant along a row, vertical along a column.
        assert!((0..224).all(|x| h.get_pixel(x, 50) == h.get_pixel(0, 50)));
        assert!((0..224).all(|y| v.get_pixel(50, y) == v.get_pixel(50, 0)));
    }

    #[test]
    fn dataset_layout_scans_back() {
        let dir = tempfile::tempdir().unwrap();
        let idx = write_dataset(dir.path(), 3, 9, SyntheticSpec { side: 64, noise: 0.1 }).unwrap();
        assert_eq!(idx.len(), 12);
        let scanned = crate::data::scan_dataset(dir.path()).unwrap();
        assert_eq!(scanned.samples, idx.samples);
    }
}
