//! Local surrogate explanations over image segments.
//!
//! The pipeline is segment → sample masks → perturb → query the model →
//! weight by proximity → fit a ridge surrogate per target class. Model
//! queries run in parallel; results are collected in mask order so the
//! output does not depend on scheduling.

pub mod overlay;
pub mod segment;
pub mod surrogate;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use overlay::{render_overlay, OverlayMode, OVERLAY_ALPHA};
pub use segment::{segment_image, SegmentMap, SegmentMode};
pub use surrogate::{cosine_distance_to_ones, fit_surrogate, kernel_weight, kernel_weights, Surrogate};

use crate::class::{Class, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::net::OctNet;
use crate::tensor::Tensor;

/// Anything that maps a preprocessed image to four class probabilities.
pub trait Classifier: Sync {
    fn probabilities(&self, image: &Tensor<f32>) -> Result<[f32; NUM_CLASSES]>;
}

impl Classifier for OctNet {
    fn probabilities(&self, image: &Tensor<f32>) -> Result<[f32; NUM_CLASSES]> {
        Ok(self.predict(image)?.probs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    #[default]
    SegmentMean,
    Gray,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimeParams {
    pub num_samples: usize,
    /// Saturates at the number of classes.
    pub top_labels: usize,
    pub num_features: usize,
    pub seed: u64,
    pub kernel_width: f64,
    pub ridge_lambda: f64,
    pub baseline: Baseline,
    pub segmentation: SegmentMode,
    pub segments: usize,
}

impl Default for LimeParams {
    fn default() -> Self {
        Self {
            num_samples: 100,
            top_labels: 5,
            num_features: 5,
            seed: 0,
            kernel_width: 0.25,
            ridge_lambda: 1.0,
            baseline: Baseline::SegmentMean,
            segmentation: SegmentMode::Grid,
            segments: 64,
        }
    }
}

impl LimeParams {
    pub fn validate(&self) -> Result<()> {
        if self.num_samples == 0 {
            return Err(Error::Parameter("num_samples must be at least 1".into()));
        }
        if self.top_labels == 0 || self.num_features == 0 {
            return Err(Error::Parameter("top_labels and num_features must be at least 1".into()));
        }
        if !(self.kernel_width > 0.0 && self.kernel_width.is_finite()) {
            return Err(Error::Parameter(format!("kernel_width must be positive, got {}", self.kernel_width)));
        }
        if !(self.ridge_lambda >= 0.0 && self.ridge_lambda.is_finite()) {
            return Err(Error::Parameter(format!("ridge_lambda must be non-negative, got {}", self.ridge_lambda)));
        }
        Ok(())
    }

    pub fn effective_top_labels(&self) -> usize {
        self.top_labels.min(NUM_CLASSES)
    }
}

/// `n` masks over `segments` segments: the first is all ones, the rest have
/// each bit set independently with probability 0.5.
pub fn sample_masks(segments: usize, n: usize, seed: u64) -> Vec<Vec<bool>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut masks = Vec::with_capacity(n);
    if n > 0 {
        masks.push(vec![true; segments]);
    }
    for _ in 1..n {
        masks.push((0..segments).map(|_| rng.gen_bool(0.5)).collect());
    }
    masks
}

/// Every mask over `segments` segments, all-ones first, then the rest in
/// descending binary order. Used to test the fit exhaustively.
pub fn enumerate_masks(segments: usize) -> Vec<Vec<bool>> {
    assert!(segments < 20, "enumeration is exponential");
    (0..1u32 << segments)
        .rev()
        .map(|b| (0..segments).map(|j| b >> j & 1 == 1).collect())
        .collect()
}

/// Per-segment mean colour.
pub fn segment_means(image: &Tensor<f32>, seg: &SegmentMap) -> Vec<[f32; 3]> {
    let mut sums = vec![[0.0f64; 3]; seg.count];
    let mut counts = vec![0usize; seg.count];
    for (p, &l) in image.data().chunks(3).zip(&seg.labels) {
        for k in 0..3 {
            sums[l as usize][k] += p[k] as f64;
        }
        counts[l as usize] += 1;
    }
    sums.iter()
        .zip(counts)
        .map(|(s, n)| s.map(|v| (v / n.max(1) as f64) as f32))
        .collect()
}

fn apply_with_means(image: &Tensor<f32>, seg: &SegmentMap, mask: &[bool], fill: &[[f32; 3]]) -> Tensor<f32> {
    let mut out = image.clone();
    for (p, &l) in out.data_mut().chunks_mut(3).zip(&seg.labels) {
        if !mask[l as usize] {
            p.copy_from_slice(&fill[l as usize]);
        }
    }
    out
}

/// Replaces the pixels of every "off" segment by the baseline colour.
pub fn apply_mask(image: &Tensor<f32>, seg: &SegmentMap, mask: &[bool], baseline: Baseline) -> Result<Tensor<f32>> {
    let (h, w, c) = image.dims3()?;
    if (h, w, c) != (seg.height, seg.width, 3) {
        return Err(Error::dim("apply_mask", "pixels", seg.height * seg.width * 3, h * w * c));
    }
    if mask.len() != seg.count {
        return Err(Error::dim("apply_mask", "mask length", seg.count, mask.len()));
    }
    let fill = match baseline {
        Baseline::SegmentMean => segment_means(image, seg),
        Baseline::Gray => vec![[0.5; 3]; seg.count],
    };
    Ok(apply_with_means(image, seg, mask, &fill))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectedSegment {
    pub segment: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub target: Class,
    /// Model probability for `target` on the unperturbed image.
    pub probability: f64,
    pub intercept: f64,
    pub weights: Vec<f64>,
    /// Top `num_features` segments by |weight|, largest first.
    pub selected: Vec<SelectedSegment>,
    /// Weighted R² of the surrogate; `None` when the model output did not
    /// vary over the samples.
    pub fidelity: Option<f64>,
    /// Surrogate value on the all-ones mask.
    pub local_prediction: f64,
    pub params: LimeParams,
}

/// Segment ids ordered by |weight| descending; ties keep the lower id first.
pub fn rank_segments(weights: &[f64]) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..weights.len()).collect();
    ids.sort_by(|&a, &b| weights[b].abs().total_cmp(&weights[a].abs()).then(a.cmp(&b)));
    ids
}

impl Explanation {
    /// The `k` strongest segments; always a prefix of any larger selection.
    pub fn top(&self, k: usize) -> Vec<SelectedSegment> {
        rank_segments(&self.weights)
            .into_iter()
            .take(k)
            .map(|segment| SelectedSegment {
                segment,
                weight: self.weights[segment],
            })
            .collect()
    }

    /// Same explanation with `k` selected segments.
    pub fn with_features(&self, k: usize) -> Explanation {
        Explanation {
            selected: self.top(k),
            params: LimeParams {
                num_features: k,
                ..self.params.clone()
            },
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimeOutput {
    #[serde(skip)]
    pub segments: SegmentMap,
    pub segment_count: usize,
    pub probabilities: [f32; NUM_CLASSES],
    pub explanations: Vec<Explanation>,
    /// Indices of sampled masks with every segment off.
    pub zero_masks: Vec<usize>,
}

impl LimeOutput {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serialisable")
    }
}

/// Classes ordered by probability, highest first; ties keep class order.
pub fn top_classes(probs: &[f32; NUM_CLASSES], n: usize) -> Vec<Class> {
    let mut order: Vec<usize> = (0..NUM_CLASSES).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    order.into_iter().take(n).map(|i| Class::ALL[i]).collect()
}

pub fn explain(model: &dyn Classifier, image: &Tensor<f32>, params: &LimeParams) -> Result<LimeOutput> {
    params.validate()?;
    let seg = segment_image(image, params.segmentation, params.segments).map_err(|e| e.in_stage("segment"))?;
    if params.num_samples < seg.count {
        log::warn!(
            "{} samples for {} segments; the surrogate will lean on the ridge penalty",
            params.num_samples,
            seg.count
        );
    }
    let masks = sample_masks(seg.count, params.num_samples, params.seed);
    let fill = match params.baseline {
        Baseline::SegmentMean => segment_means(image, &seg),
        Baseline::Gray => vec![[0.5; 3]; seg.count],
    };
    let outputs: Vec<[f32; NUM_CLASSES]> = masks
        .par_iter()
        .map(|m| model.probabilities(&apply_with_means(image, &seg, m, &fill)))
        .collect::<Result<_>>()
        .map_err(|e| e.in_stage("predict"))?;
    let (weights, zero_masks) = kernel_weights(&masks, params.kernel_width);
    if !zero_masks.is_empty() {
        log::warn!("{} all-off masks given the minimum kernel weight", zero_masks.len());
    }
    let probabilities = outputs[0];
    let mut explanations = Vec::new();
    for target in top_classes(&probabilities, params.effective_top_labels()) {
        let y: Vec<f64> = outputs.iter().map(|p| p[target.index()] as f64).collect();
        let fit = fit_surrogate(&masks, &y, &weights, params.ridge_lambda).map_err(|e| e.in_stage("fit"))?;
        let local_prediction = fit.predict(&masks[0]);
        let mut exp = Explanation {
            target,
            probability: y[0],
            intercept: fit.intercept,
            weights: fit.coefficients,
            selected: Vec::new(),
            fidelity: fit.fidelity,
            local_prediction,
            params: params.clone(),
        };
        exp.selected = exp.top(params.num_features);
        explanations.push(exp);
    }
    Ok(LimeOutput {
        segment_count: seg.count,
        segments: seg,
        probabilities,
        explanations,
        zero_masks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Constant;

    impl Classifier for Constant {
        fn probabilities(&self, _: &Tensor<f32>) -> Result<[f32; NUM_CLASSES]> {
            Ok([0.1, 0.7, 0.3, 0.2])
        }
    }

    /// Probability of class 0 is the brightness of the top-left quadrant.
    struct TopLeft;

    impl Classifier for TopLeft {
        fn probabilities(&self, image: &Tensor<f32>) -> Result<[f32; NUM_CLASSES]> {
            let mut s = 0.0;
            for y in 0..112 {
                for x in 0..112 {
                    s += image.data()[(y * 224 + x) * 3];
                }
            }
            Ok([s / (112.0 * 112.0), 0.5, 0.2, 0.1])
        }
    }

    fn textured() -> Tensor<f32> {
        Tensor::from_fn(&[224, 224, 3], |i| ((i / 3) % 7) as f32 / 7.0 + 0.1)
    }

    #[test]
    fn masks_start_with_all_ones() {
        for seed in 0..5 {
            let m = sample_masks(10, 20, seed);
            assert_eq!(m.len(), 20);
            assert!(m[0].iter().all(|&b| b));
            assert_eq!(m, sample_masks(10, 20, seed));
        }
        assert_ne!(sample_masks(10, 20, 1), sample_masks(10, 20, 2));
    }

    #[test]
    fn enumeration_hook_gives_all_masks() {
        let m = enumerate_masks(3);
        assert_eq!(m.len(), 8);
        assert!(m[0].iter().all(|&b| b));
        let distinct: std::collections::HashSet<_> = m.iter().collect();
        assert_eq!(distinct.len(), 8);
    }

    #[test]
    fn apply_mask_baselines() {
        let img = textured();
        let seg = segment_image(&img, SegmentMode::Grid, 64).unwrap();
        let same = apply_mask(&img, &seg, &[true; 64], Baseline::SegmentMean).unwrap();
        assert_eq!(same, img);
        let gray = apply_mask(&img, &seg, &[false; 64], Baseline::Gray).unwrap();
        assert!(gray.data().iter().all(|&v| v == 0.5));

        let mut mask = vec![true; 64];
        mask[9] = false;
        let out = apply_mask(&img, &seg, &mask, Baseline::SegmentMean).unwrap();
        let region = |t: &Tensor<f32>| -> Vec<f64> {
            t.data()
                .chunks(3)
                .zip(&seg.labels)
                .filter(|(_, &l)| l == 9)
                .map(|(p, _)| p[0] as f64)
                .collect()
        };
        let before = region(&img);
        let after = region(&out);
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!((mean(&before) - mean(&after)).abs() < 1e-6);
        assert!(after.iter().all(|&v| v == after[0]));
        // Other segments untouched.
        for ((a, b), &l) in img.data().chunks(3).zip(out.data().chunks(3)).zip(&seg.labels) {
            if l != 9 {
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn constant_model_gives_zero_weights() {
        let out = explain(&Constant, &textured(), &LimeParams::default()).unwrap();
        assert_eq!(out.explanations.len(), 4);
        assert_eq!(out.explanations[0].target, Class::Dme);
        for e in &out.explanations {
            assert!(e.weights.iter().all(|&w| w == 0.0));
            assert_eq!(e.fidelity, None);
            assert_eq!(e.selected.len(), 5);
        }
    }

    #[test]
    fn finds_the_responsible_quadrant() {
        let img = Tensor::full(&[224, 224, 3], 0.9);
        let params = LimeParams {
            baseline: Baseline::Gray,
            segments: 4,
            top_labels: 1,
            num_features: 1,
            ..LimeParams::default()
        };
        let out = explain(&TopLeft, &img, &params).unwrap();
        let e = &out.explanations[0];
        assert_eq!(e.target, Class::Cnv);
        assert_eq!(e.selected[0].segment, 0);
        assert!(e.selected[0].weight > 0.0);
        assert!(e.weights[1..].iter().all(|w| w.abs() < 0.1 * e.weights[0]));
    }

    #[test]
    fn selection_is_a_prefix() {
        let out = explain(&TopLeft, &textured(), &LimeParams::default()).unwrap();
        let e = &out.explanations[0];
        let five = e.top(5);
        let ten = e.top(10);
        assert_eq!(five[..], ten[..5]);
        assert!(five.windows(2).all(|w| w[0].weight.abs() >= w[1].weight.abs()));
    }

    #[test]
    fn top_labels_saturate() {
        let p = LimeParams::default();
        assert_eq!(p.top_labels, 5);
        assert_eq!(p.effective_top_labels(), 4);
        assert_eq!(
            top_classes(&[0.2, 0.9, 0.2, 0.5], 4),
            vec![Class::Dme, Class::Normal, Class::Cnv, Class::Drusen]
        );
    }
}
