mod common;

use common::{max_abs_diff, ridge_oracle, uniform, uniform_f32};
use octx_core::gradcam::{cam_from_parts, gradcam, heatmap_from_raw, ramp, render_heatmap, HEATMAP_ALPHA};
use octx_core::lime::{
    cosine_distance_to_ones, enumerate_masks, explain, fit_surrogate, kernel_weights, Classifier, LimeParams,
};
use octx_core::net::Layer;
use octx_core::ops::{dense, dense_grad, maxpool2d, maxpool2d_grad, PoolSpec};
use octx_core::{Class, Network, Result, Tensor, NUM_CLASSES};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Class probabilities are fixed linear functions of quadrant brightness.
struct Quadrants;

impl Classifier for Quadrants {
    fn probabilities(&self, image: &Tensor<f32>) -> Result<[f32; NUM_CLASSES]> {
        let mut q = [0f32; 4];
        for (i, px) in image.data().chunks(3).enumerate() {
            let (y, x) = (i / 224, i % 224);
            q[(y / 112) * 2 + x / 112] += px[0] / (112.0 * 112.0);
        }
        Ok([
            0.6 * q[0] + 0.2 * q[3],
            0.5 * q[1],
            0.3 * q[2] + 0.1,
            0.4 * q[3] - 0.1 * q[0] + 0.2,
        ])
    }
}

fn ridge_case(s: usize, seed: u64, lambda: f64) -> f64 {
    let masks = enumerate_masks(s);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y: Vec<f64> = masks.iter().map(|_| rng.gen_range(0.0..1.0)).collect();
    let (w, zero) = kernel_weights(&masks, 0.25);
    assert_eq!(zero, vec![masks.len() - 1]);
    let fit = fit_surrogate(&masks, &y, &w, lambda).unwrap();
    let (beta, b0) = ridge_oracle(&masks, &y, &w, lambda);
    max_abs_diff(&fit.coefficients, &beta).max((fit.intercept - b0).abs())
}

#[test]
fn surrogate_matches_normal_equations_for_every_small_s() {
    for s in 1..=10 {
        for (k, lambda) in [0.0, 0.1, 1.0, 10.0].into_iter().enumerate() {
            let err = ridge_case(s, 100 + s as u64 * 4 + k as u64, lambda);
            assert!(err < 1e-6, "S={s} lambda={lambda}: {err:e}");
        }
    }
}

#[test]
fn surrogate_solves_its_normal_equations() {
    let s = 6;
    let masks = enumerate_masks(s);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let y: Vec<f64> = masks.iter().map(|_| rng.gen_range(-1.0..1.0)).collect();
    let w: Vec<f64> = masks.iter().map(|_| rng.gen_range(0.1..2.0)).collect();
    let lambda = 0.7;
    let fit = fit_surrogate(&masks, &y, &w, lambda).unwrap();
    let resid: Vec<f64> = masks.iter().zip(&y).map(|(m, y)| y - fit.predict(m)).collect();
    // d/dβ₀ and d/dβⱼ of the penalised weighted loss vanish at the optimum.
    let g0: f64 = w.iter().zip(&resid).map(|(w, r)| w * r).sum();
    assert!(g0.abs() < 1e-9);
    for j in 0..s {
        let gj: f64 = (0..masks.len()).filter(|&i| masks[i][j]).map(|i| w[i] * resid[i]).sum::<f64>()
            - lambda * fit.coefficients[j];
        assert!(gj.abs() < 1e-9, "coordinate {j}: {gj:e}");
    }
}

#[test]
fn duplicated_samples_weigh_more_against_the_penalty() {
    let masks = enumerate_masks(4);
    let y: Vec<f64> = masks.iter().map(|m| if m[0] { 0.9 } else { 0.2 }).collect();
    let w = vec![1.0; masks.len()];
    let once = fit_surrogate(&masks, &y, &w, 4.0).unwrap();
    let twice_masks: Vec<Vec<bool>> = masks.iter().chain(&masks).cloned().collect();
    let twice_y: Vec<f64> = y.iter().chain(&y).copied().collect();
    let twice = fit_surrogate(&twice_masks, &twice_y, &vec![1.0; twice_masks.len()], 4.0).unwrap();
    let norm = |b: &[f64]| b.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(norm(&twice.coefficients) >= norm(&once.coefficients));
    // Doubling the data is the same as halving lambda.
    let half = fit_surrogate(&masks, &y, &w, 2.0).unwrap();
    assert!(max_abs_diff(&twice.coefficients, &half.coefficients) < 1e-12);
}

#[test]
fn cosine_distance_by_hand() {
    // (1,1,0,0)·(1,1,1,1) = 2, norms sqrt(2) and 2.
    let d = cosine_distance_to_ones(&[true, true, false, false]).unwrap();
    assert!((d - (1.0 - 2.0 / (2f64.sqrt() * 2.0))).abs() < 1e-15);
    assert_eq!(cosine_distance_to_ones(&[true; 7]), Some(0.0));
    assert_eq!(cosine_distance_to_ones(&[false; 3]), None);
}

#[test]
fn explanation_is_seeded_and_selection_nests() {
    let img = uniform_f32(&[224, 224, 3], 21);
    let params = LimeParams {
        num_samples: 120,
        segments: 16,
        ..LimeParams::default()
    };
    let a = explain(&Quadrants, &img, &params).unwrap();
    let b = explain(&Quadrants, &img, &params).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.to_json(), b.to_json());
    let c = explain(&Quadrants, &img, &LimeParams { seed: 1, ..params.clone() }).unwrap();
    assert_ne!(a.explanations[0].weights, c.explanations[0].weights);

    let ten = explain(&Quadrants, &img, &LimeParams { num_features: 10, ..params.clone() }).unwrap();
    for (five, ten) in a.explanations.iter().zip(&ten.explanations) {
        assert_eq!(five.selected.len(), 5);
        assert_eq!(five.selected[..], ten.selected[..5]);
        assert_eq!(five.with_features(10).selected, ten.selected);
    }
    assert_eq!(a.explanations.len(), 4);
}

#[test]
fn explanation_finds_the_driving_quadrant() {
    let img = Tensor::full(&[224, 224, 3], 0.8f32);
    let params = LimeParams {
        num_samples: 400,
        segments: 16,
        baseline: octx_core::lime::Baseline::Gray,
        ..LimeParams::default()
    };
    let out = explain(&Quadrants, &img, &params).unwrap();
    let dme = out.explanations.iter().find(|e| e.target == Class::Dme).unwrap();
    // 4×4 grid: segments 2, 3, 6, 7 cover the top-right quadrant.
    let mut top: Vec<usize> = dme.top(4).iter().map(|s| s.segment).collect();
    top.sort();
    assert_eq!(top, vec![2, 3, 6, 7]);
    assert!(dme.top(4).iter().all(|s| s.weight > 0.0));
}

/// The 2×2, two-channel instance: A₀ = [[1,2],[3,4]], A₁ = [[0.5,0],[2,1]],
/// global max pool, then a dense layer whose class-0 column is (0.8, -0.4).
#[test]
fn gradcam_hand_instance() {
    let a0 = [1.0, 2.0, 3.0, 4.0];
    let a1 = [0.5, 0.0, 2.0, 1.0];
    let act = Tensor::<f64>::from_fn(&[2, 2, 2], |i| if i % 2 == 0 { a0[i / 2] } else { a1[i / 2] });
    let spec = PoolSpec { window: 2, stride: 2 };
    let (pooled, argmax) = maxpool2d(&act, &spec).unwrap();
    let flat = Tensor::new(&[2], pooled.data().to_vec()).unwrap();
    let w = Tensor::new(&[2, 4], vec![0.8, 0.1, 0.0, 0.0, -0.4, 0.3, 0.0, 0.0]).unwrap();
    let score = dense(&flat, &w, &Tensor::zeros(&[4])).unwrap();
    assert!((score.data()[0] - (0.8 * 4.0 - 0.4 * 2.0)).abs() < 1e-12);
    let onehot = Tensor::new(&[4], vec![1.0, 0.0, 0.0, 0.0]).unwrap();
    let (g_flat, _, _) = dense_grad(&flat, &w, &onehot).unwrap();
    let g_pooled = Tensor::new(&[1, 1, 2], g_flat.data().to_vec()).unwrap();
    let g_act = maxpool2d_grad(&argmax, &g_pooled, act.shape()).unwrap();

    let (alphas, raw) = cam_from_parts(&act, &g_act).unwrap();
    // Each map's gradient is non-zero only at its argmax, so α = weight / 4.
    assert!(max_abs_diff(&alphas, &[0.2, -0.1]) < 1e-6);
    assert!(max_abs_diff(&raw, &[0.15, 0.4, 0.4, 0.7]) < 1e-6);
    let hm = heatmap_from_raw(Class::Cnv, raw, 2, 2, alphas);
    assert!(!hm.empty);
    let max = hm.upsampled.iter().copied().fold(0.0, f64::max);
    assert!((max - 1.0).abs() < 1e-12);
}

#[test]
fn zeroed_class_column_gives_an_empty_map() {
    let mut net = Network::<f64>::build(8);
    let last = net.layers_mut().len() - 1;
    if let Layer::Dense { weights, .. } = &mut net.layers_mut()[last] {
        let m = weights.shape()[1];
        for (i, v) in weights.data_mut().iter_mut().enumerate() {
            if i % m == Class::Drusen.index() {
                *v = 0.0;
            }
        }
    } else {
        panic!("last layer is dense");
    }
    let img = uniform(&[224, 224, 3], 4, 0.0, 1.0);
    let hm = gradcam(&net, &img, Class::Drusen).unwrap();
    assert!(hm.alphas.iter().all(|&a| a == 0.0));
    assert!(hm.empty);
    assert!(hm.upsampled.iter().all(|&v| v == 0.0));
}

#[test]
fn raw_maps_are_non_negative_on_random_inputs() {
    let net = Network::<f32>::build(13);
    let bad: Vec<u64> = (0..100u64)
        .into_par_iter()
        .filter(|&seed| {
            let img = uniform_f32(&[224, 224, 3], 1000 + seed);
            let class = Class::ALL[seed as usize % 4];
            let hm = gradcam(&net, &img, class).unwrap();
            let ok = hm.raw.len() == 144
                && hm.raw.iter().all(|&v| v >= 0.0)
                && hm.upsampled.iter().all(|&v| (0.0..=1.0 + 1e-12).contains(&v));
            !ok
        })
        .collect();
    assert!(bad.is_empty(), "negative or out-of-range maps for seeds {bad:?}");
}

#[test]
fn scaling_activations_keeps_the_normalised_map() {
    let act = uniform(&[12, 12, 5], 31, 0.0, 2.0);
    let grad = uniform(&[12, 12, 5], 32, -1.0, 1.0);
    let scaled = Tensor::from_fn(&[12, 12, 5], |i| act.data()[i] * 3.0);
    let (a1, r1) = cam_from_parts(&act, &grad).unwrap();
    let (a2, r2) = cam_from_parts(&scaled, &grad).unwrap();
    assert_eq!(a1, a2);
    let h1 = heatmap_from_raw(Class::Normal, r1, 12, 12, a1);
    let h2 = heatmap_from_raw(Class::Normal, r2, 12, 12, a2);
    assert!(max_abs_diff(&h1.upsampled, &h2.upsampled) < 1e-12);
}

#[test]
fn heatmap_blend_matches_per_pixel_formula() {
    let img = uniform_f32(&[224, 224, 3], 55);
    let raw: Vec<f64> = (0..144).map(|i| (i % 17) as f64).collect();
    let hm = heatmap_from_raw(Class::Cnv, raw, 12, 12, vec![]);
    let out = render_heatmap(&img, &hm, HEATMAP_ALPHA).unwrap();
    for (i, px) in out.pixels().enumerate().step_by(97) {
        let jet = ramp(hm.upsampled[i]);
        for c in 0..3 {
            let src = img.data()[i * 3 + c] as f64;
            let want = (1.0 - HEATMAP_ALPHA) * src + HEATMAP_ALPHA * jet[c] as f64 / 255.0;
            assert_eq!(px.0[c], (want.clamp(0.0, 1.0) * 255.0).round() as u8, "pixel {i} channel {c}");
        }
    }
}
