//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use octx_core::gradcheck::{grad_check_at, relative_error, GradCheckReport, DEFAULT_FLOOR};
use octx_core::net::{loss_and_logit_grad, LossKind, Network};
use octx_core::ops::{self, ConvSpec, Mode, PoolSpec};
use octx_core::{Tensor, NUM_CLASSES};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn uniform(shape: &[usize], seed: u64, lo: f64, hi: f64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.gen_range(lo..hi))
}

pub fn uniform_f32(shape: &[usize], seed: u64) -> Tensor<f32> {
    uniform(shape, seed, 0.0, 1.0).cast()
}

/// Plain nested-loop convolution over HWC input and kh×kw×C×F kernel.
pub fn naive_conv(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>, stride: usize, pad: usize) -> Tensor<f64> {
    let (h, wd, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (kh, kw, f) = (w.shape()[0], w.shape()[1], w.shape()[3]);
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (wd + 2 * pad - kw) / stride + 1;
    let mut out = vec![0.0; oh * ow * f];
    for oy in 0..oh {
        for ox in 0..ow {
            for of in 0..f {
                let mut acc = b.data()[of];
                for ky in 0..kh {
                    for kx in 0..kw {
                        for ic in 0..c {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                continue;
                            }
                            let xv = x.data()[(iy as usize * wd + ix as usize) * c + ic];
                            let wv = w.data()[((ky * kw + kx) * c + ic) * f + of];
                            acc += xv * wv;
                        }
                    }
                }
                out[(oy * ow + ox) * f + of] = acc;
            }
        }
    }
    Tensor::new(&[oh, ow, f], out).unwrap()
}

pub fn naive_dense(x: &[f64], w: &Tensor<f64>, b: &[f64]) -> Vec<f64> {
    let (n, m) = (w.shape()[0], w.shape()[1]);
    (0..m)
        .map(|j| b[j] + (0..n).map(|i| x[i] * w.data()[i * m + j]).sum::<f64>())
        .collect()
}

/// Max over every window, enumerated directly.
pub fn naive_pool(x: &Tensor<f64>, window: usize, stride: usize) -> Tensor<f64> {
    let (h, w, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (oh, ow) = ((h - window) / stride + 1, (w - window) / stride + 1);
    Tensor::from_fn(&[oh, ow, c], |i| {
        let (oy, ox, ch) = (i / (ow * c), (i / c) % ow, i % c);
        let mut best = f64::NEG_INFINITY;
        for dy in 0..window {
            for dx in 0..window {
                best = best.max(x.data()[((oy * stride + dy) * w + ox * stride + dx) * c + ch]);
            }
        }
        best
    })
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

fn all(n: usize) -> Vec<usize> {
    (0..n).collect()
}

/// One line of the gradient suite.
#[derive(Debug)]
pub struct GradLine {
    pub name: &'static str,
    pub report: GradCheckReport,
}

/// Central-difference checks (ε = 1e-3) for each primitive against its
/// analytic backward pass.
pub fn primitive_gradient_suite() -> Vec<GradLine> {
    let eps = 1e-3;
    let mut lines = Vec::new();
    let mut push = |name, report| lines.push(GradLine { name, report });

    // Convolution: 5×5×1 input, 3×3×1×2 kernel, and a strided padded case.
    for (name, shape, spec) in [
        ("conv 3x3 valid", [5, 5, 1], ConvSpec::valid(3, 1, 2, 1)),
        ("conv 3x3 same", [6, 6, 2], ConvSpec::same(3, 2, 3)),
        ("conv 5x5 stride 2", [9, 9, 3], ConvSpec::valid(5, 3, 2, 2)),
    ] {
        let x = uniform(&shape, 11, -1.0, 1.0);
        let w = uniform(&spec.weight_shape(), 12, -1.0, 1.0);
        let b = uniform(&[spec.out_channels], 13, -1.0, 1.0);
        let probe = ops::conv2d(&x, &w, &b, &spec).unwrap();
        let u = uniform(probe.shape(), 14, -1.0, 1.0);
        let (gx, gw, gb) = ops::conv2d_grad(&x, &w, &spec, &u).unwrap();
        let rx = grad_check_at(|t| dot(&u, &ops::conv2d(t, &w, &b, &spec).unwrap()), &x, &gx, eps, &all(x.len()), DEFAULT_FLOOR);
        let rw = grad_check_at(|t| dot(&u, &ops::conv2d(&x, t, &b, &spec).unwrap()), &w, &gw, eps, &all(w.len()), DEFAULT_FLOOR);
        let rb = grad_check_at(|t| dot(&u, &ops::conv2d(&x, &w, t, &spec).unwrap()), &b, &gb, eps, &all(b.len()), DEFAULT_FLOOR);
        let worst = [rx, rw, rb]
            .into_iter()
            .max_by(|a, b| a.max_relative_error.total_cmp(&b.max_relative_error))
            .unwrap();
        push(name, worst);
    }

    // Max-pool on a random 7×7 input, weighted pooled sum.
    {
        let x = uniform(&[7, 7, 2], 21, -1.0, 1.0);
        let spec = PoolSpec::default();
        let (y, map) = ops::maxpool2d(&x, &spec).unwrap();
        let u = uniform(y.shape(), 22, 0.5, 1.5);
        let g = ops::maxpool2d_grad(&map, &u, x.shape()).unwrap();
        let r = grad_check_at(|t| dot(&u, &ops::maxpool2d(t, &spec).unwrap().0), &x, &g, eps, &all(x.len()), DEFAULT_FLOOR);
        push("maxpool 3/2", r);
    }

    // Dense 8 → 3.
    {
        let x = uniform(&[8], 31, -1.0, 1.0);
        let w = uniform(&[8, 3], 32, -1.0, 1.0);
        let b = uniform(&[3], 33, -1.0, 1.0);
        let u = uniform(&[3], 34, -1.0, 1.0);
        let (gx, gw, gb) = ops::dense_grad(&x, &w, &u).unwrap();
        let rx = grad_check_at(|t| dot(&u, &ops::dense(t, &w, &b).unwrap()), &x, &gx, eps, &all(8), DEFAULT_FLOOR);
        let rw = grad_check_at(|t| dot(&u, &ops::dense(&x, t, &b).unwrap()), &w, &gw, eps, &all(24), DEFAULT_FLOOR);
        let rb = grad_check_at(|t| dot(&u, &ops::dense(&x, &w, t).unwrap()), &b, &gb, eps, &all(3), DEFAULT_FLOOR);
        let worst = [rx, rw, rb]
            .into_iter()
            .max_by(|a, b| a.max_relative_error.total_cmp(&b.max_relative_error))
            .unwrap();
        push("dense 8x3", worst);
    }

    // Element-wise activations on 100 random points.
    {
        let x = uniform(&[100], 41, -4.0, 4.0);
        let g = x.map(ops::relu_grad);
        let r = grad_check_at(|t| t.data().iter().map(|&v| ops::relu(v)).sum(), &x, &g, eps, &all(100), DEFAULT_FLOOR);
        push("relu", r);
        let g = x.map(ops::sigmoid_grad);
        let r = grad_check_at(|t| t.data().iter().map(|&v| ops::sigmoid(v)).sum(), &x, &g, eps, &all(100), DEFAULT_FLOOR);
        push("sigmoid", r);
    }

    // Dropout with a fixed seed is linear in its input.
    {
        let x = uniform(&[64], 51, -1.0, 1.0);
        let u = uniform(&[64], 52, -1.0, 1.0);
        let scale = ops::dropout_scale::<f64>(64, 0.5, 9).unwrap();
        let g = Tensor::new(&[64], u.data().iter().zip(&scale).map(|(a, s)| a * s).collect()).unwrap();
        let r = grad_check_at(
            |t| dot(&u, &ops::dropout(t, 0.5, Mode::Train, 9).unwrap()),
            &x,
            &g,
            eps,
            &all(64),
            DEFAULT_FLOOR,
        );
        push("dropout", r);
    }

    // Both loss heads with respect to the logits.
    for (name, kind) in [("bce loss", LossKind::BceSigmoid), ("softmax ce loss", LossKind::SoftmaxCe)] {
        let z = uniform(&[NUM_CLASSES], 61, -3.0, 3.0);
        let target = [0.0f32, 0.0, 1.0, 0.0];
        let g = Tensor::new(&[NUM_CLASSES], loss_and_logit_grad(&z, &target, kind).1).unwrap();
        let r = grad_check_at(|t| loss_and_logit_grad(t, &target, kind).0, &z, &g, eps, &all(NUM_CLASSES), DEFAULT_FLOOR);
        push(name, r);
    }
    lines
}

/// `count` parameter indices with non-zero analytic gradient, drawn
/// round-robin over the parameter tensors so every layer is represented.
pub fn sampled_parameter_indices(net: &Network<f64>, analytic: &[f64], count: usize, seed: u64) -> Vec<usize> {
    let sizes: Vec<usize> = net.params().iter().map(|p| p.len()).collect();
    let mut offsets = vec![0];
    for s in &sizes {
        offsets.push(offsets.last().unwrap() + s);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = Vec::with_capacity(count);
    let mut t = 0;
    let mut misses = 0;
    while picked.len() < count {
        let i = offsets[t] + rng.gen_range(0..sizes[t]);
        if analytic[i] != 0.0 && !picked.contains(&i) {
            picked.push(i);
            misses = 0;
        } else {
            misses += 1;
            assert!(misses < 100_000, "too few parameters with non-zero gradient");
            if misses % 50 != 0 {
                continue;
            }
        }
        t = (t + 1) % sizes.len();
    }
    picked
}

/// End-to-end check of the network loss on one image against central
/// differences on sampled parameters, in f64. A step of 1e-6 keeps the
/// perturbation clear of ReLU and max-pool switching points; larger steps
/// on first-layer weights routinely cross one somewhere in the 110×110 map.
pub fn network_gradient_check(count: usize, eps: f64) -> GradCheckReport {
    let mut net: Network<f64> = Network::build(5);
    // Non-zero biases so bias gradients are exercised away from the origin.
    for p in net.params_mut() {
        if p.shape().len() == 1 {
            let fresh = uniform(p.shape(), p.len() as u64, -0.05, 0.05);
            *p = fresh;
        }
    }
    let image = uniform(&[224, 224, 3], 77, 0.0, 1.0);
    let target = [0.0f32, 1.0, 0.0, 0.0];
    let kind = LossKind::BceSigmoid;
    let seed = 3;
    let labels = Tensor::new(&[1, NUM_CLASSES], target.to_vec()).unwrap();
    let grads = octx_core::net::batch_grad(&net, std::slice::from_ref(&image), &labels, kind, Mode::Train, seed).unwrap();
    let flat_grad: Vec<f64> = grads.grads.iter().flat_map(|g| g.data().to_vec()).collect();
    let flat = Tensor::new(&[flat_grad.len()], net.flat_params()).unwrap();
    let analytic = Tensor::new(&[flat_grad.len()], flat_grad).unwrap();
    let indices = sampled_parameter_indices(&net, analytic.data(), count, 99);
    let probe = std::cell::RefCell::new(net.clone());
    let loss = |theta: &Tensor<f64>| {
        let mut n = probe.borrow_mut();
        n.set_flat_params(theta.data()).unwrap();
        let fwd = n.forward_seeded(&image, Mode::Train, seed).unwrap();
        loss_and_logit_grad(fwd.trace.logits(), &target, kind).0
    };
    grad_check_at(loss, &flat, &analytic, eps, &indices, DEFAULT_FLOOR)
}

/// Weighted ridge with an unpenalised intercept, solved directly on the
/// augmented normal equations `(XᵀWX + D) θ = XᵀWy` by LU.
pub fn ridge_oracle(masks: &[Vec<bool>], y: &[f64], w: &[f64], lambda: f64) -> (Vec<f64>, f64) {
    let n = masks.len();
    let s = masks[0].len();
    let x = DMatrix::from_fn(n, s + 1, |i, j| if j == 0 { 1.0 } else if masks[i][j - 1] { 1.0 } else { 0.0 });
    let wm = DMatrix::from_diagonal(&DVector::from_column_slice(w));
    let mut lhs = x.transpose() * &wm * &x;
    for j in 1..=s {
        lhs[(j, j)] += lambda;
    }
    let rhs = x.transpose() * &wm * DVector::from_column_slice(y);
    let theta = lhs.lu().solve(&rhs).expect("oracle system solvable");
    (theta.iter().skip(1).copied().collect(), theta[0])
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn rel(a: f64, b: f64) -> f64 {
    relative_error(a, b, DEFAULT_FLOOR)
}
