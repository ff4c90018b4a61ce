//! Parameter update rules. State and arithmetic are `f64`; parameters are
//! written back as `f32`.
//!
//! A tensor whose gradient is identically zero is left untouched, state
//! included, so a step with all-zero gradients is a no-op whatever the
//! accumulated momentum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Adam,
    SgdMomentum,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    /// Steps taken per tensor (bias correction is per tensor because
    /// zero-gradient tensors skip steps).
    pub t: Vec<u64>,
}

#[derive(Debug, Clone, Default)]
pub struct MomentumState {
    pub velocity: Vec<Vec<f64>>,
}

fn check(params: &[&mut Tensor<f32>], grads: &[Tensor<f64>]) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::dim("optimizer", "tensor count", params.len(), grads.len()));
    }
    for (p, g) in params.iter().zip(grads) {
        if p.shape() != g.shape() {
            return Err(Error::dim("optimizer", "tensor size", p.len(), g.len()));
        }
    }
    Ok(())
}

fn all_zero(g: &Tensor<f64>) -> bool {
    g.data().iter().all(|&v| v == 0.0)
}

pub fn adam_step(
    params: &mut [&mut Tensor<f32>],
    grads: &[Tensor<f64>],
    state: &mut AdamState,
    lr: f64,
    hyper: AdamHyper,
) -> Result<()> {
    check(params, grads)?;
    if state.m.is_empty() {
        state.m = grads.iter().map(|g| vec![0.0; g.len()]).collect();
        state.v = state.m.clone();
        state.t = vec![0; grads.len()];
    }
    for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        if all_zero(g) {
            continue;
        }
        state.t[k] += 1;
        let t = state.t[k] as i32;
        let c1 = 1.0 - hyper.beta1.powi(t);
        let c2 = 1.0 - hyper.beta2.powi(t);
        let (m, v) = (&mut state.m[k], &mut state.v[k]);
        for (i, (pv, &gv)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
            m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * gv;
            v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * gv * gv;
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            *pv = (*pv as f64 - lr * m_hat / (v_hat.sqrt() + hyper.eps)) as f32;
        }
    }
    Ok(())
}

/// `velocity = momentum·velocity + grad; param -= lr·velocity`.
pub fn sgd_momentum_step(
    params: &mut [&mut Tensor<f32>],
    grads: &[Tensor<f64>],
    state: &mut MomentumState,
    lr: f64,
    momentum: f64,
) -> Result<()> {
    check(params, grads)?;
    if state.velocity.is_empty() {
        state.velocity = grads.iter().map(|g| vec![0.0; g.len()]).collect();
    }
    for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        if all_zero(g) {
            continue;
        }
        let vel = &mut state.velocity[k];
        for (i, (pv, &gv)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
            vel[i] = momentum * vel[i] + gv;
            *pv = (*pv as f64 - lr * vel[i]) as f32;
        }
    }
    Ok(())
}

/// Optimizer with its state, selected by [`OptimizerKind`].
#[derive(Debug, Clone)]
pub enum Optimizer {
    Adam(AdamState, AdamHyper),
    SgdMomentum(MomentumState, f64),
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, momentum: f64) -> Self {
        match kind {
            OptimizerKind::Adam => Optimizer::Adam(AdamState::default(), AdamHyper::default()),
            OptimizerKind::SgdMomentum => Optimizer::SgdMomentum(MomentumState::default(), momentum),
        }
    }

    pub fn step(&mut self, params: &mut [&mut Tensor<f32>], grads: &[Tensor<f64>], lr: f64) -> Result<()> {
        match self {
            Optimizer::Adam(state, hyper) => adam_step(params, grads, state, lr, *hyper),
            Optimizer::SgdMomentum(state, momentum) => sgd_momentum_step(params, grads, state, lr, *momentum),
        }
    }
}
