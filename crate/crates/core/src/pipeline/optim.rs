//! AdamW with decoupled weight decay and bias-corrected moments, operating on
//! anything that exposes named parameter tensors.

use crate::model::ParamTensors;
use crate::{CoreError, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-2,
        }
    }
}

impl AdamWConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.lr.is_finite() || self.lr < 0.0 {
            return Err(CoreError::invalid(format!(
                "learning rate must be finite and >= 0, got {}",
                self.lr
            )));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(CoreError::invalid(format!("{name} must be in [0, 1), got {b}")));
            }
        }
        if !self.eps.is_finite() || self.eps <= 0.0 {
            return Err(CoreError::invalid("eps must be finite and positive"));
        }
        if !self.weight_decay.is_finite() || self.weight_decay < 0.0 {
            return Err(CoreError::invalid("weight decay must be finite and >= 0"));
        }
        Ok(())
    }
}

/// First/second moment buffers, one pair per named tensor in walk order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamWState {
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamWState {
    pub fn new<P: ParamTensors>(params: &P) -> Self {
        let sizes: Vec<usize> = params.named_tensors().iter().map(|(_, t)| t.numel()).collect();
        AdamWState {
            step: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One AdamW update in place:
///
///   m ← β₁ m + (1−β₁) g        v ← β₂ v + (1−β₂) g²
///   p ← p − lr · ( m̂ / (√v̂ + ε) + wd · p )
///
/// with m̂, v̂ the bias-corrected moments. Gradients must carry the same
/// tensor names and shapes as the parameters.
pub fn adamw_step<P: ParamTensors>(
    params: &mut P,
    grads: &P,
    state: &mut AdamWState,
    cfg: &AdamWConfig,
) -> Result<()> {
    cfg.validate()?;
    {
        let ps = params.named_tensors();
        let gs = grads.named_tensors();
        if ps.len() != gs.len() || ps.len() != state.m.len() {
            return Err(CoreError::shape(format!(
                "optimizer saw {} parameter tensors, {} gradient tensors, state for {}",
                ps.len(),
                gs.len(),
                state.m.len()
            )));
        }
        for (i, ((pn, pt), (gn, gt))) in ps.iter().zip(&gs).enumerate() {
            if pn != gn || pt.dims() != gt.dims() {
                return Err(CoreError::shape(format!(
                    "gradient {gn} {:?} does not match parameter {pn} {:?}",
                    gt.dims(),
                    pt.dims()
                )));
            }
            if state.m[i].len() != pt.numel() {
                return Err(CoreError::shape(format!(
                    "optimizer state for {pn} has {} entries, parameter has {}",
                    state.m[i].len(),
                    pt.numel()
                )));
            }
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);

    let grad_data: Vec<Vec<f64>> = grads
        .named_tensors()
        .iter()
        .map(|(_, g)| g.data().to_vec())
        .collect();
    for (i, (_, p)) in params.named_tensors_mut().into_iter().enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (k, slot) in p.data_mut().iter_mut().enumerate() {
            let g = grad_data[i][k];
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g;
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g * g;
            let m_hat = m[k] / bc1;
            let v_hat = v[k] / bc2;
            *slot -= cfg.lr * (m_hat / (v_hat.sqrt() + cfg.eps) + cfg.weight_decay * *slot);
        }
    }
    Ok(())
}
