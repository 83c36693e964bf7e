//! Adam optimizer and Polyak target updates over `MlpParams`.

use serde::{Deserialize, Serialize};

use super::mlp::{MlpGrads, MlpParams};
use super::NumError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    #[serde(skip, default)]
    m: Option<MlpGrads>,
    #[serde(skip, default)]
    v: Option<MlpGrads>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new() -> Self {
        AdamState { m: None, v: None, t: 0, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl Default for AdamState {
    fn default() -> Self {
        Self::new()
    }
}

/// One bias-corrected Adam step, in place.
pub fn adam_step(
    params: &mut MlpParams,
    grads: &MlpGrads,
    state: &mut AdamState,
    lr: f64,
) -> Result<(), NumError> {
    if !grads.is_finite() {
        return Err(NumError::NonFinite { what: "adam gradients".to_string() });
    }
    if lr <= 0.0 {
        return Err(NumError::NonFinite { what: format!("learning rate {lr}") });
    }
    let m = state.m.get_or_insert_with(|| MlpGrads::zeros_like(params));
    let v = state.v.get_or_insert_with(|| MlpGrads::zeros_like(params));
    state.t += 1;
    let t = state.t as f64;
    let bc1 = 1.0 - state.beta1.powf(t);
    let bc2 = 1.0 - state.beta2.powf(t);
    for (k, layer) in params.layers.iter_mut().enumerate() {
        let (gw, gb) = &grads.layers[k];
        let (mw, mb) = &mut m.layers[k];
        let (vw, vb) = &mut v.layers[k];
        for i in 0..layer.weight.data.len() {
            let g = gw.data[i];
            mw.data[i] = state.beta1 * mw.data[i] + (1.0 - state.beta1) * g;
            vw.data[i] = state.beta2 * vw.data[i] + (1.0 - state.beta2) * g * g;
            let mhat = mw.data[i] / bc1;
            let vhat = vw.data[i] / bc2;
            layer.weight.data[i] -= lr * mhat / (vhat.sqrt() + state.eps);
        }
        for i in 0..layer.bias.len() {
            let g = gb.0[i];
            mb.0[i] = state.beta1 * mb.0[i] + (1.0 - state.beta1) * g;
            vb.0[i] = state.beta2 * vb.0[i] + (1.0 - state.beta2) * g * g;
            let mhat = mb.0[i] / bc1;
            let vhat = vb.0[i] / bc2;
            layer.bias.0[i] -= lr * mhat / (vhat.sqrt() + state.eps);
        }
    }
    Ok(())
}

/// Polyak averaging: every target parameter moves to
/// `tau * online + (1 - tau) * target`.
pub fn soft_update(target: &mut MlpParams, online: &MlpParams, tau: f64) -> Result<(), NumError> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(NumError::NonFinite { what: format!("tau {tau}") });
    }
    if target.layers.len() != online.layers.len() {
        return Err(NumError::DimMismatch {
            what: "soft_update layers".to_string(),
            expected: target.layers.len(),
            got: online.layers.len(),
        });
    }
    for (t, o) in target.layers.iter_mut().zip(&online.layers) {
        if t.weight.data.len() != o.weight.data.len() || t.bias.len() != o.bias.len() {
            return Err(NumError::DimMismatch {
                what: "soft_update shapes".to_string(),
                expected: t.weight.data.len(),
                got: o.weight.data.len(),
            });
        }
        for (tw, ow) in t.weight.data.iter_mut().zip(&o.weight.data) {
            *tw = tau * ow + (1.0 - tau) * *tw;
        }
        for (tb, ob) in t.bias.0.iter_mut().zip(&o.bias.0) {
            *tb = tau * ob + (1.0 - tau) * *tb;
        }
    }
    Ok(())
}
