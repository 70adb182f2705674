use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;
/// Gradients (including the decay term) are rescaled to at most this
/// global L2 norm.
pub const CLIP_NORM: f64 = 10.0;

/// First and second moment estimates, one pair per parameter tensor.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }
}

/// One Adam update. `grads[i]` of `None` marks a frozen tensor, which is
/// left untouched. Weight decay `wd * theta` is added to each gradient
/// before clipping. Returns `false`, leaving everything unchanged, when a
/// gradient is not finite.
pub fn optimizer_step(
    params: &mut [&mut Tensor],
    grads: &[Option<&Tensor>],
    state: &mut AdamState,
    lr: f64,
    weight_decay: f64,
) -> Result<bool> {
    if params.len() != grads.len() {
        return Err(Error::Usage(format!(
            "{} parameters but {} gradients",
            params.len(),
            grads.len()
        )));
    }
    if state.m.is_empty() {
        state.m = params.iter().map(|p| vec![0.0; p.len()]).collect();
        state.v = state.m.clone();
    }
    if state.m.len() != params.len() {
        return Err(Error::Usage("optimizer state belongs to a different model".into()));
    }

    let mut total: Vec<Option<Vec<f64>>> = Vec::with_capacity(params.len());
    for (p, g) in params.iter().zip(grads) {
        match g {
            Some(g) => {
                if g.shape() != p.shape() {
                    return Err(Error::dim("optimizer_step", g.shape(), p.shape()));
                }
                if !g.is_finite() {
                    log::warn!("non-finite gradient; skipping optimizer step");
                    return Ok(false);
                }
                let d = g
                    .data()
                    .iter()
                    .zip(p.data())
                    .map(|(&g, &w)| g + weight_decay * w)
                    .collect();
                total.push(Some(d));
            }
            None => total.push(None),
        }
    }
    let norm = total
        .iter()
        .flatten()
        .flat_map(|d| d.iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt();
    let scale = if norm > CLIP_NORM { CLIP_NORM / norm } else { 1.0 };

    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - BETA1.powi(t);
    let c2 = 1.0 - BETA2.powi(t);
    for (i, d) in total.into_iter().enumerate() {
        let Some(d) = d else { continue };
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (k, w) in params[i].data_mut().iter_mut().enumerate() {
            let g = d[k] * scale;
            m[k] = BETA1 * m[k] + (1.0 - BETA1) * g;
            v[k] = BETA2 * v[k] + (1.0 - BETA2) * g * g;
            let m_hat = m[k] / c1;
            let v_hat = v[k] / c2;
            *w -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
    Ok(true)
}
