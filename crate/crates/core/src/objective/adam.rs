//! Adam optimiser over the flat parameter vector of a [`NetworkParams`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::NetworkParams;
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

/// Moment estimates, in the flat order weights, biases, log c, log σ.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(params: &NetworkParams, config: AdamConfig) -> Self {
        let n = params.n_params();
        Self {
            config,
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }
}

/// Applies one bias-corrected Adam update to `params` in place.
pub fn adam_step(params: &mut NetworkParams, grad: &NetworkParams, state: &mut AdamState) -> Result<()> {
    let n = params.n_params();
    if grad.n_params() != n || state.m.len() != n || state.v.len() != n {
        return Err(Error::Shape(format!(
            "Adam buffers ({}) do not match {} parameters",
            state.m.len(),
            n
        )));
    }
    state.step += 1;
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    let update = move |x: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        *x -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
    };

    let nw = params.weight.len();
    let (mw, mrest) = state.m.split_at_mut(nw);
    let (vw, vrest) = state.v.split_at_mut(nw);
    let chunk = params.width().max(1024);
    par::for_each_zip3_mut(&mut params.weight, mw, vw, chunk, |offset, xs, ms, vs| {
        let gs = &grad.weight[offset..offset + xs.len()];
        for (((x, &g), m), v) in xs.iter_mut().zip(gs).zip(ms.iter_mut()).zip(vs.iter_mut()) {
            update(x, g, m, v);
        }
    });

    let nb = params.bias.len();
    for k in 0..nb {
        update(&mut params.bias[k], grad.bias[k], &mut mrest[k], &mut vrest[k]);
    }
    update(&mut params.glow.log_c, grad.glow.log_c, &mut mrest[nb], &mut vrest[nb]);
    update(
        &mut params.glow.log_sigma,
        grad.glow.log_sigma,
        &mut mrest[nb + 1],
        &mut vrest[nb + 1],
    );
    Ok(())
}
