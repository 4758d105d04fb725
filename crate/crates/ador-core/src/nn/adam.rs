//! Adam with bias correction, shared by every network in the crate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

use super::{MlpGrads, MlpParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_hat: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps_hat: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..AdamConfig::default()
        }
    }
}

/// Whether the owning network climbs or descends the loss surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Ascend,
    Descend,
}

/// First/second moment accumulators mirroring one network's parameters.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<(Matrix, Option<Vec<f64>>)>,
    v: Vec<(Matrix, Option<Vec<f64>>)>,
    t: u64,
    pub cfg: AdamConfig,
}

impl AdamState {
    pub fn new(params: &MlpParams, cfg: AdamConfig) -> Self {
        let zeros = || {
            params
                .layers
                .iter()
                .map(|l| {
                    (
                        Matrix::zeros(l.weight.rows(), l.weight.cols()),
                        l.bias.as_ref().map(|b| vec![0.0; b.len()]),
                    )
                })
                .collect::<Vec<_>>()
        };
        AdamState {
            m: zeros(),
            v: zeros(),
            t: 0,
            cfg,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

#[inline]
fn adam_update(
    theta: &mut f64,
    m: &mut f64,
    v: &mut f64,
    g: f64,
    cfg: &AdamConfig,
    corr1: f64,
    corr2: f64,
    sign: f64,
) {
    *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
    *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
    let m_hat = *m / corr1;
    let v_hat = *v / corr2;
    *theta += sign * cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps_hat);
}

/// One Adam update of `params` along `grads`, ascending or descending.
pub fn adam_step(
    params: &mut MlpParams,
    grads: &MlpGrads,
    state: &mut AdamState,
    direction: Direction,
) -> Result<()> {
    if grads.layers.len() != params.layers.len() {
        return Err(Error::shape("gradient layer count mismatch"));
    }
    if !grads.is_finite() {
        return Err(Error::non_finite(state.t as usize, "gradients"));
    }
    state.t += 1;
    let corr1 = 1.0 - state.cfg.beta1.powi(state.t as i32);
    let corr2 = 1.0 - state.cfg.beta2.powi(state.t as i32);
    let sign = match direction {
        Direction::Ascend => 1.0,
        Direction::Descend => -1.0,
    };
    let cfg = state.cfg;
    for (l, layer) in params.layers.iter_mut().enumerate() {
        let (gw, gb) = &grads.layers[l];
        if gw.rows() != layer.weight.rows() || gw.cols() != layer.weight.cols() {
            return Err(Error::shape(format!("layer {l} weight gradient shape")));
        }
        let (mw, mb) = &mut state.m[l];
        let (vw, vb) = &mut state.v[l];
        {
            // flat in-place walk over the weight tensor
            let rows = layer.weight.rows();
            let cols = layer.weight.cols();
            for r in 0..rows {
                for c in 0..cols {
                    let mut theta = layer.weight.get(r, c);
                    let mut m = mw.get(r, c);
                    let mut v = vw.get(r, c);
                    adam_update(&mut theta, &mut m, &mut v, gw.get(r, c), &cfg, corr1, corr2, sign);
                    layer.weight.set(r, c, theta);
                    mw.set(r, c, m);
                    vw.set(r, c, v);
                }
            }
        }
        if let (Some(bias), Some(gb), Some(mb), Some(vb)) =
            (layer.bias.as_mut(), gb.as_ref(), mb.as_mut(), vb.as_mut())
        {
            for i in 0..bias.len() {
                adam_update(&mut bias[i], &mut mb[i], &mut vb[i], gb[i], &cfg, corr1, corr2, sign);
            }
        }
    }
    Ok(())
}
