//! Adam with L2 weight decay folded into the gradient and per-entry
//! freeze-mask support: frozen entries receive no update and no moment
//! accumulation.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expand::FreezeMask;
use crate::netcore::{Gradients, Network};

pub const DEFAULT_BETA1: f64 = 0.9;
pub const DEFAULT_BETA2: f64 = 0.999;
pub const DEFAULT_EPSILON: f64 = 1e-8;

/// First/second moment estimates per parameter, plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub moments: Vec<LayerMoments>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerMoments {
    pub m_weights: Array2<f64>,
    pub m_bias: Array1<f64>,
    pub v_weights: Array2<f64>,
    pub v_bias: Array1<f64>,
}

/// Zeroed moments shaped like `net`, `t = 0`.
pub fn adam_init(net: &Network, beta1: f64, beta2: f64, epsilon: f64) -> AdamState {
    AdamState {
        moments: net
            .layers()
            .iter()
            .map(|l| LayerMoments {
                m_weights: Array2::zeros(l.weights.dim()),
                m_bias: Array1::zeros(l.bias.len()),
                v_weights: Array2::zeros(l.weights.dim()),
                v_bias: Array1::zeros(l.bias.len()),
            })
            .collect(),
        t: 0,
        beta1,
        beta2,
        epsilon,
    }
}

impl AdamState {
    pub fn new(net: &Network) -> AdamState {
        adam_init(net, DEFAULT_BETA1, DEFAULT_BETA2, DEFAULT_EPSILON)
    }
}

/// Training hyperparameters for one regimen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub folds: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning_rate {} must be > 0",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Config("weight_decay must be >= 0".into()));
        }
        Ok(())
    }

    pub fn with_lr_epochs(&self, learning_rate: f64, epochs: usize) -> TrainConfig {
        TrainConfig {
            learning_rate,
            epochs,
            ..self.clone()
        }
    }
}

/// One Adam step over every unmasked parameter.
///
/// Weight decay is coupled into the gradient (`g + lambda * w`) and
/// applies to weights only, never biases. Masked entries keep their
/// parameter value and both moments bitwise unchanged. `t` increments
/// once per call.
pub fn adam_step(
    net: &mut Network,
    grads: &Gradients,
    state: &mut AdamState,
    cfg: &TrainConfig,
    mask: Option<&FreezeMask>,
) -> Result<()> {
    if grads.layers.len() != net.layers().len() || state.moments.len() != net.layers().len() {
        return Err(Error::ShapeMismatch(format!(
            "layer counts differ: net {}, grads {}, state {}",
            net.layers().len(),
            grads.layers.len(),
            state.moments.len()
        )));
    }
    if let Some(m) = mask {
        m.check_congruent(net)?;
    }
    for (l, layer) in net.layers().iter().enumerate() {
        let (dw, db) = &grads.layers[l];
        if dw.dim() != layer.weights.dim() || db.len() != layer.bias.len() {
            return Err(Error::ShapeMismatch(format!(
                "gradient shape {:?}/{} vs layer {l} {:?}/{}",
                dw.dim(),
                db.len(),
                layer.weights.dim(),
                layer.bias.len()
            )));
        }
    }

    state.t += 1;
    let t = state.t as i32;
    let bias_corr1 = 1.0 - state.beta1.powi(t);
    let bias_corr2 = 1.0 - state.beta2.powi(t);
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);
    let lr = cfg.learning_rate;
    let lambda = cfg.weight_decay;

    let update = |w: &mut f64, g: f64, m: &mut f64, v: &mut f64, decay: f64| {
        let g = g + decay * *w;
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / bias_corr1;
        let v_hat = *v / bias_corr2;
        *w -= lr * m_hat / (v_hat.sqrt() + eps);
    };

    for (l, layer) in net.layers_mut().iter_mut().enumerate() {
        let (dw, db) = &grads.layers[l];
        let mom = &mut state.moments[l];
        match mask.map(|m| &m.layers()[l]) {
            Some(layer_mask) => {
                ndarray::Zip::from(&mut layer.weights)
                    .and(dw)
                    .and(&mut mom.m_weights)
                    .and(&mut mom.v_weights)
                    .and(&layer_mask.0)
                    .for_each(|w, &g, m, v, &frozen| {
                        if !frozen {
                            update(w, g, m, v, lambda);
                        }
                    });
                ndarray::Zip::from(&mut layer.bias)
                    .and(db)
                    .and(&mut mom.m_bias)
                    .and(&mut mom.v_bias)
                    .and(&layer_mask.1)
                    .for_each(|w, &g, m, v, &frozen| {
                        if !frozen {
                            update(w, g, m, v, 0.0);
                        }
                    });
            }
            None => {
                ndarray::Zip::from(&mut layer.weights)
                    .and(dw)
                    .and(&mut mom.m_weights)
                    .and(&mut mom.v_weights)
                    .for_each(|w, &g, m, v| update(w, g, m, v, lambda));
                ndarray::Zip::from(&mut layer.bias)
                    .and(db)
                    .and(&mut mom.m_bias)
                    .and(&mut mom.v_bias)
                    .for_each(|w, &g, m, v| update(w, g, m, v, 0.0));
            }
        }
    }
    Ok(())
}
