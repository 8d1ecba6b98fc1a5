use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Gradients, Network};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Optimizer {
    Sgd {
        lr: f64,
    },
    Adam {
        lr: f64,
        #[serde(default = "AdamParams::default_beta1")]
        beta1: f64,
        #[serde(default = "AdamParams::default_beta2")]
        beta2: f64,
        #[serde(default = "AdamParams::default_epsilon")]
        epsilon: f64,
    },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::adam(1e-3)
    }
}

impl Optimizer {
    pub fn sgd(lr: f64) -> Self {
        Optimizer::Sgd { lr }
    }

    pub fn adam(lr: f64) -> Self {
        let p = AdamParams::new(lr);
        Optimizer::Adam {
            lr,
            beta1: p.beta1,
            beta2: p.beta2,
            epsilon: p.epsilon,
        }
    }

    pub fn learning_rate(&self) -> f64 {
        match *self {
            Optimizer::Sgd { lr } | Optimizer::Adam { lr, .. } => lr,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let lr = self.learning_rate();
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(Error::InvalidConfig(format!("learning rate must be >= 0, got {lr}")));
        }
        if let Optimizer::Adam {
            beta1,
            beta2,
            epsilon,
            ..
        } = *self
        {
            if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && epsilon > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "adam needs 0 <= beta < 1 and epsilon > 0, got beta1={beta1} beta2={beta2} epsilon={epsilon}"
                )));
            }
        }
        Ok(())
    }
}

/// `p ← p − lr·g`.
pub fn sgd_step(params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::dims("sgd_step", params.len(), grads.len()));
    }
    for (p, g) in params.iter_mut().zip(grads) {
        *p -= lr * g;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamParams {
    pub fn new(lr: f64) -> Self {
        AdamParams {
            lr,
            beta1: Self::default_beta1(),
            beta2: Self::default_beta2(),
            epsilon: Self::default_epsilon(),
        }
    }

    fn default_beta1() -> f64 {
        0.9
    }

    fn default_beta2() -> f64 {
        0.999
    }

    fn default_epsilon() -> f64 {
        1e-8
    }
}

/// First/second moment estimates for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    /// Number of steps taken so far.
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update; advances `state.t` by one.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, hp: AdamParams) -> Result<()> {
    if params.len() != grads.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::dims(
            "adam_step",
            format!("{} params", params.len()),
            format!("{} grads / {} moments", grads.len(), state.m.len()),
        ));
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - hp.beta1.powi(t);
    let c2 = 1.0 - hp.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        let m = hp.beta1 * state.m[i] + (1.0 - hp.beta1) * g;
        let v = hp.beta2 * state.v[i] + (1.0 - hp.beta2) * g * g;
        state.m[i] = m;
        state.v[i] = v;
        params[i] -= hp.lr * (m / c1) / ((v / c2).sqrt() + hp.epsilon);
    }
    Ok(())
}

#[derive(Debug, Clone)]
enum LayerState {
    Sgd,
    Adam { weights: AdamState, bias: AdamState },
}

/// Optimizer plus whatever per-parameter state it carries for one network.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    optimizer: Optimizer,
    layers: Vec<LayerState>,
}

impl OptimizerState {
    pub fn new(optimizer: Optimizer, net: &Network) -> Self {
        let layers = net
            .layers()
            .iter()
            .map(|l| match optimizer {
                Optimizer::Sgd { .. } => LayerState::Sgd,
                Optimizer::Adam { .. } => LayerState::Adam {
                    weights: AdamState::new(l.weights.as_slice().len()),
                    bias: AdamState::new(l.bias.len()),
                },
            })
            .collect();
        OptimizerState { optimizer, layers }
    }

    /// Applies `grads` to `net`. Biases are left alone when the network has
    /// `use_bias` off.
    pub fn step(&mut self, net: &mut Network, grads: &Gradients) -> Result<()> {
        if grads.layers.len() != net.layers().len() || self.layers.len() != net.layers().len() {
            return Err(Error::dims("optimizer step", net.layers().len(), grads.layers.len()));
        }
        let use_bias = net.use_bias();
        for ((layer, g), st) in net.layers_mut().iter_mut().zip(&grads.layers).zip(&mut self.layers) {
            match (self.optimizer, st) {
                (Optimizer::Sgd { lr }, LayerState::Sgd) => {
                    sgd_step(layer.weights.as_mut_slice(), g.weights.as_slice(), lr)?;
                    if use_bias {
                        sgd_step(&mut layer.bias, &g.bias, lr)?;
                    }
                }
                (
                    Optimizer::Adam {
                        lr,
                        beta1,
                        beta2,
                        epsilon,
                    },
                    LayerState::Adam { weights, bias },
                ) => {
                    let hp = AdamParams {
                        lr,
                        beta1,
                        beta2,
                        epsilon,
                    };
                    adam_step(layer.weights.as_mut_slice(), g.weights.as_slice(), weights, hp)?;
                    if use_bias {
                        adam_step(&mut layer.bias, &g.bias, bias, hp)?;
                    }
                }
                _ => unreachable!("state is built from the same optimizer"),
            }
        }
        Ok(())
    }
}
