use serde::{Deserialize, Serialize};

use super::{Network, ParamGrads};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Descend,
    Ascend,
}

/// First/second moment accumulators stored flat, in parameter order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub cfg: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(param_count: usize, cfg: AdamConfig) -> Self {
        Self {
            cfg,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            t: 0,
        }
    }

    pub fn for_network(net: &Network, cfg: AdamConfig) -> Self {
        Self::new(net.param_count(), cfg)
    }

    /// Number of steps taken so far.
    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// One bias-corrected Adam update over matching parameter and gradient
    /// sequences. Ascending negates the gradient.
    pub fn step<'a, P, G>(&mut self, params: P, grads: G, direction: Direction) -> Result<()>
    where
        P: IntoIterator<Item = &'a mut f64>,
        G: IntoIterator<Item = f64>,
    {
        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.cfg;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        let sign = match direction {
            Direction::Descend => 1.0,
            Direction::Ascend => -1.0,
        };
        let mut count = 0;
        for (((p, g), m), v) in params
            .into_iter()
            .zip(grads)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            let g = sign * g;
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
            count += 1;
        }
        if count != self.m.len() {
            return Err(Error::Shape(format!(
                "adam state holds {} entries, got {count}",
                self.m.len()
            )));
        }
        Ok(())
    }
}

/// Adam update of a network in place.
pub fn adam_step(
    net: &mut Network,
    grads: &ParamGrads,
    state: &mut AdamState,
    direction: Direction,
) -> Result<()> {
    if !grads.all_finite() {
        return Err(Error::NonFinite("gradient".into()));
    }
    let same_shape = grads.layers.len() == net.layers.len()
        && grads
            .layers
            .iter()
            .zip(net.layers.iter())
            .all(|((w, b), l)| w.dim() == l.weight.dim() && b.len() == l.bias.len());
    if !same_shape || state.len() != net.param_count() {
        return Err(Error::Shape("gradients or optimizer state do not match network".into()));
    }
    state.step(net.params_mut(), grads.iter().copied(), direction)
}
