use ndarray::{Array2, Axis, Zip};
use serde::{Deserialize, Serialize};

/// Element-wise (or row-wise, for softmax) nonlinearity applied after a dense layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    Relu,
    LeakyRelu { alpha: f64 },
    Sigmoid,
    Tanh,
    Softmax,
    Identity,
}

impl Activation {
    pub(crate) fn validate(&self) -> Result<(), String> {
        match *self {
            Activation::LeakyRelu { alpha } if !(alpha > 0.0 && alpha < 1.0) => {
                Err(format!("leaky_relu alpha must lie in (0,1), got {alpha}"))
            }
            _ => Ok(()),
        }
    }

    /// Applies the activation in place.
    pub(crate) fn apply(&self, z: &mut Array2<f64>) {
        match *self {
            Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
            Activation::LeakyRelu { alpha } => {
                z.mapv_inplace(|v| if v > 0.0 { v } else { alpha * v })
            }
            Activation::Sigmoid => z.mapv_inplace(sigmoid),
            Activation::Tanh => z.mapv_inplace(f64::tanh),
            Activation::Identity => {}
            Activation::Softmax => {
                for mut row in z.axis_iter_mut(Axis(0)) {
                    let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                    row.mapv_inplace(|v| (v - max).exp());
                    let sum = row.sum();
                    row.mapv_inplace(|v| v / sum);
                }
            }
        }
    }

    /// Turns the gradient w.r.t. the activation output into the gradient
    /// w.r.t. the pre-activation, using only the cached output `y`.
    pub(crate) fn backprop(&self, grad: &mut Array2<f64>, y: &Array2<f64>) {
        match *self {
            Activation::Relu => Zip::from(grad).and(y).for_each(|g, &y| {
                if y <= 0.0 {
                    *g = 0.0;
                }
            }),
            // alpha > 0, so the output keeps the sign of the pre-activation
            Activation::LeakyRelu { alpha } => Zip::from(grad).and(y).for_each(|g, &y| {
                if y <= 0.0 {
                    *g *= alpha;
                }
            }),
            Activation::Sigmoid => Zip::from(grad).and(y).for_each(|g, &y| *g *= y * (1.0 - y)),
            Activation::Tanh => Zip::from(grad).and(y).for_each(|g, &y| *g *= 1.0 - y * y),
            Activation::Identity => {}
            Activation::Softmax => {
                for (mut g, yr) in grad.axis_iter_mut(Axis(0)).zip(y.axis_iter(Axis(0))) {
                    let dot: f64 = g.iter().zip(yr.iter()).map(|(a, b)| a * b).sum();
                    Zip::from(&mut g).and(&yr).for_each(|g, &y| *g = y * (*g - dot));
                }
            }
        }
    }
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}
