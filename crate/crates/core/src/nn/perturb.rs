use serde::{Deserialize, Serialize};

use super::{Network, SeededRng};
use crate::error::{Error, Result};

/// How the radius of the per-coordinate perturbation box is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum SigmaRule {
    /// Same radius for every parameter. `Global(0)` leaves the network untouched.
    Global { sigma: f64 },
    /// Radius of layer `l` is twice the population std of its weight entries.
    PerLayerTwiceStd,
}

impl SigmaRule {
    pub fn global(sigma: f64) -> Self {
        SigmaRule::Global { sigma }
    }

    pub fn vanilla() -> Self {
        SigmaRule::Global { sigma: 0.0 }
    }

    pub fn is_vanilla(&self) -> bool {
        matches!(self, SigmaRule::Global { sigma } if *sigma == 0.0)
    }

    /// Box radius applied to each layer of `net`.
    pub fn radii(&self, net: &Network) -> Result<Vec<f64>> {
        match *self {
            SigmaRule::Global { sigma } => {
                if !(sigma >= 0.0) || !sigma.is_finite() {
                    return Err(Error::Config(format!("sigma must be finite and >= 0, got {sigma}")));
                }
                Ok(vec![sigma; net.layers().len()])
            }
            SigmaRule::PerLayerTwiceStd => Ok(net
                .layers()
                .iter()
                .map(|l| 2.0 * population_std(l.weight.iter().copied()))
                .collect()),
        }
    }
}

impl std::fmt::Display for SigmaRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SigmaRule::Global { sigma } => write!(f, "global({sigma})"),
            SigmaRule::PerLayerTwiceStd => f.write_str("per_layer_twice_std"),
        }
    }
}

fn population_std(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    (values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

/// Copy of `net` with independent uniform noise added to every parameter.
/// Biases share their layer's radius.
pub fn perturb(net: &Network, rule: &SigmaRule, rng: &mut SeededRng) -> Result<Network> {
    let radii = rule.radii(net)?;
    let mut out = net.clone();
    for (layer, &r) in out.layers_mut().iter_mut().zip(&radii) {
        if r == 0.0 {
            continue;
        }
        layer
            .weight
            .iter_mut()
            .chain(layer.bias.iter_mut())
            .for_each(|p| *p += rng.symmetric(r));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_network, Activation, Dense, LayerSpec};
    use ndarray::array;

    fn net() -> Network {
        let specs = Network::mlp_specs(3, &[6], 2, Activation::Relu, Activation::Identity);
        init_network(&specs, &mut SeededRng::new(11)).unwrap()
    }

    #[test]
    fn zero_radius_is_identity() {
        let n = net();
        let p = perturb(&n, &SigmaRule::global(0.0), &mut SeededRng::new(1)).unwrap();
        assert_eq!(n, p);
    }

    #[test]
    fn global_box_bound() {
        let n = net();
        let p = perturb(&n, &SigmaRule::global(0.01), &mut SeededRng::new(1)).unwrap();
        let max = n
            .params()
            .zip(p.params())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(max <= 0.01 && max > 0.0);
    }

    #[test]
    fn negative_sigma_rejected() {
        assert!(perturb(&net(), &SigmaRule::global(-1.0), &mut SeededRng::new(1)).is_err());
    }

    #[test]
    fn twice_std_rule() {
        let spec = LayerSpec::new(2, 1, Activation::Identity);
        let n = Network::from_layers(vec![Dense::new(spec, array![[1.0, -1.0]], array![0.0]).unwrap()])
            .unwrap();
        assert_eq!(SigmaRule::PerLayerTwiceStd.radii(&n).unwrap(), vec![2.0]);
        let mut rng = SeededRng::new(5);
        let mut widest: f64 = 0.0;
        for _ in 0..200 {
            let p = perturb(&n, &SigmaRule::PerLayerTwiceStd, &mut rng).unwrap();
            for (a, b) in n.params().zip(p.params()) {
                let d = (a - b).abs();
                assert!(d <= 2.0);
                widest = widest.max(d);
            }
        }
        // the box is actually used, not a narrower one
        assert!(widest > 1.9);
    }
}
