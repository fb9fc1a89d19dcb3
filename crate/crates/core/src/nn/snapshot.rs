use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{Dense, LayerSpec, Network};
use crate::error::{Error, Result};

pub const SNAPSHOT_VERSION: &str = "dualgap-net-v1";

/// JSON form of a [`Network`]: layer specs plus row-major parameter arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSnapshot {
    pub version: String,
    pub layers: Vec<LayerSnapshot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSnapshot {
    #[serde(flatten)]
    pub spec: LayerSpec,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl From<&Network> for NetworkSnapshot {
    fn from(net: &Network) -> Self {
        Self {
            version: SNAPSHOT_VERSION.to_string(),
            layers: net
                .layers()
                .iter()
                .map(|l| LayerSnapshot {
                    spec: *l.spec(),
                    weights: l.weight.iter().copied().collect(),
                    bias: l.bias.to_vec(),
                })
                .collect(),
        }
    }
}

impl TryFrom<NetworkSnapshot> for Network {
    type Error = Error;

    fn try_from(snap: NetworkSnapshot) -> Result<Self> {
        if snap.version != SNAPSHOT_VERSION {
            return Err(Error::Config(format!(
                "unsupported network snapshot version {:?}",
                snap.version
            )));
        }
        let layers = snap
            .layers
            .into_iter()
            .map(|l| {
                let weight = Array2::from_shape_vec((l.spec.output_dim, l.spec.input_dim), l.weights)
                    .map_err(|e| Error::Shape(e.to_string()))?;
                Dense::new(l.spec, weight, Array1::from(l.bias))
            })
            .collect::<Result<Vec<_>>>()?;
        Network::from_layers(layers)
    }
}

impl Network {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&NetworkSnapshot::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let snap: NetworkSnapshot = serde_json::from_str(s)?;
        snap.try_into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_network, Activation, SeededRng};

    #[test]
    fn json_round_trip_is_exact() {
        let specs = Network::mlp_specs(
            4,
            &[7, 3],
            2,
            Activation::LeakyRelu { alpha: 0.3 },
            Activation::Softmax,
        );
        let net = init_network(&specs, &mut SeededRng::new(2)).unwrap();
        let json = net.to_json().unwrap();
        assert!(json.contains("\"dualgap-net-v1\""));
        assert_eq!(Network::from_json(&json).unwrap(), net);
    }

    #[test]
    fn wrong_version_rejected() {
        let specs = Network::mlp_specs(1, &[], 1, Activation::Identity, Activation::Identity);
        let net = init_network(&specs, &mut SeededRng::new(2)).unwrap();
        let json = net.to_json().unwrap().replace("dualgap-net-v1", "other");
        assert!(Network::from_json(&json).is_err());
    }
}
