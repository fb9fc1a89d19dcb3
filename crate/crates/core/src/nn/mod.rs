//! Minimal dense-network engine.
//!
//! A [`Network`] is a chain of dense layers `y = act(x Wᵀ + b)` operating on
//! row-major batches (one sample per row). Gradients are computed by explicit
//! reverse-mode passes over a [`ForwardCache`]; there is no general autodiff.

mod activation;
mod adam;
mod perturb;
mod rng;
mod snapshot;

pub use activation::{sigmoid, Activation};
pub use adam::{adam_step, AdamConfig, AdamState, Direction};
pub use perturb::{perturb, SigmaRule};
pub use rng::SeededRng;
pub use snapshot::{NetworkSnapshot, SNAPSHOT_VERSION};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(input_dim: usize, output_dim: usize, activation: Activation) -> Self {
        Self {
            input_dim,
            output_dim,
            activation,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::Config(format!(
                "layer dims must be >= 1, got {}x{}",
                self.input_dim, self.output_dim
            )));
        }
        self.activation.validate().map_err(Error::Config)
    }
}

/// One dense layer: weight is `output_dim × input_dim`, bias has `output_dim` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    spec: LayerSpec,
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn new(spec: LayerSpec, weight: Array2<f64>, bias: Array1<f64>) -> Result<Self> {
        spec.validate()?;
        if weight.dim() != (spec.output_dim, spec.input_dim) || bias.len() != spec.output_dim {
            return Err(Error::Shape(format!(
                "layer {}->{} got weight {:?} and bias {}",
                spec.input_dim,
                spec.output_dim,
                weight.dim(),
                bias.len()
            )));
        }
        if !weight.iter().chain(bias.iter()).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("layer parameters".into()));
        }
        Ok(Self { spec, weight, bias })
    }

    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Dense>,
}

/// Glorot-uniform weights, zero biases.
pub fn init_network(specs: &[LayerSpec], rng: &mut SeededRng) -> Result<Network> {
    check_chain(specs)?;
    let layers = specs
        .iter()
        .map(|spec| {
            let s = (6.0 / (spec.input_dim + spec.output_dim) as f64).sqrt();
            let weight =
                Array2::from_shape_simple_fn((spec.output_dim, spec.input_dim), || rng.symmetric(s));
            Dense {
                spec: *spec,
                weight,
                bias: Array1::zeros(spec.output_dim),
            }
        })
        .collect();
    Ok(Network { layers })
}

fn check_chain(specs: &[LayerSpec]) -> Result<()> {
    if specs.is_empty() {
        return Err(Error::Config("network needs at least one layer".into()));
    }
    for s in specs {
        s.validate()?;
    }
    for (l, pair) in specs.windows(2).enumerate() {
        if pair[0].output_dim != pair[1].input_dim {
            return Err(Error::Shape(format!(
                "layer {l} outputs {} but layer {} expects {}",
                pair[0].output_dim,
                l + 1,
                pair[1].input_dim
            )));
        }
    }
    Ok(())
}

/// Activations recorded by [`Network::forward`]; `activations[0]` is the input batch.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    activations: Vec<Array2<f64>>,
    logits: Array2<f64>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.activations.last().expect("cache holds at least the input")
    }

    pub fn input(&self) -> &Array2<f64> {
        &self.activations[0]
    }

    /// Pre-activation of the final layer.
    pub fn logits(&self) -> &Array2<f64> {
        &self.logits
    }
}

/// Gradients with the same layout as a network's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub layers: Vec<(Array2<f64>, Array1<f64>)>,
}

impl ParamGrads {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| (Array2::zeros(l.weight.dim()), Array1::zeros(l.bias.len())))
                .collect(),
        }
    }

    /// All entries in parameter order (per layer: weights row-major, then bias).
    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|(w, b)| w.iter().chain(b.iter()))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|(w, b)| w.iter_mut().chain(b.iter_mut()))
    }

    pub fn all_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }

    pub fn scale(&mut self, k: f64) {
        self.iter_mut().for_each(|v| *v *= k);
    }

    pub fn add_assign(&mut self, other: &ParamGrads) {
        for (a, b) in self.iter_mut().zip(other.iter()) {
            *a += b;
        }
    }
}

/// Euclidean norm over every gradient entry.
pub fn grad_l2_norm(grads: &ParamGrads) -> f64 {
    grads.iter().map(|g| g * g).sum::<f64>().sqrt()
}

impl Network {
    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        let specs: Vec<LayerSpec> = layers.iter().map(|l| l.spec).collect();
        check_chain(&specs)?;
        Ok(Self { layers })
    }

    /// `input → hidden… → output` with one activation for every hidden layer.
    pub fn mlp_specs(
        input: usize,
        hidden: &[usize],
        output: usize,
        hidden_act: Activation,
        output_act: Activation,
    ) -> Vec<LayerSpec> {
        let mut dims = vec![input];
        dims.extend_from_slice(hidden);
        dims.push(output);
        let n = dims.len() - 1;
        (0..n)
            .map(|i| {
                let act = if i + 1 == n { output_act } else { hidden_act };
                LayerSpec::new(dims[i], dims[i + 1], act)
            })
            .collect()
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].spec.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.spec.output_dim).unwrap_or(0)
    }

    pub fn output_activation(&self) -> Activation {
        self.layers.last().expect("non-empty network").spec.activation
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weight.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn all_finite(&self) -> bool {
        self.params().all(|v| v.is_finite())
    }

    /// Forward pass over a batch, returning the output and the cache needed by
    /// [`Network::backward`].
    pub fn forward(&self, batch: ArrayView2<'_, f64>) -> Result<(Array2<f64>, ForwardCache)> {
        self.check_input(batch)?;
        let n_layers = self.layers.len();
        let mut activations = Vec::with_capacity(n_layers + 1);
        activations.push(batch.to_owned());
        let mut logits = Array2::zeros((0, 0));
        for (l, layer) in self.layers.iter().enumerate() {
            let mut y = affine(layer, activations[l].view());
            if l + 1 == n_layers {
                logits = y.clone();
            }
            layer.spec.activation.apply(&mut y);
            if !y.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite(format!("activation of layer {l}")));
            }
            activations.push(y);
        }
        let out = activations.last().cloned().expect("non-empty");
        Ok((out, ForwardCache { activations, logits }))
    }

    /// Forward pass without keeping a cache.
    pub fn predict(&self, batch: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_input(batch)?;
        let mut x = layer_forward(&self.layers[0], batch);
        for layer in &self.layers[1..] {
            x = layer_forward(layer, x.view());
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("network output".into()));
        }
        Ok(x)
    }

    fn check_input(&self, batch: ArrayView2<'_, f64>) -> Result<()> {
        if batch.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "batch has {} columns, network expects {}",
                batch.ncols(),
                self.input_dim()
            )));
        }
        if !batch.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("input batch".into()));
        }
        Ok(())
    }

    /// Parameter gradients of the scalar whose gradient w.r.t. the network
    /// output is `output_grad`.
    pub fn backward(&self, cache: &ForwardCache, output_grad: &Array2<f64>) -> Result<ParamGrads> {
        self.backprop(cache, output_grad, false, false).map(|(g, _)| g)
    }

    /// Backward pass seeded with the gradient w.r.t. the final layer's
    /// pre-activation (the logits), skipping the output activation. Returns
    /// the input gradient as well.
    pub fn backward_from_logits(
        &self,
        cache: &ForwardCache,
        logit_grad: &Array2<f64>,
    ) -> Result<(ParamGrads, Array2<f64>)> {
        self.backprop(cache, logit_grad, true, true)
            .map(|(g, x)| (g, x.expect("input gradient requested")))
    }

    /// Like [`Network::backward`] but also returns the gradient w.r.t. the
    /// input batch, for chaining through a preceding network.
    pub fn backward_with_input(
        &self,
        cache: &ForwardCache,
        output_grad: &Array2<f64>,
    ) -> Result<(ParamGrads, Array2<f64>)> {
        self.backprop(cache, output_grad, true, false)
            .map(|(g, x)| (g, x.expect("input gradient requested")))
    }

    fn backprop(
        &self,
        cache: &ForwardCache,
        output_grad: &Array2<f64>,
        want_input: bool,
        from_logits: bool,
    ) -> Result<(ParamGrads, Option<Array2<f64>>)> {
        self.check_cache(cache)?;
        if output_grad.dim() != cache.output().dim() {
            return Err(Error::Shape(format!(
                "output gradient {:?} vs output {:?}",
                output_grad.dim(),
                cache.output().dim()
            )));
        }
        let n_layers = self.layers.len();
        let mut layers = Vec::with_capacity(n_layers);
        let mut grad = output_grad.clone();
        let mut input_grad = None;
        for l in (0..n_layers).rev() {
            let layer = &self.layers[l];
            if !(from_logits && l + 1 == n_layers) {
                layer.spec.activation.backprop(&mut grad, &cache.activations[l + 1]);
            }
            let gw = grad.t().dot(&cache.activations[l]);
            let gb = grad.sum_axis(Axis(0));
            if l > 0 || want_input {
                let next = grad.dot(&layer.weight);
                if l == 0 {
                    input_grad = Some(next);
                    grad = Array2::zeros((0, 0));
                } else {
                    grad = next;
                }
            }
            layers.push((gw, gb));
        }
        layers.reverse();
        Ok((ParamGrads { layers }, input_grad))
    }

    fn check_cache(&self, cache: &ForwardCache) -> Result<()> {
        if cache.activations.len() != self.layers.len() + 1 {
            return Err(Error::StaleCache(format!(
                "cache has {} activations for {} layers",
                cache.activations.len(),
                self.layers.len()
            )));
        }
        let rows = cache.activations[0].nrows();
        for (l, layer) in self.layers.iter().enumerate() {
            let (a_in, a_out) = (&cache.activations[l], &cache.activations[l + 1]);
            if a_in.dim() != (rows, layer.spec.input_dim) || a_out.dim() != (rows, layer.spec.output_dim) {
                return Err(Error::StaleCache(format!("layer {l} shapes differ")));
            }
        }
        Ok(())
    }
}

fn affine(layer: &Dense, x: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut z = x.dot(&layer.weight.t());
    z += &layer.bias;
    z
}

fn layer_forward(layer: &Dense, x: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut z = affine(layer, x);
    layer.spec.activation.apply(&mut z);
    z
}
