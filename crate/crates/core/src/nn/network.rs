use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    fn apply(self, z: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Relu => z.mapv(|v| if v > 0.0 { v } else { 0.0 }),
            Activation::Linear => z.clone(),
        }
    }
}

/// Output layers are always affine: coefficients and residuals can be negative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNetworkSpec {
    /// Input width first, output width last.
    pub layer_widths: Vec<usize>,
    pub hidden_activation: Activation,
    pub output_activation: OutputActivation,
    pub seed: u64,
}

impl DenseNetworkSpec {
    pub fn new(layer_widths: Vec<usize>, seed: u64) -> Self {
        Self {
            layer_widths,
            hidden_activation: Activation::Relu,
            output_activation: OutputActivation::Linear,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_widths.len() < 2 {
            return Err(Error::InvalidSpec(format!(
                "need at least an input and an output width, got {} entries",
                self.layer_widths.len()
            )));
        }
        if let Some(k) = self.layer_widths.iter().position(|&w| w == 0) {
            return Err(Error::InvalidSpec(format!("layer width {k} is zero")));
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.layer_widths.last().expect("validated spec")
    }
}

/// One affine layer `z = W x + b` with `W` of shape `(out, in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    /// Batched affine map followed by `activation`; rows of `x` are samples.
    pub fn apply(&self, x: ArrayView2<'_, f64>, activation: Activation) -> Array2<f64> {
        activation.apply(&self.affine(x))
    }

    fn affine(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut z = x.dot(&self.weight.t());
        z += &self.bias;
        z
    }

    pub fn input_width(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_width(&self) -> usize {
        self.weight.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNetwork {
    spec: DenseNetworkSpec,
    layers: Vec<Dense>,
}

/// Activations retained by a forward pass for the matching backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer (the first entry is the network input).
    inputs: Vec<Array2<f64>>,
    /// Pre-activation of each layer.
    pre_activations: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.inputs[0].nrows()
    }

    /// Smallest |pre-activation| over the hidden (ReLU) layers; infinite for
    /// networks without hidden layers.
    pub fn min_abs_hidden_preactivation(&self) -> f64 {
        let hidden = self.pre_activations.len().saturating_sub(1);
        self.pre_activations[..hidden]
            .iter()
            .flat_map(|z| z.iter())
            .fold(f64::INFINITY, |m, v| m.min(v.abs()))
    }
}

/// Gradients with the exact shapes of a network's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct NetGradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl NetGradients {
    pub fn zeros_like(net: &DenseNetwork) -> Self {
        Self {
            weights: net.layers.iter().map(|l| Array2::zeros(l.weight.raw_dim())).collect(),
            biases: net.layers.iter().map(|l| Array1::zeros(l.bias.raw_dim())).collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|&v| v == 0.0))
            && self.biases.iter().all(|b| b.iter().all(|&v| v == 0.0))
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }
}

impl DenseNetwork {
    /// Scaled-uniform initialization (bound `sqrt(6 / fan_in)`), zero biases.
    pub fn init(spec: DenseNetworkSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let layers = spec
            .layer_widths
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = (6.0 / fan_in as f64).sqrt();
                let weight =
                    Array2::from_shape_fn((fan_out, fan_in), |_| rng.random_range(-bound..bound));
                Dense {
                    weight,
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(Self { spec, layers })
    }

    /// Builds a network from explicit parameters; the spec's widths are
    /// inferred and its seed is recorded as given.
    pub fn from_layers(layers: Vec<Dense>, seed: u64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidSpec("network has no layers".into()));
        }
        let mut widths = vec![layers[0].input_width()];
        for (k, layer) in layers.iter().enumerate() {
            if layer.input_width() != *widths.last().unwrap() {
                return Err(Error::DimensionMismatch {
                    context: "layer input width",
                    expected: *widths.last().unwrap(),
                    received: layer.input_width(),
                });
            }
            if layer.bias.len() != layer.output_width() {
                return Err(Error::InvalidSpec(format!(
                    "layer {k}: bias length {} does not match {} output rows",
                    layer.bias.len(),
                    layer.output_width()
                )));
            }
            if !layer.weight.iter().chain(layer.bias.iter()).all(|v| v.is_finite()) {
                return Err(Error::NonFinite(format!("parameters of layer {k}")));
            }
            widths.push(layer.output_width());
        }
        let spec = DenseNetworkSpec::new(widths, seed);
        spec.validate()?;
        Ok(Self { spec, layers })
    }

    pub fn spec(&self) -> &DenseNetworkSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn input_width(&self) -> usize {
        self.spec.input_width()
    }

    pub fn output_width(&self) -> usize {
        self.spec.output_width()
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Batched forward pass. Rows of `x` are samples.
    pub fn forward_batch(&self, x: ArrayView2<'_, f64>) -> Result<(Array2<f64>, ForwardCache)> {
        if x.ncols() != self.input_width() {
            return Err(Error::DimensionMismatch {
                context: "network input",
                expected: self.input_width(),
                received: x.ncols(),
            });
        }
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut current = x.to_owned();
        for (k, layer) in self.layers.iter().enumerate() {
            let z = layer.affine(current.view());
            let act = if k == last {
                Activation::Linear
            } else {
                self.spec.hidden_activation
            };
            let a = act.apply(&z);
            inputs.push(current);
            pre_activations.push(z);
            current = a;
        }
        Ok((
            current,
            ForwardCache {
                inputs,
                pre_activations,
            },
        ))
    }

    /// Batched backward pass: `output_gradient` holds dL/d(output) per row.
    /// Returns parameter gradients summed over rows and the input gradient.
    pub fn backward_batch(
        &self,
        cache: &ForwardCache,
        output_gradient: ArrayView2<'_, f64>,
    ) -> Result<(NetGradients, Array2<f64>)> {
        if cache.inputs.len() != self.layers.len() {
            return Err(Error::DimensionMismatch {
                context: "forward cache depth",
                expected: self.layers.len(),
                received: cache.inputs.len(),
            });
        }
        if output_gradient.ncols() != self.output_width()
            || output_gradient.nrows() != cache.batch_size()
        {
            return Err(Error::DimensionMismatch {
                context: "output gradient",
                expected: self.output_width() * cache.batch_size(),
                received: output_gradient.len(),
            });
        }
        for (k, layer) in self.layers.iter().enumerate() {
            if cache.pre_activations[k].ncols() != layer.output_width() {
                return Err(Error::DimensionMismatch {
                    context: "forward cache layer width",
                    expected: layer.output_width(),
                    received: cache.pre_activations[k].ncols(),
                });
            }
        }

        let n_layers = self.layers.len();
        let mut weights = vec![Array2::zeros((0, 0)); n_layers];
        let mut biases = vec![Array1::zeros(0); n_layers];
        let mut delta = output_gradient.to_owned();
        for k in (0..n_layers).rev() {
            if k != n_layers - 1 {
                // ReLU subgradient at exactly zero is zero.
                ndarray::Zip::from(&mut delta)
                    .and(&cache.pre_activations[k])
                    .for_each(|d, &z| {
                        if z <= 0.0 {
                            *d = 0.0;
                        }
                    });
            }
            weights[k] = delta.t().dot(&cache.inputs[k]);
            biases[k] = delta.sum_axis(Axis(0));
            delta = delta.dot(&self.layers[k].weight);
        }
        Ok((NetGradients { weights, biases }, delta))
    }

    /// Single-sample forward pass.
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        if let Some(k) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("network input entry {k}")));
        }
        let view = ArrayView2::from_shape((1, x.len()), x).expect("row view");
        let (out, cache) = self.forward_batch(view)?;
        Ok((out.into_raw_vec_and_offset().0, cache))
    }

    /// Single-sample backward pass.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        output_gradient: &[f64],
    ) -> Result<(NetGradients, Vec<f64>)> {
        let view = ArrayView2::from_shape((1, output_gradient.len()), output_gradient)
            .expect("row view");
        let (grads, dx) = self.backward_batch(cache, view)?;
        Ok((grads, dx.into_raw_vec_and_offset().0))
    }
}
