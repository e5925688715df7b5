use ndarray::{Array1, Array2, Zip};
use serde::{Deserialize, Serialize};

use super::network::{DenseNetwork, NetGradients};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Bias-corrected Adam moments for one [`DenseNetwork`].
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    first_weights: Vec<Array2<f64>>,
    first_biases: Vec<Array1<f64>>,
    second_weights: Vec<Array2<f64>>,
    second_biases: Vec<Array1<f64>>,
    step_count: u64,
    // beta^t as running products; powi is not bit-stable across builds
    beta1_power: f64,
    beta2_power: f64,
}

impl AdamState {
    pub fn new(net: &DenseNetwork, config: AdamConfig) -> Self {
        let zeros = NetGradients::zeros_like(net);
        Self {
            config,
            first_weights: zeros.weights.clone(),
            first_biases: zeros.biases.clone(),
            second_weights: zeros.weights,
            second_biases: zeros.biases,
            step_count: 0,
            beta1_power: 1.0,
            beta2_power: 1.0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Applies one Adam update to `net`. The network is untouched on error.
    pub fn step(&mut self, net: &mut DenseNetwork, grads: &NetGradients, lr: f64) -> Result<()> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning rate must be positive, got {lr}")));
        }
        let layers = net.layers();
        if grads.num_layers() != layers.len() || self.first_weights.len() != layers.len() {
            return Err(Error::DimensionMismatch {
                context: "adam layer count",
                expected: layers.len(),
                received: grads.num_layers(),
            });
        }
        for (k, layer) in layers.iter().enumerate() {
            if grads.weights[k].dim() != layer.weight.dim()
                || grads.biases[k].len() != layer.bias.len()
                || self.first_weights[k].dim() != layer.weight.dim()
            {
                return Err(Error::DimensionMismatch {
                    context: "adam parameter shape",
                    expected: layer.weight.len() + layer.bias.len(),
                    received: grads.weights[k].len() + grads.biases[k].len(),
                });
            }
            if grads.weights[k].iter().chain(grads.biases[k].iter()).any(|g| !g.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of layer {k}")));
            }
        }

        self.step_count += 1;
        let AdamConfig {
            beta1,
            beta2,
            epsilon,
        } = self.config;
        self.beta1_power *= beta1;
        self.beta2_power *= beta2;
        let c1 = 1.0 - self.beta1_power;
        let c2 = 1.0 - self.beta2_power;
        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + epsilon);
        };
        for (k, layer) in net.layers_mut().iter_mut().enumerate() {
            Zip::from(&mut layer.weight)
                .and(&mut self.first_weights[k])
                .and(&mut self.second_weights[k])
                .and(&grads.weights[k])
                .for_each(|p, m, v, &g| update(p, m, v, g));
            Zip::from(&mut layer.bias)
                .and(&mut self.first_biases[k])
                .and(&mut self.second_biases[k])
                .and(&grads.biases[k])
                .for_each(|p, m, v, &g| update(p, m, v, g));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Dense;
    use ndarray::array;

    fn scalar_net(p: f64) -> DenseNetwork {
        DenseNetwork::from_layers(
            vec![Dense {
                weight: array![[p]],
                bias: array![0.0],
            }],
            0,
        )
        .unwrap()
    }

    fn scalar_grad(g: f64) -> NetGradients {
        NetGradients {
            weights: vec![array![[g]]],
            biases: vec![array![0.0]],
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut net = DenseNetwork::init(crate::nn::DenseNetworkSpec::new(vec![3, 5, 2], 1)).unwrap();
        let before = net.clone();
        let mut state = AdamState::new(&net, AdamConfig::default());
        state.step(&mut net, &NetGradients::zeros_like(&before), 1e-3).unwrap();
        assert_eq!(net, before);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut net = scalar_net(0.0);
        let mut state = AdamState::new(&net, AdamConfig::default());
        state.step(&mut net, &scalar_grad(1.0), 0.1).unwrap();
        assert!((net.layers()[0].weight[[0, 0]] + 0.1).abs() < 1e-7);
    }

    #[test]
    fn constant_gradient_descends_monotonically() {
        let mut net = scalar_net(0.0);
        let mut state = AdamState::new(&net, AdamConfig::default());
        let mut last = 0.0;
        for expected_steps in 1..=2 {
            state.step(&mut net, &scalar_grad(1.0), 0.1).unwrap();
            let p = net.layers()[0].weight[[0, 0]];
            assert!(p < last);
            last = p;
            assert_eq!(state.step_count(), expected_steps);
        }
    }

    #[test]
    fn non_finite_gradient_names_layer() {
        let mut net = DenseNetwork::init(crate::nn::DenseNetworkSpec::new(vec![1, 2, 1], 1)).unwrap();
        let before = net.clone();
        let mut grads = NetGradients::zeros_like(&net);
        grads.biases[1][0] = f64::INFINITY;
        let mut state = AdamState::new(&net, AdamConfig::default());
        let err = state.step(&mut net, &grads, 1e-3).unwrap_err();
        assert!(err.to_string().contains("layer 1"), "{err}");
        assert_eq!(net, before);
        assert_eq!(state.step_count(), 0);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut net = scalar_net(0.0);
        let other = DenseNetwork::init(crate::nn::DenseNetworkSpec::new(vec![2, 1], 1)).unwrap();
        let mut state = AdamState::new(&net, AdamConfig::default());
        assert!(matches!(
            state.step(&mut net, &NetGradients::zeros_like(&other), 0.1),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
