//! Central finite-difference gradient oracle.
//!
//! Perturbs every trainable parameter through the forward pass only, so it
//! shares no code with the analytic backward pass it checks.

use crate::nn::{DenseNetwork, NetGradients};
use crate::operator::{Operator, QueryBlock};

#[derive(Debug, Clone, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst: Option<String>,
}

impl GradCheckReport {
    fn record(&mut self, label: impl FnOnce() -> String, analytic: f64, numeric: f64, floor: f64) {
        self.checked += 1;
        let scale = analytic.abs().max(numeric.abs()).max(floor);
        let rel = (analytic - numeric).abs() / scale;
        if rel > self.max_rel_error {
            self.max_rel_error = rel;
            self.worst = Some(format!("{} analytic={analytic:e} numeric={numeric:e}", label()));
        }
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.checked > 0 && self.max_rel_error < tol
    }
}

/// (network, layer, is_weight, flat index) for every scalar parameter.
fn parameter_sites(nets: &[&DenseNetwork]) -> Vec<(usize, usize, bool, usize)> {
    let mut sites = Vec::new();
    for (n, net) in nets.iter().enumerate() {
        for (k, layer) in net.layers().iter().enumerate() {
            sites.extend((0..layer.weight.len()).map(|i| (n, k, true, i)));
            sites.extend((0..layer.bias.len()).map(|i| (n, k, false, i)));
        }
    }
    sites
}

fn param_mut(net: &mut DenseNetwork, layer: usize, weight: bool, index: usize) -> &mut f64 {
    let l = &mut net.layers_mut()[layer];
    if weight {
        let cols = l.weight.ncols();
        &mut l.weight[[index / cols, index % cols]]
    } else {
        &mut l.bias[index]
    }
}

fn grad_at(g: &NetGradients, layer: usize, weight: bool, index: usize) -> f64 {
    if weight {
        let cols = g.weights[layer].ncols();
        g.weights[layer][[index / cols, index % cols]]
    } else {
        g.biases[layer][index]
    }
}

/// Checks `d/dθ sum_k w_k * op(block)_k` for every parameter of `op`.
///
/// Relative errors use `max(|analytic|, |numeric|, floor)` as denominator.
pub fn check_operator(
    op: &Operator,
    block: &QueryBlock,
    weights: &[f64],
    h: f64,
    floor: f64,
) -> GradCheckReport {
    let loss = |o: &Operator| -> f64 {
        let (out, _) = o.forward_block(block).expect("forward");
        out.iter().zip(weights).map(|(a, b)| a * b).sum()
    };
    let (_, cache) = op.forward_block(block).expect("forward");
    let analytic = op
        .backward_block(&cache, weights)
        .expect("backward")
        .into_networks();

    let mut report = GradCheckReport::default();
    let mut probe = op.clone();
    for (n, layer, weight, index) in parameter_sites(&op.networks()) {
        let set = |o: &mut Operator, v: f64| {
            *param_mut(o.networks_mut().swap_remove(n), layer, weight, index) = v;
        };
        let original = *param_mut(probe.networks_mut().swap_remove(n), layer, weight, index);
        set(&mut probe, original + h);
        let plus = loss(&probe);
        set(&mut probe, original - h);
        let minus = loss(&probe);
        set(&mut probe, original);
        let numeric = (plus - minus) / (2.0 * h);
        let a = grad_at(&analytic[n], layer, weight, index);
        report.record(
            || format!("net {n} layer {layer} {} {index}", if weight { "W" } else { "b" }),
            a,
            numeric,
            floor,
        );
    }
    report
}

/// Same check for a bare network with loss `sum_j w_j * net(x)_j`.
pub fn check_network(net: &DenseNetwork, x: &[f64], weights: &[f64], h: f64, floor: f64) -> GradCheckReport {
    let loss = |n: &DenseNetwork| -> f64 {
        let (out, _) = n.forward(x).expect("forward");
        out.iter().zip(weights).map(|(a, b)| a * b).sum()
    };
    let (_, cache) = net.forward(x).expect("forward");
    let (analytic, _) = net.backward(&cache, weights).expect("backward");
    let mut report = GradCheckReport::default();
    let mut probe = net.clone();
    for (_, layer, weight, index) in parameter_sites(&[net]) {
        let original = *param_mut(&mut probe, layer, weight, index);
        *param_mut(&mut probe, layer, weight, index) = original + h;
        let plus = loss(&probe);
        *param_mut(&mut probe, layer, weight, index) = original - h;
        let minus = loss(&probe);
        *param_mut(&mut probe, layer, weight, index) = original;
        let numeric = (plus - minus) / (2.0 * h);
        report.record(
            || format!("layer {layer} {} {index}", if weight { "W" } else { "b" }),
            grad_at(&analytic, layer, weight, index),
            numeric,
            floor,
        );
    }
    report
}
