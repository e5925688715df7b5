//! Initial guesses for the amplitude, frequency and phase sub-networks of a
//! physics-guided operator.
//!
//! The frequency enters the model multiplied by time, so the loss is highly
//! non-convex in ω over long windows and gradient descent from a random
//! initialization settles in a wrong basin. Each trajectory is therefore fit
//! with a sinusoid by a frequency scan, and the three sub-networks are
//! pre-trained to reproduce those fits before the joint fit starts.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use nalgebra::DMatrix;

use crate::data::{TargetLabel, Trajectory, TripletDataset};
use crate::error::Result;
use crate::operator::{DeepOnetModel, Operator, PhysicsComponent, PhysicsGuidedModel};

use super::config::WarmStartConfig;
use super::refit::refit_output_layers;
use super::trainer::{fit, LoopOptions};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinusoidFit {
    pub amplitude: f64,
    pub omega: f64,
    pub phase: f64,
    pub sse: f64,
}

/// Least-squares `e(t) (a sin(ωt) + b cos(ωt))` at a fixed ω, where `e` is
/// a known envelope (1 when absent).
fn fixed_frequency_fit(times: &[f64], values: &[f64], envelope: Option<&[f64]>, omega: f64) -> SinusoidFit {
    let (mut ss, mut sc, mut cc, mut vs, mut vc, mut vv) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for (j, (&t, &v)) in times.iter().zip(values).enumerate() {
        let e = envelope.map_or(1.0, |e| e[j]);
        let (s, c) = libm::sincos(omega * t);
        let (s, c) = (e * s, e * c);
        ss += s * s;
        sc += s * c;
        cc += c * c;
        vs += v * s;
        vc += v * c;
        vv += v * v;
    }
    let det = ss * cc - sc * sc;
    let (a, b) = if det.abs() > 1e-12 * (ss * cc).max(f64::MIN_POSITIVE) {
        ((vs * cc - vc * sc) / det, (vc * ss - vs * sc) / det)
    } else if cc > 0.0 {
        (0.0, vc / cc)
    } else {
        (0.0, 0.0)
    };
    let sse = (vv - a * vs - b * vc).max(0.0);
    SinusoidFit {
        amplitude: a.hypot(b),
        omega,
        phase: b.atan2(a),
        sse,
    }
}

fn golden_section(
    times: &[f64],
    values: &[f64],
    envelope: Option<&[f64]>,
    lo: f64,
    hi: f64,
) -> SinusoidFit {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (lo, hi);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = fixed_frequency_fit(times, values, envelope, x1);
    let mut f2 = fixed_frequency_fit(times, values, envelope, x2);
    for _ in 0..60 {
        if f1.sse < f2.sse {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = fixed_frequency_fit(times, values, envelope, x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = fixed_frequency_fit(times, values, envelope, x2);
        }
    }
    if f1.sse < f2.sse {
        f1
    } else {
        f2
    }
}

/// Best oscillatory fit `χ sin(ωt + δ)` with ω above the lowest resolvable
/// frequency and below Nyquist.
pub fn fit_sinusoid(times: &[f64], values: &[f64]) -> SinusoidFit {
    let span = times.last().unwrap() - times.first().unwrap();
    let dt = span / (times.len() - 1) as f64;
    let step = PI / (4.0 * span);
    let nyquist = PI / dt;
    let mut best = fixed_frequency_fit(times, values, None, step);
    let mut omega = 2.0 * step;
    while omega < nyquist {
        let f = fixed_frequency_fit(times, values, None, omega);
        if f.sse < best.sse {
            best = f;
        }
        omega += step;
    }
    let refined = golden_section(times, values, None, (best.omega - step).max(step), best.omega + step);
    if refined.sse < best.sse {
        refined
    } else {
        best
    }
}

/// Alternates between the local amplitude of the current fit and a refit of
/// frequency and phase under that amplitude, which removes the bias a
/// growing or decaying envelope puts on a constant-amplitude fit.
pub fn fit_modulated_sinusoid(times: &[f64], values: &[f64]) -> (SinusoidFit, Vec<f64>) {
    let mut fit = fit_sinusoid(times, values);
    let mut envelope = smooth_envelope(times, values, &fit);
    let span = times.last().unwrap() - times.first().unwrap();
    for _ in 0..4 {
        let scale = envelope.iter().fold(0.0f64, |m, e| m.max(e.abs()));
        if !(scale > 0.0) {
            break;
        }
        let e: Vec<f64> = envelope.iter().map(|v| v / scale).collect();
        let width = PI / (4.0 * span);
        let next = golden_section(times, values, Some(&e), (fit.omega - width).max(width * 0.5), fit.omega + width);
        let next = SinusoidFit {
            amplitude: next.amplitude * scale,
            ..next
        };
        envelope = smooth_envelope(times, values, &next);
        fit = next;
    }
    (fit, envelope)
}

/// Per-point targets for the three sub-networks.
#[derive(Debug, Clone)]
pub struct WarmStartTargets {
    /// True when the data is better explained by a constant per trajectory
    /// (ω = 0, δ = π/2) than by an oscillation.
    pub constant_mode: bool,
    pub amplitude: TripletDataset,
    pub frequency: TripletDataset,
    pub phase: TripletDataset,
}

/// Slowly varying amplitude `χ(t)` under a fixed carrier: least squares of
/// `v ≈ χ(t) sin(ωt + δ)` with `χ` a Chebyshev series of degree well below
/// the number of carrier cycles.
fn smooth_envelope(times: &[f64], values: &[f64], fit: &SinusoidFit) -> Vec<f64> {
    let q = times.len();
    let (t0, span) = (times[0], times[q - 1] - times[0]);
    let cycles = fit.omega * span / TAU;
    let degree = ((cycles / 2.0).floor() as usize).clamp(0, MAX_ENVELOPE_DEGREE).min(q / 4);
    let basis = |t: f64| -> Vec<f64> {
        let x = 2.0 * (t - t0) / span - 1.0;
        let mut b = vec![1.0, x];
        while b.len() < degree + 1 {
            let n = b.len();
            b.push(2.0 * x * b[n - 1] - b[n - 2]);
        }
        b.truncate(degree + 1);
        b
    };
    let rows: Vec<Vec<f64>> = times.iter().map(|&t| basis(t)).collect();
    let carrier: Vec<f64> = times.iter().map(|&t| (fit.omega * t + fit.phase).sin()).collect();
    let a = DMatrix::from_fn(q, degree + 1, |j, k| rows[j][k] * carrier[j]);
    let v = DMatrix::from_fn(q, 1, |j, _| values[j]);
    match a.svd(true, true).solve(&v, 1e-12) {
        Ok(c) => rows.iter().map(|r| r.iter().zip(c.iter()).map(|(b, c)| b * c).sum()).collect(),
        Err(_) => vec![fit.amplitude; q],
    }
}

const MAX_ENVELOPE_DEGREE: usize = 16;

pub fn warm_start_targets(ds: &TripletDataset) -> Result<WarmStartTargets> {
    let fits: Vec<SinusoidFit> = ds.trajectories().iter().map(|tr| fit_sinusoid(&tr.times, &tr.values)).collect();
    let oscillating_sse: f64 = fits.iter().map(|f| f.sse).sum();
    let constant_sse: f64 = ds
        .trajectories()
        .iter()
        .map(|tr| {
            let mean = tr.values.iter().sum::<f64>() / tr.values.len() as f64;
            tr.values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
        })
        .sum();
    let constant_mode = constant_sse <= oscillating_sse;
    let label = TargetLabel::Residual;
    let with = |f: &dyn Fn(usize, usize, &Trajectory) -> f64| ds.map_values(label, |i, j, tr| f(i, j, tr));

    if constant_mode {
        log::info!("warm start: constant mode");
        return Ok(WarmStartTargets {
            constant_mode,
            amplitude: with(&|_, j, tr| tr.values[j])?,
            frequency: with(&|_, _, _| 0.0)?,
            phase: with(&|_, _, _| FRAC_PI_2)?,
        });
    }

    let (fits, amplitudes): (Vec<SinusoidFit>, Vec<Vec<f64>>) = ds
        .trajectories()
        .iter()
        .map(|tr| fit_modulated_sinusoid(&tr.times, &tr.values))
        .unzip();

    // unwrap phases along increasing velocity
    let mut order: Vec<usize> = (0..fits.len()).collect();
    order.sort_by(|&a, &b| ds.trajectories()[a].u_bar.total_cmp(&ds.trajectories()[b].u_bar));
    let mut phases: Vec<f64> = fits.iter().map(|f| f.phase).collect();
    for w in 1..order.len() {
        let (prev, cur) = (phases[order[w - 1]], phases[order[w]]);
        phases[order[w]] = cur - TAU * ((cur - prev) / TAU).round();
    }
    let mean_phase = phases.iter().sum::<f64>() / phases.len() as f64;
    let shift = TAU * (mean_phase / TAU).round();
    let fits: Vec<SinusoidFit> = fits
        .iter()
        .zip(&phases)
        .map(|(f, &phase)| SinusoidFit {
            phase: phase - shift,
            ..*f
        })
        .collect();
    log::info!(
        "warm start: oscillating mode, omega in [{:.3}, {:.3}]",
        fits.iter().map(|f| f.omega).fold(f64::INFINITY, f64::min),
        fits.iter().map(|f| f.omega).fold(f64::NEG_INFINITY, f64::max)
    );
    Ok(WarmStartTargets {
        constant_mode,
        amplitude: with(&|i, j, _| amplitudes[i][j])?,
        frequency: with(&|i, _, _| fits[i].omega)?,
        phase: with(&|i, _, _| fits[i].phase)?,
    })
}

/// Moves the kinks of the first layer of every scalar-input network from
/// zero to evenly spaced points of the normalized input range.
///
/// With zero biases a scalar-input ReLU net is linear on each side of zero,
/// so all of its nonlinearity sits at one input value. Spreading the kinks
/// turns the first layer into a hinge basis over the whole domain.
fn spread_kinks(model: &mut DeepOnetModel) {
    let n = *model.normalization();
    let (u0, u1) = n.velocity_domain();
    let (t0, t1) = n.time_domain();
    let branch_range = (n.velocity(u0), n.velocity(u1));
    let trunk_range = (n.time(t0), n.time(t1));
    spread_first_layer(model.branch_mut(), branch_range);
    if model.fourier().is_none() {
        spread_first_layer(model.trunk_mut(), trunk_range);
    }
}

fn spread_first_layer(net: &mut crate::nn::DenseNetwork, (lo, hi): (f64, f64)) {
    let first = &mut net.layers_mut()[0];
    if first.weight.ncols() != 1 {
        return;
    }
    let width = first.bias.len();
    for i in 0..width {
        let c = lo + (hi - lo) * (i as f64 + 0.5) / width as f64;
        first.bias[i] = -first.weight[[i, 0]] * c;
    }
}

/// Pre-trains each sub-network of `model` on its warm-start targets, then
/// refits its output layers by least squares. Targets for `train` and
/// `validation` are computed together so their phases share one branch.
pub fn warm_start(
    model: PhysicsGuidedModel,
    train: &TripletDataset,
    validation: &TripletDataset,
    config: &WarmStartConfig,
    base: &LoopOptions,
) -> Result<PhysicsGuidedModel> {
    if config.epochs == 0 {
        return Ok(model);
    }
    let n_train = train.num_trajectories();
    let combined = TripletDataset::new(
        train.trajectories().iter().chain(validation.trajectories()).cloned().collect(),
        train.label,
        train.t0.min(validation.t0),
        train.tf.max(validation.tf),
    )?;
    let targets = warm_start_targets(&combined)?;
    let train_idx: Vec<usize> = (0..n_train).collect();
    let val_idx: Vec<usize> = (n_train..combined.num_trajectories()).collect();
    let opts = LoopOptions {
        learning_rate: config.learning_rate,
        max_epochs: config.epochs,
        ..*base
    };
    let mut parts: Vec<DeepOnetModel> = Vec::with_capacity(3);
    for (k, (which, ds)) in [
        (PhysicsComponent::Amplitude, &targets.amplitude),
        (PhysicsComponent::Frequency, &targets.frequency),
        (PhysicsComponent::Phase, &targets.phase),
    ]
    .into_iter()
    .enumerate()
    {
        let (sub_train, sub_val) = (ds.subset(&train_idx)?, ds.subset(&val_idx)?);
        let sub_opts = LoopOptions {
            seed: crate::nn::derive_seed(base.seed, 100 + k as u64),
            ..opts
        };
        let pretrain = |component: DeepOnetModel| -> Result<(DeepOnetModel, f64)> {
            let (trained, report) = fit(Operator::DataDriven(component), &sub_train, &sub_val, &sub_opts)?;
            let Operator::DataDriven(m) = trained else {
                unreachable!("sub-networks are plain operators")
            };
            Ok((m, report.best_val_loss))
        };
        let mut spread = model.component(which).clone();
        spread_kinks(&mut spread);
        let (mut m, pretrained) = pretrain(spread)?;
        // A Fourier trunk learns smoother time features without the branch
        // hinges, so it is taken from a separate plain pre-training run.
        if m.fourier().is_some() {
            let (plain, _) = pretrain(model.component(which).clone())?;
            *m.trunk_mut() = plain.trunk().clone();
        }
        let refined = refit_output_layers(&mut m, &sub_train, &sub_val)?;
        log::info!("warm start {which:?}: validation mse {pretrained:.3e}, after refit {refined:.3e}");
        parts.push(m);
    }
    let delta = parts.pop().unwrap();
    let omega = parts.pop().unwrap();
    let chi = parts.pop().unwrap();
    PhysicsGuidedModel::from_parts(chi, omega, delta)
}
