//! Synthetic coarse/fine coefficient trajectories.
//!
//! Each fidelity is a ramped sinusoid about a velocity-dependent baseline,
//! `mu(u) + A(u) (1 - exp(-t / tau)) sin(2 pi f(u) t + phase)`, with the
//! shedding frequency `f(u) = St u / D`. The defaults imitate the qualitative
//! shape of coarse- and fine-mesh benchmark runs (the coarse mesh
//! under-predicts the oscillation amplitude); they are not measured data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

use super::dataset::{Target, TargetLabel, Trajectory, TripletDataset};
use super::physics::shedding_frequency;
use crate::error::{Error, Result};
use crate::nn::derive_seed;

/// `value_at_reference + slope * (u - reference)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityLinear {
    pub value_at_reference: f64,
    pub slope: f64,
    pub reference: f64,
}

impl VelocityLinear {
    pub fn constant(value: f64) -> Self {
        Self {
            value_at_reference: value,
            slope: 0.0,
            reference: 1.1,
        }
    }

    pub fn at(&self, u: f64) -> f64 {
        self.value_at_reference + self.slope * (u - self.reference)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityParams {
    pub mean: VelocityLinear,
    pub amplitude: VelocityLinear,
    /// Phase offset in radians.
    pub phase: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticGeneratorParams {
    pub coarse: FidelityParams,
    pub fine: FidelityParams,
    pub strouhal: f64,
    pub diameter: f64,
    /// Start-up ramp time constant (s).
    pub ramp_tau: f64,
    pub noise_std: f64,
}

impl SyntheticGeneratorParams {
    pub fn drag() -> Self {
        let mean = VelocityLinear {
            value_at_reference: 3.2,
            slope: 0.5,
            reference: 1.1,
        };
        Self {
            coarse: FidelityParams {
                mean,
                amplitude: VelocityLinear::constant(0.02),
                phase: FRAC_PI_2,
            },
            fine: FidelityParams {
                mean: VelocityLinear {
                    value_at_reference: mean.value_at_reference + 0.06,
                    ..mean
                },
                amplitude: VelocityLinear::constant(1.6 * 0.02),
                phase: FRAC_PI_2,
            },
            strouhal: 0.3,
            diameter: 0.1,
            ramp_tau: 1.5,
            noise_std: 0.0,
        }
    }

    pub fn lift() -> Self {
        Self {
            coarse: FidelityParams {
                mean: VelocityLinear::constant(0.0),
                amplitude: VelocityLinear::constant(0.55),
                phase: 0.0,
            },
            fine: FidelityParams {
                mean: VelocityLinear::constant(0.0),
                amplitude: VelocityLinear::constant(1.0),
                phase: 0.0,
            },
            ..Self::drag()
        }
    }

    pub fn for_target(target: Target) -> Self {
        match target {
            Target::Drag => Self::drag(),
            Target::Lift => Self::lift(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ramp_tau > 0.0) {
            return Err(Error::InvalidArgument(format!("ramp tau must be > 0, got {}", self.ramp_tau)));
        }
        if !(self.strouhal > 0.0 && self.diameter > 0.0) {
            return Err(Error::InvalidArgument(
                "strouhal number and diameter must be > 0".into(),
            ));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::InvalidArgument(format!("noise std must be >= 0, got {}", self.noise_std)));
        }
        Ok(())
    }

    pub fn frequency(&self, u: f64) -> f64 {
        shedding_frequency(self.strouhal, u, self.diameter)
    }

    /// Noise-free value of one fidelity.
    pub fn clean_value(&self, fidelity: &FidelityParams, u: f64, t: f64) -> f64 {
        let ramp = 1.0 - (-t / self.ramp_tau).exp();
        fidelity.mean.at(u)
            + fidelity.amplitude.at(u) * ramp * (2.0 * PI * self.frequency(u) * t + fidelity.phase).sin()
    }
}

/// `q` uniformly spaced times from `t0` to `tf` inclusive.
pub fn uniform_grid(q: usize, t0: f64, tf: f64) -> Result<Vec<f64>> {
    if q < 2 {
        return Err(Error::InvalidArgument(format!("need q >= 2 samples, got {q}")));
    }
    if !(t0 < tf) {
        return Err(Error::InvalidArgument(format!("empty time window [{t0}, {tf}]")));
    }
    let dt = (tf - t0) / (q - 1) as f64;
    Ok((0..q)
        .map(|j| if j == q - 1 { tf } else { t0 + j as f64 * dt })
        .collect())
}

/// `n` velocities drawn uniformly from `domain`, sorted ascending.
pub fn sample_velocities(n: usize, domain: (f64, f64), seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(domain.0..domain.1)).collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Coarse and fine datasets on the same velocities and time grid.
///
/// Trajectory `i` draws its noise from its own substream of `seed`, so the
/// output does not depend on scheduling.
pub fn generate_synthetic(
    params: &SyntheticGeneratorParams,
    velocities: &[f64],
    q: usize,
    t0: f64,
    tf: f64,
    seed: u64,
    target: Target,
) -> Result<(TripletDataset, TripletDataset)> {
    params.validate()?;
    if velocities.is_empty() {
        return Err(Error::Empty("no velocities to simulate"));
    }
    let times = uniform_grid(q, t0, tf)?;
    let noise = Normal::new(0.0, params.noise_std)
        .map_err(|e| Error::InvalidArgument(format!("noise std: {e}")))?;
    let build = |fidelity: &FidelityParams, stream: u64| -> Vec<Trajectory> {
        velocities
            .par_iter()
            .enumerate()
            .map(|(i, &u)| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 2 * i as u64 + stream));
                let values = times
                    .iter()
                    .map(|&t| {
                        let clean = params.clean_value(fidelity, u, t);
                        if params.noise_std > 0.0 {
                            clean + noise.sample(&mut rng)
                        } else {
                            clean
                        }
                    })
                    .collect();
                Trajectory {
                    u_bar: u,
                    times: times.clone(),
                    values,
                }
            })
            .collect()
    };
    let label = TargetLabel::from(target);
    let coarse = TripletDataset::new(build(&params.coarse, 0), label, t0, tf)?;
    let fine = TripletDataset::new(build(&params.fine, 1), label, t0, tf)?;
    Ok((coarse, fine))
}
