//! Operator architectures: the Fourier-feature trunk embedding, the
//! branch/trunk DeepONet and the physics-guided `chi * sin(omega t + delta)`
//! composition of three DeepONets.

mod deeponet;
mod fourier;
mod physics;

use serde::{Deserialize, Serialize};

pub use deeponet::{DeepOnetCache, DeepOnetGradients, DeepOnetModel};
pub use fourier::FourierMap;
pub use physics::{PhysicsCache, PhysicsComponent, PhysicsGradients, PhysicsGuidedModel};

use crate::error::{Error, Result};
use crate::nn::{DenseNetwork, NetGradients};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrunkKind {
    Fourier,
    Vanilla,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorVariant {
    PhysicsGuided,
    DataDriven,
}

impl OperatorVariant {
    pub fn letter(self) -> char {
        match self {
            OperatorVariant::PhysicsGuided => 'P',
            OperatorVariant::DataDriven => 'D',
        }
    }
}

/// Layer sizes shared by every branch and trunk network of an operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchitectureConfig {
    pub hidden_layers: usize,
    pub width: usize,
    /// Number of basis functions `p` in the branch/trunk dot product.
    pub basis_size: usize,
    pub fourier_features: usize,
    pub fourier_sigma: f64,
}

impl Default for ArchitectureConfig {
    fn default() -> Self {
        Self {
            hidden_layers: 3,
            width: 100,
            basis_size: 100,
            fourier_features: 100,
            fourier_sigma: 50.0,
        }
    }
}

impl ArchitectureConfig {
    pub(crate) fn widths(&self, input: usize) -> Vec<usize> {
        let mut widths = vec![input];
        widths.extend(std::iter::repeat_n(self.width, self.hidden_layers));
        widths.push(self.basis_size);
        widths
    }
}

/// Affine input scaling: `u -> (u - u_center) / u_scale`, `t -> (t - t_offset) / t_scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub u_center: f64,
    pub u_scale: f64,
    pub t_offset: f64,
    pub t_scale: f64,
}

impl Default for Normalization {
    fn default() -> Self {
        Self {
            u_center: 1.0,
            u_scale: 0.1,
            t_offset: 0.0,
            t_scale: 8.0,
        }
    }
}

impl Normalization {
    pub fn from_domains(velocity: (f64, f64), time: (f64, f64)) -> Result<Self> {
        let n = Self {
            u_center: 0.5 * (velocity.0 + velocity.1),
            u_scale: 0.5 * (velocity.1 - velocity.0),
            t_offset: time.0,
            t_scale: time.1 - time.0,
        };
        n.validate()?;
        Ok(n)
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [self.u_center, self.u_scale, self.t_offset, self.t_scale];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("normalization constants".into()));
        }
        if self.u_scale == 0.0 || self.t_scale == 0.0 {
            return Err(Error::InvalidArgument("normalization scale must be nonzero".into()));
        }
        Ok(())
    }

    pub fn velocity(&self, u: f64) -> f64 {
        (u - self.u_center) / self.u_scale
    }

    pub fn time(&self, t: f64) -> f64 {
        (t - self.t_offset) / self.t_scale
    }

    pub fn velocity_domain(&self) -> (f64, f64) {
        let half = self.u_scale.abs();
        (self.u_center - half, self.u_center + half)
    }

    pub fn time_domain(&self) -> (f64, f64) {
        let (a, b) = (self.t_offset, self.t_offset + self.t_scale);
        (a.min(b), a.max(b))
    }

    /// Human-readable warnings for queries outside the training domain.
    pub fn extrapolation_warnings(&self, u: f64, times: &[f64]) -> Vec<String> {
        let mut warnings = Vec::new();
        let (lo, hi) = self.velocity_domain();
        // Small tolerance so domain endpoints written as decimals do not warn.
        let eps = 1e-12 * (hi - lo).abs().max(1.0);
        if u < lo - eps || u > hi + eps {
            warnings.push(format!(
                "velocity {u} m/s lies outside the training domain [{lo}, {hi}]; extrapolating"
            ));
        }
        let (t0, tf) = self.time_domain();
        let teps = 1e-12 * (tf - t0).abs().max(1.0);
        if let Some(&t) = times.iter().find(|&&t| t < t0 - teps || t > tf + teps) {
            warnings.push(format!(
                "time {t} s lies outside the training window [{t0}, {tf}]; extrapolating"
            ));
        }
        warnings
    }
}

/// A set of (velocity, time) queries sharing branch and trunk evaluations.
///
/// Branch networks run once per entry of `velocities`, trunk networks once per
/// entry of `times`; `pairs` selects the (velocity index, time index) products.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryBlock {
    pub velocities: Vec<f64>,
    pub times: Vec<f64>,
    pub pairs: Vec<(usize, usize)>,
}

impl QueryBlock {
    pub fn single(u: f64, t: f64) -> Self {
        Self {
            velocities: vec![u],
            times: vec![t],
            pairs: vec![(0, 0)],
        }
    }

    /// Full outer product, velocity-major.
    pub fn grid(velocities: Vec<f64>, times: Vec<f64>) -> Self {
        let pairs = (0..velocities.len())
            .flat_map(|r| (0..times.len()).map(move |c| (r, c)))
            .collect();
        Self {
            velocities,
            times,
            pairs,
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.pairs.is_empty() {
            return Err(Error::Empty("query block"));
        }
        if self.velocities.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("query velocity".into()));
        }
        if self.times.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("query time".into()));
        }
        for &(r, c) in &self.pairs {
            if r >= self.velocities.len() {
                return Err(Error::DimensionMismatch {
                    context: "query velocity index",
                    expected: self.velocities.len(),
                    received: r,
                });
            }
            if c >= self.times.len() {
                return Err(Error::DimensionMismatch {
                    context: "query time index",
                    expected: self.times.len(),
                    received: c,
                });
            }
        }
        Ok(())
    }
}

/// A trained or trainable operator of either architecture.
#[derive(Debug, Clone, PartialEq)]
pub enum Operator {
    DataDriven(DeepOnetModel),
    PhysicsGuided(PhysicsGuidedModel),
}

#[derive(Debug, Clone)]
pub enum OperatorCache {
    DataDriven(DeepOnetCache),
    PhysicsGuided(PhysicsCache),
}

#[derive(Debug, Clone, PartialEq)]
pub enum OperatorGradients {
    DataDriven(DeepOnetGradients),
    PhysicsGuided(PhysicsGradients),
}

impl OperatorCache {
    /// Distance of the nearest ReLU unit from its kink, for gradient checks.
    pub fn min_abs_hidden_preactivation(&self) -> f64 {
        match self {
            OperatorCache::DataDriven(c) => c.min_abs_hidden_preactivation(),
            OperatorCache::PhysicsGuided(c) => c.min_abs_hidden_preactivation(),
        }
    }
}

impl OperatorGradients {
    /// Per-network gradients in the order of [`Operator::networks`].
    pub fn into_networks(self) -> Vec<NetGradients> {
        match self {
            OperatorGradients::DataDriven(g) => vec![g.branch, g.trunk],
            OperatorGradients::PhysicsGuided(g) => vec![
                g.chi.branch,
                g.chi.trunk,
                g.omega.branch,
                g.omega.trunk,
                g.delta.branch,
                g.delta.trunk,
            ],
        }
    }
}

impl Operator {
    pub fn new(
        variant: OperatorVariant,
        arch: &ArchitectureConfig,
        trunk_kind: TrunkKind,
        normalization: Normalization,
        seed: u64,
    ) -> Result<Self> {
        Ok(match variant {
            OperatorVariant::DataDriven => {
                Operator::DataDriven(DeepOnetModel::new(arch, trunk_kind, normalization, seed)?)
            }
            OperatorVariant::PhysicsGuided => Operator::PhysicsGuided(PhysicsGuidedModel::new(
                arch,
                trunk_kind,
                normalization,
                seed,
            )?),
        })
    }

    pub fn variant(&self) -> OperatorVariant {
        match self {
            Operator::DataDriven(_) => OperatorVariant::DataDriven,
            Operator::PhysicsGuided(_) => OperatorVariant::PhysicsGuided,
        }
    }

    pub fn normalization(&self) -> &Normalization {
        match self {
            Operator::DataDriven(m) => m.normalization(),
            Operator::PhysicsGuided(m) => m.normalization(),
        }
    }

    pub fn eval(&self, u: f64, t: f64) -> Result<f64> {
        match self {
            Operator::DataDriven(m) => m.eval(u, t),
            Operator::PhysicsGuided(m) => m.eval(u, t),
        }
    }

    pub fn forward_block(&self, block: &QueryBlock) -> Result<(Vec<f64>, OperatorCache)> {
        Ok(match self {
            Operator::DataDriven(m) => {
                let (v, c) = m.forward_block(block)?;
                (v, OperatorCache::DataDriven(c))
            }
            Operator::PhysicsGuided(m) => {
                let (v, c) = m.forward_block(block)?;
                (v, OperatorCache::PhysicsGuided(c))
            }
        })
    }

    pub fn backward_block(
        &self,
        cache: &OperatorCache,
        output_gradient: &[f64],
    ) -> Result<OperatorGradients> {
        match (self, cache) {
            (Operator::DataDriven(m), OperatorCache::DataDriven(c)) => {
                Ok(OperatorGradients::DataDriven(m.backward_block(c, output_gradient)?))
            }
            (Operator::PhysicsGuided(m), OperatorCache::PhysicsGuided(c)) => Ok(
                OperatorGradients::PhysicsGuided(m.backward_block(c, output_gradient)?),
            ),
            _ => Err(Error::InvalidArgument(
                "forward cache belongs to a different operator variant".into(),
            )),
        }
    }

    /// Values on the outer product of `velocities` and `times`, velocity-major.
    pub fn predict_grid(&self, velocities: &[f64], times: &[f64]) -> Result<Vec<Vec<f64>>> {
        let block = QueryBlock::grid(velocities.to_vec(), times.to_vec());
        let (values, _) = self.forward_block(&block)?;
        Ok(values.chunks(times.len()).map(<[f64]>::to_vec).collect())
    }

    /// Trajectory for one velocity over a time partition.
    pub fn predict_trajectory(&self, u: f64, times: &[f64]) -> Result<Vec<f64>> {
        Ok(self.predict_grid(&[u], times)?.remove(0))
    }

    pub fn networks(&self) -> Vec<&DenseNetwork> {
        match self {
            Operator::DataDriven(m) => vec![m.branch(), m.trunk()],
            Operator::PhysicsGuided(m) => [m.chi(), m.omega(), m.delta()]
                .into_iter()
                .flat_map(|d| [d.branch(), d.trunk()])
                .collect(),
        }
    }

    pub fn networks_mut(&mut self) -> Vec<&mut DenseNetwork> {
        match self {
            Operator::DataDriven(m) => m.networks_mut().into(),
            Operator::PhysicsGuided(m) => m.networks_mut(),
        }
    }

    pub fn num_parameters(&self) -> usize {
        self.networks().iter().map(|n| n.num_parameters()).sum()
    }

    pub fn fourier_maps(&self) -> Vec<&FourierMap> {
        match self {
            Operator::DataDriven(m) => m.fourier().into_iter().collect(),
            Operator::PhysicsGuided(m) => [m.chi(), m.omega(), m.delta()]
                .into_iter()
                .filter_map(|d| d.fourier())
                .collect(),
        }
    }
}
