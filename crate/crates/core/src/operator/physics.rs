use super::deeponet::{DeepOnetCache, DeepOnetGradients, DeepOnetModel};
use super::{ArchitectureConfig, Normalization, QueryBlock, TrunkKind};
use crate::error::{Error, Result};
use crate::nn::{derive_seed, DenseNetwork};

/// Physics-guided operator `chi(u,t) * sin(omega(u,t) * t + delta(u,t))`.
///
/// `chi`, `omega` and `delta` are independent DeepONets. The `t` multiplying
/// `omega` is raw time in seconds; the sub-networks see normalized inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicsGuidedModel {
    chi: DeepOnetModel,
    omega: DeepOnetModel,
    delta: DeepOnetModel,
}

#[derive(Debug, Clone)]
pub struct PhysicsCache {
    chi: DeepOnetCache,
    omega: DeepOnetCache,
    delta: DeepOnetCache,
    chi_values: Vec<f64>,
    omega_values: Vec<f64>,
    delta_values: Vec<f64>,
    times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhysicsGradients {
    pub chi: DeepOnetGradients,
    pub omega: DeepOnetGradients,
    pub delta: DeepOnetGradients,
}

impl PhysicsCache {
    pub fn min_abs_hidden_preactivation(&self) -> f64 {
        [&self.chi, &self.omega, &self.delta]
            .iter()
            .fold(f64::INFINITY, |m, c| m.min(c.min_abs_hidden_preactivation()))
    }
}

impl PhysicsGradients {
    pub fn is_zero(&self) -> bool {
        self.chi.is_zero() && self.omega.is_zero() && self.delta.is_zero()
    }
}

/// Which sub-network of a [`PhysicsGuidedModel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhysicsComponent {
    Amplitude,
    Frequency,
    Phase,
}

impl PhysicsGuidedModel {
    pub fn new(
        arch: &ArchitectureConfig,
        trunk_kind: TrunkKind,
        normalization: Normalization,
        seed: u64,
    ) -> Result<Self> {
        Self::with_trunks(arch, [trunk_kind; 3], normalization, seed)
    }

    /// Per-component trunk kinds in (chi, omega, delta) order.
    pub fn with_trunks(
        arch: &ArchitectureConfig,
        trunks: [TrunkKind; 3],
        normalization: Normalization,
        seed: u64,
    ) -> Result<Self> {
        Self::from_parts(
            DeepOnetModel::new(arch, trunks[0], normalization, derive_seed(seed, 11))?,
            DeepOnetModel::new(arch, trunks[1], normalization, derive_seed(seed, 12))?,
            DeepOnetModel::new(arch, trunks[2], normalization, derive_seed(seed, 13))?,
        )
    }

    pub fn from_parts(chi: DeepOnetModel, omega: DeepOnetModel, delta: DeepOnetModel) -> Result<Self> {
        if chi.normalization() != omega.normalization() || chi.normalization() != delta.normalization()
        {
            return Err(Error::InvalidArgument(
                "physics-guided sub-models must share input normalization".into(),
            ));
        }
        Ok(Self { chi, omega, delta })
    }

    pub fn chi(&self) -> &DeepOnetModel {
        &self.chi
    }

    pub fn omega(&self) -> &DeepOnetModel {
        &self.omega
    }

    pub fn delta(&self) -> &DeepOnetModel {
        &self.delta
    }

    pub fn component(&self, which: PhysicsComponent) -> &DeepOnetModel {
        match which {
            PhysicsComponent::Amplitude => &self.chi,
            PhysicsComponent::Frequency => &self.omega,
            PhysicsComponent::Phase => &self.delta,
        }
    }

    pub fn component_mut(&mut self, which: PhysicsComponent) -> &mut DeepOnetModel {
        match which {
            PhysicsComponent::Amplitude => &mut self.chi,
            PhysicsComponent::Frequency => &mut self.omega,
            PhysicsComponent::Phase => &mut self.delta,
        }
    }

    pub fn normalization(&self) -> &Normalization {
        self.chi.normalization()
    }

    pub(crate) fn networks_mut(&mut self) -> Vec<&mut DenseNetwork> {
        let mut nets = Vec::with_capacity(6);
        nets.extend(self.chi.networks_mut());
        nets.extend(self.omega.networks_mut());
        nets.extend(self.delta.networks_mut());
        nets
    }

    pub fn eval(&self, u: f64, t: f64) -> Result<f64> {
        for w in self.normalization().extrapolation_warnings(u, &[t]) {
            log::warn!("{w}");
        }
        let (values, _) = self.forward_block(&QueryBlock::single(u, t))?;
        Ok(values[0])
    }

    pub fn gradients(&self, u: f64, t: f64, output_gradient: f64) -> Result<PhysicsGradients> {
        if !output_gradient.is_finite() {
            return Err(Error::NonFinite("output gradient".into()));
        }
        let (_, cache) = self.forward_block(&QueryBlock::single(u, t))?;
        self.backward_block(&cache, &[output_gradient])
    }

    pub fn forward_block(&self, block: &QueryBlock) -> Result<(Vec<f64>, PhysicsCache)> {
        let (chi_values, chi) = self.chi.forward_block(block)?;
        let (omega_values, omega) = self.omega.forward_block(block)?;
        let (delta_values, delta) = self.delta.forward_block(block)?;
        let times: Vec<f64> = block.pairs.iter().map(|&(_, c)| block.times[c]).collect();
        let values = (0..block.pairs.len())
            .map(|k| chi_values[k] * (omega_values[k] * times[k] + delta_values[k]).sin())
            .collect();
        Ok((
            values,
            PhysicsCache {
                chi,
                omega,
                delta,
                chi_values,
                omega_values,
                delta_values,
                times,
            },
        ))
    }

    pub fn backward_block(
        &self,
        cache: &PhysicsCache,
        output_gradient: &[f64],
    ) -> Result<PhysicsGradients> {
        let n = cache.times.len();
        if output_gradient.len() != n {
            return Err(Error::DimensionMismatch {
                context: "physics output gradient",
                expected: n,
                received: output_gradient.len(),
            });
        }
        let mut g_chi = Vec::with_capacity(n);
        let mut g_omega = Vec::with_capacity(n);
        let mut g_delta = Vec::with_capacity(n);
        for k in 0..n {
            let g = output_gradient[k];
            let t = cache.times[k];
            let (s, c) = libm::sincos(cache.omega_values[k] * t + cache.delta_values[k]);
            let amp = cache.chi_values[k];
            g_chi.push(g * s);
            g_omega.push(g * amp * t * c);
            g_delta.push(g * amp * c);
        }
        Ok(PhysicsGradients {
            chi: self.chi.backward_block(&cache.chi, &g_chi)?,
            omega: self.omega.backward_block(&cache.omega, &g_omega)?,
            delta: self.delta.backward_block(&cache.delta, &g_delta)?,
        })
    }
}
