use ndarray::Array2;

use super::{ArchitectureConfig, FourierMap, Normalization, QueryBlock, TrunkKind};
use crate::error::{Error, Result};
use crate::nn::{derive_seed, DenseNetwork, DenseNetworkSpec, ForwardCache, NetGradients};

/// Branch/trunk operator network `G(u)(t) = sum_k phi_k(u) psi_k(t)`.
///
/// The branch consumes the normalized velocity; the trunk consumes the
/// normalized time, optionally lifted through a frozen [`FourierMap`].
#[derive(Debug, Clone, PartialEq)]
pub struct DeepOnetModel {
    branch: DenseNetwork,
    trunk: DenseNetwork,
    fourier: Option<FourierMap>,
    normalization: Normalization,
}

#[derive(Debug, Clone)]
pub struct DeepOnetCache {
    branch: ForwardCache,
    trunk: ForwardCache,
    phi: Array2<f64>,
    psi: Array2<f64>,
    pairs: Vec<(usize, usize)>,
}

/// Trainable-parameter gradients. The Fourier matrix is frozen and has no entry.
#[derive(Debug, Clone, PartialEq)]
pub struct DeepOnetGradients {
    pub branch: NetGradients,
    pub trunk: NetGradients,
}

impl DeepOnetCache {
    pub fn min_abs_hidden_preactivation(&self) -> f64 {
        self.branch
            .min_abs_hidden_preactivation()
            .min(self.trunk.min_abs_hidden_preactivation())
    }
}

impl DeepOnetGradients {
    pub fn is_zero(&self) -> bool {
        self.branch.is_zero() && self.trunk.is_zero()
    }
}

impl DeepOnetModel {
    pub fn new(
        arch: &ArchitectureConfig,
        trunk_kind: TrunkKind,
        normalization: Normalization,
        seed: u64,
    ) -> Result<Self> {
        let branch = DenseNetwork::init(DenseNetworkSpec::new(arch.widths(1), derive_seed(seed, 1)))?;
        let fourier = match trunk_kind {
            TrunkKind::Fourier => Some(FourierMap::new(
                arch.fourier_features,
                1,
                arch.fourier_sigma,
                derive_seed(seed, 3),
            )?),
            TrunkKind::Vanilla => None,
        };
        let trunk_input = fourier.as_ref().map_or(1, FourierMap::output_dim);
        let trunk = DenseNetwork::init(DenseNetworkSpec::new(
            arch.widths(trunk_input),
            derive_seed(seed, 2),
        ))?;
        Self::from_parts(branch, trunk, fourier, normalization)
    }

    /// Assembles a model from existing networks, checking every width contract.
    pub fn from_parts(
        branch: DenseNetwork,
        trunk: DenseNetwork,
        fourier: Option<FourierMap>,
        normalization: Normalization,
    ) -> Result<Self> {
        normalization.validate()?;
        if branch.input_width() != 1 {
            return Err(Error::DimensionMismatch {
                context: "branch input width",
                expected: 1,
                received: branch.input_width(),
            });
        }
        if let Some(map) = &fourier {
            if map.input_dim() != 1 {
                return Err(Error::DimensionMismatch {
                    context: "fourier input dimension",
                    expected: 1,
                    received: map.input_dim(),
                });
            }
        }
        let trunk_input = fourier.as_ref().map_or(1, FourierMap::output_dim);
        if trunk.input_width() != trunk_input {
            return Err(Error::DimensionMismatch {
                context: "trunk input width",
                expected: trunk_input,
                received: trunk.input_width(),
            });
        }
        if branch.output_width() != trunk.output_width() {
            return Err(Error::DimensionMismatch {
                context: "basis size (trunk output vs branch output)",
                expected: branch.output_width(),
                received: trunk.output_width(),
            });
        }
        Ok(Self {
            branch,
            trunk,
            fourier,
            normalization,
        })
    }

    pub fn branch(&self) -> &DenseNetwork {
        &self.branch
    }

    pub fn trunk(&self) -> &DenseNetwork {
        &self.trunk
    }

    pub fn fourier(&self) -> Option<&FourierMap> {
        self.fourier.as_ref()
    }

    pub fn trunk_kind(&self) -> TrunkKind {
        if self.fourier.is_some() {
            TrunkKind::Fourier
        } else {
            TrunkKind::Vanilla
        }
    }

    pub fn basis_size(&self) -> usize {
        self.branch.output_width()
    }

    pub fn normalization(&self) -> &Normalization {
        &self.normalization
    }

    pub(crate) fn networks_mut(&mut self) -> [&mut DenseNetwork; 2] {
        [&mut self.branch, &mut self.trunk]
    }

    /// Point evaluation. Queries outside the normalization domain are logged
    /// as extrapolation, not rejected.
    pub fn eval(&self, u: f64, t: f64) -> Result<f64> {
        for w in self.normalization.extrapolation_warnings(u, &[t]) {
            log::warn!("{w}");
        }
        let (values, _) = self.forward_block(&QueryBlock::single(u, t))?;
        Ok(values[0])
    }

    /// Point gradients of `output_gradient * G(u)(t)` with respect to every
    /// trainable parameter.
    pub fn gradients(&self, u: f64, t: f64, output_gradient: f64) -> Result<DeepOnetGradients> {
        if !output_gradient.is_finite() {
            return Err(Error::NonFinite("output gradient".into()));
        }
        let (_, cache) = self.forward_block(&QueryBlock::single(u, t))?;
        self.backward_block(&cache, &[output_gradient])
    }

    pub fn forward_block(&self, block: &QueryBlock) -> Result<(Vec<f64>, DeepOnetCache)> {
        block.validate()?;
        let u = Array2::from_shape_fn((block.velocities.len(), 1), |(r, _)| {
            self.normalization.velocity(block.velocities[r])
        });
        let t = Array2::from_shape_fn((block.times.len(), 1), |(c, _)| {
            self.normalization.time(block.times[c])
        });
        let trunk_in = match &self.fourier {
            Some(map) => map.features_batch(t.view())?,
            None => t,
        };
        let (phi, branch_cache) = self.branch.forward_batch(u.view())?;
        let (psi, trunk_cache) = self.trunk.forward_batch(trunk_in.view())?;
        let values = block
            .pairs
            .iter()
            .map(|&(r, c)| phi.row(r).dot(&psi.row(c)))
            .collect();
        Ok((
            values,
            DeepOnetCache {
                branch: branch_cache,
                trunk: trunk_cache,
                phi,
                psi,
                pairs: block.pairs.clone(),
            },
        ))
    }

    /// Product rule: the branch receives `g * psi`, the trunk `g * phi`.
    pub fn backward_block(
        &self,
        cache: &DeepOnetCache,
        output_gradient: &[f64],
    ) -> Result<DeepOnetGradients> {
        if output_gradient.len() != cache.pairs.len() {
            return Err(Error::DimensionMismatch {
                context: "deeponet output gradient",
                expected: cache.pairs.len(),
                received: output_gradient.len(),
            });
        }
        let mut d_phi = Array2::zeros(cache.phi.raw_dim());
        let mut d_psi = Array2::zeros(cache.psi.raw_dim());
        for (&(r, c), &g) in cache.pairs.iter().zip(output_gradient) {
            if g == 0.0 {
                continue;
            }
            d_phi.row_mut(r).scaled_add(g, &cache.psi.row(c));
            d_psi.row_mut(c).scaled_add(g, &cache.phi.row(r));
        }
        let (branch, _) = self.branch.backward_batch(&cache.branch, d_phi.view())?;
        let (trunk, _) = self.trunk.backward_batch(&cache.trunk, d_psi.view())?;
        Ok(DeepOnetGradients { branch, trunk })
    }

    /// Branch coefficients `phi(u)` for a set of velocities (rows).
    pub fn branch_outputs(&self, velocities: &[f64]) -> Result<Array2<f64>> {
        let u = Array2::from_shape_fn((velocities.len(), 1), |(r, _)| {
            self.normalization.velocity(velocities[r])
        });
        Ok(self.branch.forward_batch(u.view())?.0)
    }

    /// Trunk basis functions `psi(t)` for a set of times (rows).
    pub fn trunk_outputs(&self, times: &[f64]) -> Result<Array2<f64>> {
        let t = Array2::from_shape_fn((times.len(), 1), |(c, _)| self.normalization.time(times[c]));
        let trunk_in = match &self.fourier {
            Some(map) => map.features_batch(t.view())?,
            None => t,
        };
        Ok(self.trunk.forward_batch(trunk_in.view())?.0)
    }

    /// Activations feeding the last branch layer, one row per velocity.
    pub fn branch_features(&self, velocities: &[f64]) -> Array2<f64> {
        let mut h = Array2::from_shape_fn((velocities.len(), 1), |(r, _)| {
            self.normalization.velocity(velocities[r])
        });
        let layers = self.branch.layers();
        for layer in &layers[..layers.len() - 1] {
            h = layer.apply(h.view(), self.branch.spec().hidden_activation);
        }
        h
    }

    /// Activations feeding the last trunk layer, one row per time.
    pub fn trunk_features(&self, times: &[f64]) -> Result<Array2<f64>> {
        let t = Array2::from_shape_fn((times.len(), 1), |(c, _)| self.normalization.time(times[c]));
        let mut h = match &self.fourier {
            Some(map) => map.features_batch(t.view())?,
            None => t,
        };
        let layers = self.trunk.layers();
        for layer in &layers[..layers.len() - 1] {
            h = layer.apply(h.view(), self.trunk.spec().hidden_activation);
        }
        Ok(h)
    }

    pub(crate) fn trunk_mut(&mut self) -> &mut DenseNetwork {
        &mut self.trunk
    }

    pub(crate) fn branch_mut(&mut self) -> &mut DenseNetwork {
        &mut self.branch
    }
}
