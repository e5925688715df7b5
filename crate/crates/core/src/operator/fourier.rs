use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Frozen random Fourier embedding `v -> [sin(Bv), cos(Bv)]`.
///
/// `B` is `m x d` with i.i.d. `N(0, sigma^2)` entries drawn once from `seed`
/// and never updated by training.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierMap {
    b: Array2<f64>,
    sigma: f64,
    seed: u64,
}

impl FourierMap {
    pub fn new(m: usize, d: usize, sigma: f64, seed: u64) -> Result<Self> {
        if m == 0 || d == 0 {
            return Err(Error::InvalidArgument(format!(
                "fourier map needs m, d >= 1 (got m={m}, d={d})"
            )));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!("fourier sigma must be > 0, got {sigma}")));
        }
        let normal = Normal::new(0.0, sigma)
            .map_err(|e| Error::InvalidArgument(format!("fourier sigma {sigma}: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = Array2::from_shape_simple_fn((m, d), || normal.sample(&mut rng));
        Ok(Self { b, sigma, seed })
    }

    /// Rebuilds a map from a stored frequency matrix.
    pub fn from_matrix(b: Array2<f64>, sigma: f64, seed: u64) -> Result<Self> {
        if b.is_empty() {
            return Err(Error::InvalidArgument("empty fourier matrix".into()));
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("fourier matrix".into()));
        }
        Ok(Self { b, sigma, seed })
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.b
    }

    pub fn num_features(&self) -> usize {
        self.b.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn output_dim(&self) -> usize {
        2 * self.num_features()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn features(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("fourier input".into()));
        }
        let view = ArrayView2::from_shape((1, v.len()), v).expect("row view");
        Ok(self.features_batch(view)?.into_raw_vec_and_offset().0)
    }

    /// Rows of `x` are inputs; output rows hold `m` sines followed by `m` cosines.
    pub fn features_batch(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "fourier input",
                expected: self.input_dim(),
                received: x.ncols(),
            });
        }
        let m = self.num_features();
        let proj = x.dot(&self.b.t());
        let mut out = Array2::zeros((x.nrows(), 2 * m));
        for (mut row, p) in out.rows_mut().into_iter().zip(proj.rows()) {
            for (k, &angle) in p.iter().enumerate() {
                let (s, c) = libm::sincos(angle);
                row[k] = s;
                row[m + k] = c;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn zero_input_gives_zeros_then_ones() {
        let map = FourierMap::new(5, 1, 50.0, 3).unwrap();
        let f = map.features(&[0.0]).unwrap();
        assert_eq!(&f[..5], &[0.0; 5]);
        assert_eq!(&f[5..], &[1.0; 5]);
    }

    #[test]
    fn quarter_turn() {
        let map = FourierMap::from_matrix(array![[FRAC_PI_2]], 1.0, 0).unwrap();
        let f = map.features(&[1.0]).unwrap();
        assert!((f[0] - 1.0).abs() < 1e-12);
        assert!(f[1].abs() < 1e-12);
    }

    #[test]
    fn output_length() {
        let map = FourierMap::new(4, 1, 1.0, 0).unwrap();
        assert_eq!(map.features(&[0.3]).unwrap().len(), 8);
    }

    #[test]
    fn dimension_mismatch() {
        let map = FourierMap::new(4, 2, 1.0, 0).unwrap();
        assert!(matches!(map.features(&[0.3]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn deterministic_and_sigma_scaled() {
        let a = FourierMap::new(2000, 1, 50.0, 9).unwrap();
        assert_eq!(a, FourierMap::new(2000, 1, 50.0, 9).unwrap());
        let n = a.matrix().len() as f64;
        let mean = a.matrix().sum() / n;
        let std = (a.matrix().mapv(|v| (v - mean).powi(2)).sum() / n).sqrt();
        assert!(mean.abs() < 5.0, "mean {mean}");
        assert!((std - 50.0).abs() < 3.0, "std {std}");
    }

    #[test]
    fn rejects_bad_sigma() {
        assert!(FourierMap::new(3, 1, 0.0, 0).is_err());
        assert!(FourierMap::new(3, 1, -1.0, 0).is_err());
    }

    proptest! {
        #[test]
        fn bounded_outputs(v in -100.0f64..100.0, seed in 0u64..1000) {
            let map = FourierMap::new(16, 1, 50.0, seed).unwrap();
            let f = map.features(&[v]).unwrap();
            prop_assert_eq!(f.len(), 32);
            prop_assert!(f.iter().all(|x| (-1.0..=1.0).contains(x)));
        }
    }
}
