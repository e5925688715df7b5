//! Closed-form relations of the channel-flow cylinder benchmark.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geometry and fluid properties of the benchmark channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConstants {
    /// Cylinder diameter (m).
    pub diameter: f64,
    /// Channel length (m).
    pub length: f64,
    /// Channel height (m).
    pub height: f64,
    /// Kinematic viscosity (m^2/s).
    pub viscosity: f64,
    /// Density (kg/m^3).
    pub density: f64,
    /// Strouhal number used by the synthetic generator.
    pub strouhal: f64,
}

impl Default for BenchmarkConstants {
    fn default() -> Self {
        Self {
            diameter: 0.1,
            length: 2.2,
            height: 0.41,
            viscosity: 0.001,
            density: 1.0,
            strouhal: 0.3,
        }
    }
}

impl BenchmarkConstants {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.diameter,
            self.length,
            self.height,
            self.viscosity,
            self.density,
            self.strouhal,
        ];
        if all.iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "benchmark constants must be strictly positive: {self:?}"
            )))
        }
    }
}

/// Parabolic inlet profile `u_max * (1 - (2 (y - H/2) / H)^2)`.
pub fn parabolic_inlet(y: f64, u_max: f64, height: f64) -> Result<f64> {
    if !(height > 0.0) {
        return Err(Error::InvalidArgument(format!("channel height must be > 0, got {height}")));
    }
    if !(0.0..=height).contains(&y) {
        return Err(Error::InvalidArgument(format!("y = {y} lies outside [0, {height}]")));
    }
    let s = 2.0 * (y - 0.5 * height) / height;
    Ok(u_max * (1.0 - s * s))
}

/// Cross-section mean of the parabolic profile: two thirds of the peak.
pub fn mean_velocity(u_max: f64) -> f64 {
    2.0 * u_max / 3.0
}

/// Reynolds number `u D / nu`.
pub fn reynolds(u_bar: f64, diameter: f64, viscosity: f64) -> Result<f64> {
    if !(viscosity > 0.0) {
        return Err(Error::InvalidArgument(format!("viscosity must be > 0, got {viscosity}")));
    }
    Ok(u_bar * diameter / viscosity)
}

/// Force coefficient `2 F / (rho u^2 D)`.
pub fn coefficient_from_force(force: f64, density: f64, u_bar: f64, diameter: f64) -> Result<f64> {
    let denominator = density * u_bar * u_bar * diameter;
    if !(density > 0.0 && u_bar > 0.0 && diameter > 0.0) || denominator == 0.0 {
        return Err(Error::InvalidArgument(format!(
            "coefficient needs positive density, velocity and diameter (rho={density}, u={u_bar}, D={diameter})"
        )));
    }
    Ok(2.0 * force / denominator)
}

/// Shedding frequency in Hz from the Strouhal relation `f = St u / D`.
pub fn shedding_frequency(strouhal: f64, u_bar: f64, diameter: f64) -> f64 {
    strouhal * u_bar / diameter
}

#[cfg(test)]
mod tests {
    use super::*;

    const H: f64 = 0.41;

    #[test]
    fn inlet_profile() {
        assert_eq!(parabolic_inlet(H / 2.0, 1.5, H).unwrap(), 1.5);
        assert_eq!(parabolic_inlet(0.0, 1.5, H).unwrap(), 0.0);
        assert!(parabolic_inlet(H, 1.5, H).unwrap().abs() < 1e-15);
        assert!(parabolic_inlet(-0.01, 1.5, H).is_err());
        assert!(parabolic_inlet(H + 0.01, 1.5, H).is_err());
    }

    #[test]
    fn mean_of_profile() {
        assert_eq!(mean_velocity(1.5), 1.0);
        assert_eq!(mean_velocity(0.0), 0.0);
        assert_eq!(mean_velocity(3.0), 2.0);
    }

    #[test]
    fn mean_matches_profile_quadrature() {
        // Composite Simpson is exact for the quadratic profile up to rounding.
        let n = 1000;
        let h = H / n as f64;
        let f = |i: usize| parabolic_inlet((i as f64 * h).min(H), 1.5, H).unwrap();
        let mut sum = f(0) + f(n);
        for i in 1..n {
            sum += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i);
        }
        let integral = sum * h / 3.0;
        assert!((integral / H - mean_velocity(1.5)).abs() < 1e-10);
    }

    #[test]
    fn reynolds_numbers() {
        assert!((reynolds(1.0, 0.1, 0.001).unwrap() - 100.0).abs() < 1e-9);
        assert!((reynolds(0.9, 0.1, 0.001).unwrap() - 90.0).abs() < 1e-9);
        assert!((reynolds(1.1, 0.1, 0.001).unwrap() - 110.0).abs() < 1e-9);
        assert!(reynolds(1.0, 0.1, 0.0).is_err());
        assert!(reynolds(1.0, 0.1, -1.0).is_err());
    }

    #[test]
    fn force_coefficients() {
        assert!((coefficient_from_force(1.0, 1.0, 1.0, 0.1).unwrap() - 20.0).abs() < 1e-12);
        assert_eq!(coefficient_from_force(0.0, 1.0, 1.0, 0.1).unwrap(), 0.0);
        assert!((coefficient_from_force(1.0, 1.0, 2.0, 0.1).unwrap() - 5.0).abs() < 1e-12);
        assert!(coefficient_from_force(1.0, 1.0, 0.0, 0.1).is_err());
    }

    #[test]
    fn helpers_are_pure() {
        for _ in 0..3 {
            assert_eq!(parabolic_inlet(0.1, 1.5, H).unwrap(), parabolic_inlet(0.1, 1.5, H).unwrap());
            assert_eq!(reynolds(1.03, 0.1, 0.001).unwrap(), reynolds(1.03, 0.1, 0.001).unwrap());
        }
    }

    #[test]
    fn constants_positive() {
        BenchmarkConstants::default().validate().unwrap();
        let bad = BenchmarkConstants {
            viscosity: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
