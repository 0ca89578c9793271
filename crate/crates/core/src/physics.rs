//! Cavity and detection-efficiency calculations.
//!
//! Turns mirror coating specifications into the quantities that matter for a
//! squeezing experiment: free spectral range, finesse, linewidth and escape
//! efficiency. Also hosts the decibel helpers used by every other module.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Speed of light in vacuum, m/s (exact).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Error)]
pub enum PhysicsError {
    #[error("ratio must be positive, got {0}")]
    NonPositiveRatio(f64),
    #[error("round-trip length must be positive, got {0} m")]
    NonPositiveLength(f64),
    #[error("invalid cavity geometry: {0}")]
    InvalidGeometry(String),
    #[error("round-trip amplitude factor {0} >= 1: cavity has no decay channel")]
    ClosedCavity(f64),
    #[error("output coupler transmission must be positive, got {0}")]
    NonPositiveTransmission(f64),
    #[error("round-trip loss must be non-negative, got {0}")]
    NegativeLoss(f64),
    #[error("invalid loss budget: {0}")]
    InvalidBudget(String),
}

/// Wavelength band a set of coating numbers refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WavelengthBand {
    #[serde(rename = "fundamental_1550")]
    Fundamental1550,
    #[serde(rename = "pump_775")]
    Pump775,
}

/// Mirror and coating description of the OPO cavity for one wavelength band.
///
/// Reflectivities and losses are power fractions. The per-pass intracavity
/// loss (AR coating plus absorption/scatter) is applied twice per round trip,
/// once for each crystal traversal.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CavityGeometry {
    /// Round-trip optical path length in meters, refractive index folded in.
    pub round_trip_length_m: f64,
    pub output_coupler_power_reflectivity: f64,
    pub back_mirror_power_reflectivity: f64,
    pub per_pass_intracavity_power_loss: f64,
    pub wavelength_band: WavelengthBand,
}

impl CavityGeometry {
    pub fn validate(&self) -> Result<(), PhysicsError> {
        let err = |msg: String| Err(PhysicsError::InvalidGeometry(msg));
        if !(self.round_trip_length_m > 0.0) {
            return err(format!(
                "round-trip length must be positive, got {}",
                self.round_trip_length_m
            ));
        }
        for (name, v) in [
            ("output coupler reflectivity", self.output_coupler_power_reflectivity),
            ("back mirror reflectivity", self.back_mirror_power_reflectivity),
            ("per-pass loss", self.per_pass_intracavity_power_loss),
        ] {
            if !(0.0..1.0).contains(&v) {
                return err(format!("{name} must be in [0, 1), got {v}"));
            }
        }
        Ok(())
    }

    /// One-way power transmission of the output coupler.
    pub fn output_coupler_transmission(&self) -> f64 {
        1.0 - self.output_coupler_power_reflectivity
    }

    /// Total round-trip power loss excluding the output coupler: back-mirror
    /// leakage plus the per-pass loss counted twice.
    pub fn round_trip_loss(&self) -> f64 {
        (1.0 - self.back_mirror_power_reflectivity) + 2.0 * self.per_pass_intracavity_power_loss
    }
}

/// Derived cavity quantities. `fsr = finesse * fwhm` holds by construction.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CavityCharacter {
    pub fsr_hz: f64,
    pub finesse: f64,
    pub fwhm_hz: f64,
    pub escape_efficiency: f64,
}

impl CavityCharacter {
    pub fn from_geometry(geometry: &CavityGeometry) -> Result<Self, PhysicsError> {
        geometry.validate()?;
        let fsr_hz = free_spectral_range(geometry.round_trip_length_m)?;
        let finesse = finesse(geometry)?;
        let escape_efficiency = escape_efficiency(
            geometry.output_coupler_transmission(),
            geometry.round_trip_loss(),
        )?;
        Ok(CavityCharacter {
            fsr_hz,
            finesse,
            fwhm_hz: fsr_hz / finesse,
            escape_efficiency,
        })
    }
}

/// The four detection-efficiency factors. Visibility enters squared in the
/// total, the others linearly.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LossBudget {
    pub escape_efficiency: f64,
    pub optical_path_efficiency: f64,
    pub visibility: f64,
    pub quantum_efficiency: f64,
}

impl LossBudget {
    pub fn validate(&self) -> Result<(), PhysicsError> {
        for (name, v) in [
            ("escape efficiency", self.escape_efficiency),
            ("optical path efficiency", self.optical_path_efficiency),
            ("visibility", self.visibility),
            ("quantum efficiency", self.quantum_efficiency),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(PhysicsError::InvalidBudget(format!(
                    "{name} must be in (0, 1], got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// 10*log10 of a power-like ratio.
pub fn db_from_ratio(ratio: f64) -> Result<f64, PhysicsError> {
    if !(ratio > 0.0) {
        return Err(PhysicsError::NonPositiveRatio(ratio));
    }
    Ok(10.0 * ratio.log10())
}

/// Inverse of [`db_from_ratio`].
pub fn ratio_from_db(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// FSR in hertz of a cavity with the given round-trip optical length.
pub fn free_spectral_range(round_trip_length_m: f64) -> Result<f64, PhysicsError> {
    if !(round_trip_length_m > 0.0) {
        return Err(PhysicsError::NonPositiveLength(round_trip_length_m));
    }
    Ok(SPEED_OF_LIGHT / round_trip_length_m)
}

/// Finesse from the round-trip amplitude factor
/// `rho = sqrt(R_out * R_back) * (1 - per_pass_loss)`, as `pi*sqrt(rho)/(1-rho)`.
///
/// High-finesse closed form; below finesse ~50 it deviates from the exact
/// arcsin expression by more than 0.1%.
pub fn finesse(geometry: &CavityGeometry) -> Result<f64, PhysicsError> {
    geometry.validate()?;
    let rho = (geometry.output_coupler_power_reflectivity
        * geometry.back_mirror_power_reflectivity)
        .sqrt()
        * (1.0 - geometry.per_pass_intracavity_power_loss);
    if rho >= 1.0 {
        return Err(PhysicsError::ClosedCavity(rho));
    }
    Ok(std::f64::consts::PI * rho.sqrt() / (1.0 - rho))
}

/// Probability that an intracavity photon leaves through the output coupler
/// rather than any other loss channel: `T / (T + L)`.
pub fn escape_efficiency(
    output_coupler_transmission: f64,
    total_round_trip_loss: f64,
) -> Result<f64, PhysicsError> {
    if !(output_coupler_transmission > 0.0) {
        return Err(PhysicsError::NonPositiveTransmission(output_coupler_transmission));
    }
    if !(total_round_trip_loss >= 0.0) {
        return Err(PhysicsError::NegativeLoss(total_round_trip_loss));
    }
    Ok(output_coupler_transmission / (output_coupler_transmission + total_round_trip_loss))
}

/// Total detection efficiency `eta_esc * eta_opt * V^2 * eta_qe`.
pub fn total_efficiency(budget: &LossBudget) -> Result<f64, PhysicsError> {
    budget.validate()?;
    Ok(budget.escape_efficiency
        * budget.optical_path_efficiency
        * budget.visibility
        * budget.visibility
        * budget.quantum_efficiency)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn geometry(r_out: f64, r_back: f64, loss: f64) -> CavityGeometry {
        CavityGeometry {
            round_trip_length_m: 0.077,
            output_coupler_power_reflectivity: r_out,
            back_mirror_power_reflectivity: r_back,
            per_pass_intracavity_power_loss: loss,
            wavelength_band: WavelengthBand::Fundamental1550,
        }
    }

    #[test]
    fn db_identity_and_reference_points() {
        assert_eq!(db_from_ratio(1.0).unwrap(), 0.0);
        assert_relative_eq!(db_from_ratio(0.5).unwrap(), -3.0103, max_relative = 1e-4);
        assert_relative_eq!(db_from_ratio(0.12445).unwrap(), -9.050, epsilon = 5e-4);
        assert!(db_from_ratio(0.0).is_err());
        assert!(db_from_ratio(-1.0).is_err());
    }

    #[test]
    fn fsr_reference_points() {
        assert_relative_eq!(
            free_spectral_range(0.077).unwrap(),
            3.8934e9,
            max_relative = 1e-4
        );
        assert_eq!(free_spectral_range(0.299792458).unwrap(), 1.0e9);
        // halving the cavity length doubles the FSR
        assert_relative_eq!(
            free_spectral_range(0.1540).unwrap(),
            free_spectral_range(0.077).unwrap() / 2.0,
            max_relative = 1e-12
        );
        assert_relative_eq!(free_spectral_range(0.1540).unwrap(), 1.9467e9, max_relative = 1e-4);
        assert!(free_spectral_range(0.0).is_err());
    }

    #[test]
    fn finesse_matches_coating_specs() {
        // 1550 nm signal mode: quoted as "around 58"
        let f1550 = finesse(&geometry(0.90, 0.9995, 0.0)).unwrap();
        assert_relative_eq!(f1550, 59.3, max_relative = 2e-3);
        // 775 nm pump mode: quoted as "around 200"
        let f775 = finesse(&geometry(0.975, 0.995, 0.0)).unwrap();
        assert_relative_eq!(f775, 207.0, max_relative = 2e-3);
    }

    #[test]
    fn finesse_high_reflectivity_asymptote() {
        // With both power reflectivities at 1-eps the amplitude factor is
        // rho = 1-eps, so finesse -> pi*sqrt(1-eps)/eps ~ pi/eps.
        let eps = 1e-4;
        let f = finesse(&geometry(1.0 - eps, 1.0 - eps, 0.0)).unwrap();
        assert_relative_eq!(f, std::f64::consts::PI / eps, max_relative = 1e-2);
    }

    #[test]
    fn escape_efficiency_reference_points() {
        // T = 10% output coupler, L = HR leak 0.0005 + 2 x 0.001 AR passes
        assert_relative_eq!(
            escape_efficiency(0.10, 0.0025).unwrap(),
            0.9756,
            epsilon = 1e-4
        );
        assert_eq!(escape_efficiency(0.10, 0.0).unwrap(), 1.0);
        assert_eq!(escape_efficiency(0.10, 0.10).unwrap(), 0.5);
        assert!(escape_efficiency(0.0, 0.0).is_err());
    }

    #[test]
    fn total_efficiency_reference_points() {
        let budget = LossBudget {
            escape_efficiency: 0.97,
            optical_path_efficiency: 0.999f64.powi(7),
            visibility: 0.99,
            quantum_efficiency: 0.99,
        };
        assert_relative_eq!(total_efficiency(&budget).unwrap(), 0.9346, epsilon = 5e-4);

        let unity = LossBudget {
            escape_efficiency: 1.0,
            optical_path_efficiency: 1.0,
            visibility: 1.0,
            quantum_efficiency: 1.0,
        };
        assert_eq!(total_efficiency(&unity).unwrap(), 1.0);

        let half_visibility = LossBudget { visibility: 0.5, ..unity };
        assert_eq!(total_efficiency(&half_visibility).unwrap(), 0.25);
    }

    #[test]
    fn cavity_character_consistency() {
        let ch = CavityCharacter::from_geometry(&geometry(0.90, 0.9995, 0.001)).unwrap();
        assert_relative_eq!(ch.fsr_hz, ch.finesse * ch.fwhm_hz, max_relative = 1e-12);
        assert!(ch.escape_efficiency > 0.0 && ch.escape_efficiency <= 1.0);
    }

    #[test]
    fn geometry_validation_rejects_out_of_range() {
        assert!(geometry(1.0, 0.9995, 0.0).validate().is_err());
        assert!(geometry(0.9, 1.2, 0.0).validate().is_err());
        assert!(geometry(0.9, 0.99, -0.1).validate().is_err());
        let mut g = geometry(0.9, 0.99, 0.0);
        g.round_trip_length_m = 0.0;
        assert!(g.validate().is_err());
    }

    proptest! {
        #[test]
        fn db_round_trips(ratio in 1e-6f64..1e6) {
            let db = db_from_ratio(ratio).unwrap();
            prop_assert!((ratio_from_db(db) - ratio).abs() <= 1e-12 * ratio);
        }

        #[test]
        fn finesse_monotone_in_reflectivity_and_loss(
            r_out in 0.5f64..0.99,
            r_back in 0.5f64..0.99,
            loss in 0.0f64..0.05,
            bump in 1e-4f64..5e-3,
        ) {
            let base = finesse(&geometry(r_out, r_back, loss)).unwrap();
            let more_r_out = finesse(&geometry((r_out + bump).min(0.9999), r_back, loss)).unwrap();
            let more_r_back = finesse(&geometry(r_out, (r_back + bump).min(0.9999), loss)).unwrap();
            let more_loss = finesse(&geometry(r_out, r_back, loss + bump)).unwrap();
            prop_assert!(more_r_out > base);
            prop_assert!(more_r_back > base);
            prop_assert!(more_loss < base);
        }

        #[test]
        fn escape_efficiency_complement(t in 1e-6f64..1.0, l in 1e-6f64..1.0) {
            let sum = escape_efficiency(t, l).unwrap() + escape_efficiency(l, t).unwrap();
            prop_assert!((sum - 1.0).abs() < 1e-12);
        }

        #[test]
        fn total_efficiency_symmetric_and_monotone(
            a in 0.1f64..1.0, b in 0.1f64..1.0, c in 0.1f64..1.0, v in 0.1f64..1.0,
        ) {
            let make = |esc, opt, qe| LossBudget {
                escape_efficiency: esc,
                optical_path_efficiency: opt,
                visibility: v,
                quantum_efficiency: qe,
            };
            let reference = total_efficiency(&make(a, b, c)).unwrap();
            // invariant under permutation of the three linear factors
            prop_assert!((total_efficiency(&make(b, c, a)).unwrap() - reference).abs() < 1e-15);
            prop_assert!((total_efficiency(&make(c, a, b)).unwrap() - reference).abs() < 1e-15);
            // any factor below 1 strictly reduces the total
            if a < 1.0 {
                prop_assert!(reference < total_efficiency(&make(1.0, b, c)).unwrap());
            }
        }
    }
}
