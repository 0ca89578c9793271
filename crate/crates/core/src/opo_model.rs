//! Below-threshold OPO model: classical parametric gain and the quadrature
//! variance of the squeezed/anti-squeezed output including detection
//! efficiency and residual phase noise.
//!
//! All variances are linear and normalized to shot noise (vacuum = 1).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::physics::db_from_ratio;

/// Phase-noise magnitude above which the small-angle variance model becomes
/// unreliable (the sin^2 mixing term error exceeds ~1%).
pub const PHI_VALIDITY_LIMIT_RAD: f64 = 0.1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("pump power must be non-negative, got {0} W")]
    NegativePower(f64),
    #[error("pump power {power} W is at or above threshold {threshold} W; model only valid below threshold")]
    AboveThreshold { power: f64, threshold: f64 },
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
    #[error("sideband frequency must be non-negative, got {0} Hz")]
    NegativeFrequency(f64),
    #[error("frequency grid must be non-empty, positive and strictly increasing")]
    BadFrequencyGrid,
}

/// Parameter set of the quadrature-variance model.
///
/// The cavity bandwidth is stored as the FWHM in ordinary frequency; the
/// model only ever uses the sideband/bandwidth ratio, so the angular 2*pi
/// factors cancel.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OpoModelParams {
    pub threshold_power_w: f64,
    pub fwhm_bandwidth_hz: f64,
    pub total_efficiency: f64,
    pub phase_noise_rms_rad: f64,
}

impl OpoModelParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let err = |msg: String| Err(ModelError::InvalidParams(msg));
        if !(self.threshold_power_w > 0.0) {
            return err(format!("threshold power must be positive, got {}", self.threshold_power_w));
        }
        if !(self.fwhm_bandwidth_hz > 0.0) {
            return err(format!("bandwidth must be positive, got {}", self.fwhm_bandwidth_hz));
        }
        if !(self.total_efficiency > 0.0 && self.total_efficiency <= 1.0) {
            return err(format!("total efficiency must be in (0, 1], got {}", self.total_efficiency));
        }
        if !(self.phase_noise_rms_rad >= 0.0
            && self.phase_noise_rms_rad < std::f64::consts::FRAC_PI_2)
        {
            return err(format!(
                "RMS phase noise must be in [0, pi/2), got {}",
                self.phase_noise_rms_rad
            ));
        }
        Ok(())
    }

    /// True when the phase noise is small enough for the variance model to be
    /// trustworthy. Callers should surface a warning when this is false.
    pub fn phi_within_validity(&self) -> bool {
        self.phase_noise_rms_rad <= PHI_VALIDITY_LIMIT_RAD
    }
}

/// Which quadrature a measurement or model evaluation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quadrature {
    Squeezed,
    Antisqueezed,
}

/// One spectrum-analyzer trace: variance relative to shot noise on a
/// frequency grid, at a fixed pump power and locked quadrature.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumTrace {
    pub pump_power_w: f64,
    pub quadrature: Quadrature,
    /// `(sideband_frequency_hz, linear variance relative to shot noise)`,
    /// frequencies strictly increasing, variances positive.
    pub points: Vec<(f64, f64)>,
    pub rbw_hz: Option<f64>,
    pub vbw_hz: Option<f64>,
    pub averages: Option<u32>,
}

impl SpectrumTrace {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.points.is_empty() {
            return Err(ModelError::BadFrequencyGrid);
        }
        let mut prev = f64::NEG_INFINITY;
        for &(f, v) in &self.points {
            if !(f > prev) || !(v > 0.0) || !f.is_finite() || !v.is_finite() {
                return Err(ModelError::BadFrequencyGrid);
            }
            prev = f;
        }
        Ok(())
    }
}

fn pump_ratio_sqrt(pump_power_w: f64, threshold_power_w: f64) -> Result<f64, ModelError> {
    if !(pump_power_w >= 0.0) {
        return Err(ModelError::NegativePower(pump_power_w));
    }
    if pump_power_w >= threshold_power_w {
        return Err(ModelError::AboveThreshold {
            power: pump_power_w,
            threshold: threshold_power_w,
        });
    }
    Ok((pump_power_w / threshold_power_w).sqrt())
}

/// Classical parametric gain `g = 1/(1 - sqrt(P/P_thr))^2`.
///
/// Diverges at threshold; inputs at or above threshold are rejected.
pub fn parametric_gain(pump_power_w: f64, threshold_power_w: f64) -> Result<f64, ModelError> {
    if !(threshold_power_w > 0.0) {
        return Err(ModelError::InvalidParams(format!(
            "threshold power must be positive, got {threshold_power_w}"
        )));
    }
    let x = pump_ratio_sqrt(pump_power_w, threshold_power_w)?;
    Ok(1.0 / ((1.0 - x) * (1.0 - x)))
}

/// Quadrature variance relative to shot noise at one pump power and sideband
/// frequency.
///
/// With `x = sqrt(P/P_thr)` and `Omega` the sideband/FWHM frequency ratio:
///
/// ```text
/// V_- = 1 + eta * ( -cos^2(phi) * 4x / ((1+x)^2 + 4 Omega^2)
///                   +sin^2(phi) * 4x / ((1-x)^2 + 4 Omega^2) )
/// V_+ = 1 + eta * ( +cos^2(phi) * 4x / ((1-x)^2 + 4 Omega^2)
///                   -sin^2(phi) * 4x / ((1+x)^2 + 4 Omega^2) )
/// ```
///
/// Phase noise mixes a fraction sin^2(phi) of the opposite quadrature into
/// the measurement. The model is a small-phi approximation; check
/// [`OpoModelParams::phi_within_validity`] and warn the user beyond
/// [`PHI_VALIDITY_LIMIT_RAD`].
pub fn quadrature_variance(
    params: &OpoModelParams,
    pump_power_w: f64,
    sideband_frequency_hz: f64,
    quadrature: Quadrature,
) -> Result<f64, ModelError> {
    params.validate()?;
    if !(sideband_frequency_hz >= 0.0) {
        return Err(ModelError::NegativeFrequency(sideband_frequency_hz));
    }
    let x = pump_ratio_sqrt(pump_power_w, params.threshold_power_w)?;
    let omega = sideband_frequency_hz / params.fwhm_bandwidth_hz;
    Ok(variance_raw(
        params.total_efficiency,
        params.phase_noise_rms_rad,
        x,
        omega,
        quadrature,
    ))
}

/// Variance kernel on the dimensionless operating point, without any domain
/// validation. Fit residual functions evaluate this directly so that the
/// numeric Jacobian can probe just outside the fit bounds.
pub(crate) fn variance_raw(eta: f64, phi: f64, x: f64, omega: f64, quadrature: Quadrature) -> f64 {
    let four_omega_sq = 4.0 * omega * omega;
    let denom_minus = (1.0 - x) * (1.0 - x) + four_omega_sq;
    let denom_plus = (1.0 + x) * (1.0 + x) + four_omega_sq;
    let cos_sq = phi.cos().powi(2);
    let sin_sq = phi.sin().powi(2);
    match quadrature {
        // 1 - eta cos^2 * 4x/denom_plus, regrouped so the near-total
        // cancellation at eta -> 1, x -> 1, omega -> 0 happens analytically
        // instead of in floating point
        Quadrature::Squeezed => {
            ((1.0 - x) * (1.0 - x) + 4.0 * x * (1.0 - eta * cos_sq) + four_omega_sq) / denom_plus
                + eta * sin_sq * 4.0 * x / denom_minus
        }
        Quadrature::Antisqueezed => {
            1.0 + eta * (cos_sq * 4.0 * x / denom_minus - sin_sq * 4.0 * x / denom_plus)
        }
    }
}

/// Evaluate the variance model over a frequency grid, producing a noiseless
/// trace.
pub fn spectrum(
    params: &OpoModelParams,
    pump_power_w: f64,
    frequency_grid_hz: &[f64],
    quadrature: Quadrature,
) -> Result<SpectrumTrace, ModelError> {
    if frequency_grid_hz.is_empty() {
        return Err(ModelError::BadFrequencyGrid);
    }
    let mut prev = 0.0;
    for &f in frequency_grid_hz {
        if !(f > prev) || !f.is_finite() {
            return Err(ModelError::BadFrequencyGrid);
        }
        prev = f;
    }
    let points = frequency_grid_hz
        .iter()
        .map(|&f| quadrature_variance(params, pump_power_w, f, quadrature).map(|v| (f, v)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SpectrumTrace {
        pump_power_w,
        quadrature,
        points,
        rbw_hz: None,
        vbw_hz: None,
        averages: None,
    })
}

/// Pump power minimizing the squeezed variance at a fixed sideband frequency,
/// together with the minimum in dB.
///
/// Golden-section search on `P in [1e-6, 1 - 1e-6] * P_thr` with relative
/// power tolerance 1e-6; the guard interval keeps the search away from the
/// threshold pole. With zero phase noise the variance decreases
/// monotonically, so the upper search bound is returned.
pub fn max_detected_squeezing(
    params: &OpoModelParams,
    sideband_frequency_hz: f64,
) -> Result<(f64, f64), ModelError> {
    params.validate()?;
    if !(sideband_frequency_hz >= 0.0) {
        return Err(ModelError::NegativeFrequency(sideband_frequency_hz));
    }
    let p_thr = params.threshold_power_w;
    let objective = |p: f64| {
        quadrature_variance(params, p, sideband_frequency_hz, Quadrature::Squeezed)
            .expect("search interval stays below threshold")
    };

    const INV_GOLDEN: f64 = 0.618_033_988_749_894_8;
    let mut a = 1e-6 * p_thr;
    let mut b = (1.0 - 1e-6) * p_thr;
    let mut c = b - INV_GOLDEN * (b - a);
    let mut d = a + INV_GOLDEN * (b - a);
    let mut fc = objective(c);
    let mut fd = objective(d);
    while (b - a) > 1e-6 * p_thr {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_GOLDEN * (b - a);
            fc = objective(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_GOLDEN * (b - a);
            fd = objective(d);
        }
    }
    let p_opt = 0.5 * (a + b);
    let v = objective(p_opt);
    let db = db_from_ratio(v).map_err(|_| {
        ModelError::InvalidParams(format!("squeezed variance underflowed to {v}"))
    })?;
    Ok((p_opt, db))
}
