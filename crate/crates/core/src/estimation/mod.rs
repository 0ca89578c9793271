//! Nonlinear least-squares estimation of the OPO model parameters from gain
//! curves, power sweeps and squeezing spectra, plus the electronic-noise
//! correction applied to spectrum-analyzer traces.
//!
//! Variance data is always fitted in the dB domain: spectrum-analyzer noise
//! is close to multiplicative, and dB residuals keep the ~20x larger
//! anti-squeezing values from dominating the squeezed ones.

mod least_squares;

pub use least_squares::{central_difference_jacobian, least_squares};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::opo_model::{variance_raw, ModelError, Quadrature, SpectrumTrace};

#[derive(Debug, Error)]
pub enum EstimationError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("residuals are not finite at parameters {0}")]
    NonFiniteResiduals(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("electronic-noise correction: {0}")]
    NoiseCorrection(String),
    #[error("unidentifiable fit: {0}")]
    Unidentifiable(String),
    #[error("all spectrum points fall inside exclusion bands")]
    AllPointsExcluded,
}

/// One point of a classical gain measurement. The dominant uncertainty is
/// the fractional error on the pump power reading.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GainMeasurement {
    pub pump_power_w: f64,
    pub gain: f64,
    pub power_fractional_uncertainty: f64,
}

impl GainMeasurement {
    /// Default 5% fractional power uncertainty.
    pub fn new(pump_power_w: f64, gain: f64) -> Self {
        GainMeasurement { pump_power_w, gain, power_fractional_uncertainty: 0.05 }
    }
}

/// Frequency interval masked out of spectrum fits (pilot tones, pick-up).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ExclusionBand {
    pub low_hz: f64,
    pub high_hz: f64,
}

impl ExclusionBand {
    pub fn new(low_hz: f64, high_hz: f64) -> Result<Self, EstimationError> {
        if !(low_hz < high_hz) {
            return Err(EstimationError::InvalidInput(format!(
                "exclusion band must have low < high, got [{low_hz}, {high_hz}]"
            )));
        }
        Ok(ExclusionBand { low_hz, high_hz })
    }

    pub fn contains(&self, frequency_hz: f64) -> bool {
        (self.low_hz..=self.high_hz).contains(&frequency_hz)
    }

    /// 2 MHz half-width bands around the 40 MHz pilot tone and the 80/100 MHz
    /// modulation pick-up lines.
    pub fn default_bands() -> Vec<ExclusionBand> {
        [40e6, 80e6, 100e6]
            .into_iter()
            .map(|center| ExclusionBand { low_hz: center - 2e6, high_hz: center + 2e6 })
            .collect()
    }
}

/// Outcome of a least-squares fit: estimates, uncertainties and diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub parameter_names: Vec<String>,
    pub values: Vec<f64>,
    /// `sqrt(diag(covariance))`.
    pub standard_errors: Vec<f64>,
    /// Row-major `n x n` covariance, `rss/dof * pinv(J^T J)`.
    pub covariance: Vec<f64>,
    pub rss: f64,
    pub dof: usize,
    pub converged: bool,
    pub iterations: usize,
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn value_of(&self, name: &str) -> Option<f64> {
        self.parameter_names.iter().position(|n| n == name).map(|i| self.values[i])
    }

    pub fn std_error_of(&self, name: &str) -> Option<f64> {
        self.parameter_names
            .iter()
            .position(|n| n == name)
            .map(|i| self.standard_errors[i])
    }
}

/// Whether the OPO threshold power is held fixed or estimated.
#[derive(Debug, Clone, Copy)]
pub enum ThresholdMode {
    Fixed(f64),
    Free { initial: Option<f64> },
}

/// Remove the electronic dark-noise floor from a shot-noise-normalized
/// variance.
///
/// Both the measurement and the shot-noise reference trace contain the
/// electronics floor `v_el` (quoted relative to the measured shot noise),
/// hence `(v_meas - v_el) / (1 - v_el)`.
pub fn correct_electronic_noise(
    measured_rel_shot: f64,
    electronic_rel_shot: f64,
) -> Result<f64, EstimationError> {
    check_floor(electronic_rel_shot)?;
    if !(measured_rel_shot > electronic_rel_shot) {
        return Err(EstimationError::NoiseCorrection(format!(
            "measured variance {measured_rel_shot} is at or below the electronics floor {electronic_rel_shot}"
        )));
    }
    Ok((measured_rel_shot - electronic_rel_shot) / (1.0 - electronic_rel_shot))
}

/// Inverse of [`correct_electronic_noise`]: fold the electronics floor back
/// into a clean shot-noise-normalized variance. Used by the trace simulator.
pub fn apply_electronic_noise(
    variance_rel_shot: f64,
    electronic_rel_shot: f64,
) -> Result<f64, EstimationError> {
    check_floor(electronic_rel_shot)?;
    if !(variance_rel_shot > 0.0) {
        return Err(EstimationError::NoiseCorrection(format!(
            "variance must be positive, got {variance_rel_shot}"
        )));
    }
    Ok(variance_rel_shot * (1.0 - electronic_rel_shot) + electronic_rel_shot)
}

fn check_floor(electronic_rel_shot: f64) -> Result<(), EstimationError> {
    if !(0.0..1.0).contains(&electronic_rel_shot) {
        return Err(EstimationError::NoiseCorrection(format!(
            "electronic noise relative to shot noise must be in [0, 1), got {electronic_rel_shot}"
        )));
    }
    Ok(())
}

const DB_SCALE: f64 = 10.0;

fn db(v: f64) -> f64 {
    DB_SCALE * v.max(f64::MIN_POSITIVE).log10()
}

/// Fit the parametric-gain curve and extract the threshold power.
///
/// Residuals are weighted by the gain uncertainty propagated from the
/// fractional power error, `sigma_g = |dg/dP| * err * P` (effective-variance
/// treatment of the x-error; first-order only, adequate at the few-percent
/// level). Weighting runs in two passes: a preliminary fit with weights
/// taken from the measured gains, then a refit with weights frozen at the
/// preliminary threshold estimate. Freezing the weights keeps them
/// uncorrelated with the per-point noise (weighting by the noisy gains
/// directly biases the threshold low) and avoids the spurious cost minimum
/// that fully estimate-dependent weights develop at the lower threshold
/// bound. The threshold is bounded below by `1.0001 * max(pump power)` so
/// the model stays below threshold at every data point during iteration.
pub fn fit_gain(
    data: &[GainMeasurement],
    initial_threshold_w: f64,
) -> Result<FitResult, EstimationError> {
    for d in data {
        if !(d.pump_power_w >= 0.0) || !d.pump_power_w.is_finite() {
            return Err(EstimationError::InvalidInput(format!(
                "pump power must be finite and non-negative, got {}",
                d.pump_power_w
            )));
        }
        if !(d.gain > 0.0) || !d.gain.is_finite() {
            return Err(EstimationError::InvalidInput(format!(
                "gain must be finite and positive, got {}",
                d.gain
            )));
        }
        if !(0.0..1.0).contains(&d.power_fractional_uncertainty) {
            return Err(EstimationError::InvalidInput(format!(
                "fractional power uncertainty must be in [0, 1), got {}",
                d.power_fractional_uncertainty
            )));
        }
    }
    let pumped = data.iter().filter(|d| d.pump_power_w > 0.0).count();
    if pumped < 2 {
        return Err(EstimationError::Unidentifiable(
            "need at least two gain measurements with pump power > 0".into(),
        ));
    }
    let max_power = data.iter().map(|d| d.pump_power_w).fold(0.0, f64::max);
    let lo = 1.0001 * max_power;
    let hi = 1e6 * max_power;
    let initial = initial_threshold_w.clamp(lo, hi);

    // sigma_g = |dg/dP| * err * P = err * x / (1-x)^3
    let sigma_at = |x: f64, err: f64| (err * x / (1.0 - x).powi(3)).abs().max(1e-9);

    let run = |weights: Vec<f64>, start: f64| {
        let data = data.to_vec();
        let residual = move |theta: &[f64]| -> Vec<f64> {
            let p_thr = theta[0];
            data.iter()
                .zip(&weights)
                .map(|(d, sigma)| {
                    let x = (d.pump_power_w / p_thr).sqrt();
                    let one_minus = 1.0 - x;
                    let model = 1.0 / (one_minus * one_minus);
                    (model - d.gain) / sigma
                })
                .collect()
        };
        least_squares(residual, &[start], &[(lo, hi)])
    };

    // pass 1: weights from the measured gains, x_hat = 1 - 1/sqrt(g)
    let preliminary_weights = data
        .iter()
        .map(|d| sigma_at(1.0 - 1.0 / d.gain.sqrt(), d.power_fractional_uncertainty))
        .collect();
    let preliminary = run(preliminary_weights, initial)?;
    let p_thr_preliminary = preliminary.values[0];

    // pass 2: weights frozen at the preliminary threshold estimate
    let frozen_weights = data
        .iter()
        .map(|d| {
            sigma_at((d.pump_power_w / p_thr_preliminary).sqrt(), d.power_fractional_uncertainty)
        })
        .collect();
    let mut fit = run(frozen_weights, p_thr_preliminary)?;
    fit.iterations += preliminary.iterations;
    fit.parameter_names = vec!["p_thr_w".into()];
    Ok(fit)
}

/// Joint fit of squeezed and anti-squeezed variance versus pump power at a
/// fixed sideband frequency. Points are `(pump_power_w, linear variance
/// relative to shot noise)`.
///
/// Fitted parameters: `eta_tot` in (0, 1], `phi_rad` in [0, 0.1] and
/// optionally the threshold power. Supplying only one quadrature is allowed
/// but leaves `eta_tot`/`phi_rad` weakly identifiable; the result carries a
/// warning.
pub fn fit_power_sweep(
    squeezed: &[(f64, f64)],
    antisqueezed: &[(f64, f64)],
    sideband_frequency_hz: f64,
    fwhm_bandwidth_hz: f64,
    threshold: ThresholdMode,
) -> Result<FitResult, EstimationError> {
    if squeezed.is_empty() && antisqueezed.is_empty() {
        return Err(EstimationError::InvalidInput("no sweep points supplied".into()));
    }
    if !(sideband_frequency_hz >= 0.0) || !(fwhm_bandwidth_hz > 0.0) {
        return Err(EstimationError::InvalidInput(
            "sideband frequency must be >= 0 and bandwidth > 0".into(),
        ));
    }
    let mut max_power = 0.0f64;
    for &(p, v) in squeezed.iter().chain(antisqueezed) {
        if !p.is_finite() || !(p >= 0.0) || !(v > 0.0) || !v.is_finite() {
            return Err(EstimationError::InvalidInput(format!(
                "sweep points need power >= 0 and variance > 0, got ({p}, {v})"
            )));
        }
        max_power = max_power.max(p);
    }
    if let ThresholdMode::Fixed(t) = threshold {
        if !(t > max_power) {
            return Err(EstimationError::InvalidInput(format!(
                "fixed threshold {t} W must exceed the largest pump power {max_power} W"
            )));
        }
    }

    let mut warnings = Vec::new();
    if squeezed.is_empty() || antisqueezed.is_empty() {
        warnings.push(
            "only one quadrature supplied; eta_tot and phi_rad are weakly identifiable \
             (expect wide confidence intervals)"
                .into(),
        );
    }

    let eta_init = squeezed
        .iter()
        .map(|&(_, v)| 1.0 - v)
        .fold(0.5, f64::max)
        .clamp(0.05, 1.0);
    let mut initial = vec![eta_init, 0.010];
    let mut bounds = vec![(1e-6, 1.0), (0.0, 0.1)];
    let mut names = vec!["eta_tot".to_string(), "phi_rad".to_string()];
    if let ThresholdMode::Free { initial: init } = threshold {
        let lo = 1.0001 * max_power.max(f64::MIN_POSITIVE);
        let hi = 1e4 * lo;
        initial.push(init.unwrap_or(1.2 * max_power).clamp(lo, hi));
        bounds.push((lo, hi));
        names.push("p_thr_w".into());
    }

    let omega_ratio_of = move |f_hz: f64| f_hz / fwhm_bandwidth_hz;
    let squeezed: Vec<(f64, f64)> = squeezed.to_vec();
    let antisqueezed: Vec<(f64, f64)> = antisqueezed.to_vec();
    let residual = move |theta: &[f64]| -> Vec<f64> {
        let (eta, phi) = (theta[0], theta[1]);
        let p_thr = match threshold {
            ThresholdMode::Fixed(t) => t,
            ThresholdMode::Free { .. } => theta[2],
        };
        let omega = omega_ratio_of(sideband_frequency_hz);
        let mut r = Vec::with_capacity(squeezed.len() + antisqueezed.len());
        for (quad, points) in
            [(Quadrature::Squeezed, &squeezed), (Quadrature::Antisqueezed, &antisqueezed)]
        {
            for &(p, v) in points {
                let x = (p / p_thr).sqrt();
                let model = variance_raw(eta, phi, x, omega, quad);
                r.push(db(model) - db(v));
            }
        }
        r
    };

    let mut fit = least_squares(residual, &initial, &bounds)?;
    fit.parameter_names = names;
    fit.warnings.extend(warnings);
    Ok(fit)
}

/// Which traces share a phase-noise parameter in [`fit_spectra`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhiMode {
    /// One phase-noise value for the whole data set.
    Shared,
    /// One phase-noise value per distinct pump power (squeezed and
    /// anti-squeezed traces at the same power share it). Powers are grouped
    /// by exact value in order of first appearance.
    PerPower,
}

#[derive(Debug, Clone, Copy)]
pub struct SpectraFitConfig {
    pub threshold: ThresholdMode,
    /// Starting value for the cavity FWHM; defaults to half the largest
    /// unmasked frequency when absent.
    pub kappa_initial_hz: Option<f64>,
    pub phi_mode: PhiMode,
}

/// Joint fit of the variance model across several spectrum traces, masking
/// points inside the exclusion bands.
///
/// Fitted parameters: `eta_tot`, the cavity FWHM `kappa_hz` (recovered from
/// the Lorentzian roll-off), one or more `phi_rad` values depending on
/// [`PhiMode`], and optionally the threshold power.
pub fn fit_spectra(
    traces: &[SpectrumTrace],
    exclusion_bands: &[ExclusionBand],
    config: &SpectraFitConfig,
) -> Result<FitResult, EstimationError> {
    if traces.is_empty() {
        return Err(EstimationError::InvalidInput("no traces supplied".into()));
    }
    for band in exclusion_bands {
        if !(band.low_hz < band.high_hz) {
            return Err(EstimationError::InvalidInput(format!(
                "exclusion band must have low < high, got [{}, {}]",
                band.low_hz, band.high_hz
            )));
        }
    }

    // Masked view of the data: (power, quadrature, frequency, variance).
    let mut max_power = 0.0f64;
    let mut max_freq = 0.0f64;
    let mut kept: Vec<(f64, Quadrature, f64, f64)> = Vec::new();
    for trace in traces {
        trace.validate()?;
        if !(trace.pump_power_w >= 0.0) {
            return Err(EstimationError::InvalidInput(format!(
                "trace pump power must be >= 0, got {}",
                trace.pump_power_w
            )));
        }
        max_power = max_power.max(trace.pump_power_w);
        for &(f, v) in &trace.points {
            if exclusion_bands.iter().any(|b| b.contains(f)) {
                continue;
            }
            max_freq = max_freq.max(f);
            kept.push((trace.pump_power_w, trace.quadrature, f, v));
        }
    }
    if kept.is_empty() {
        return Err(EstimationError::AllPointsExcluded);
    }
    if let ThresholdMode::Fixed(t) = config.threshold {
        if !(t > max_power) {
            return Err(EstimationError::InvalidInput(format!(
                "fixed threshold {t} W must exceed the largest trace pump power {max_power} W"
            )));
        }
    }

    let mut warnings = Vec::new();
    let has_squeezed = traces.iter().any(|t| t.quadrature == Quadrature::Squeezed);
    let has_anti = traces.iter().any(|t| t.quadrature == Quadrature::Antisqueezed);
    if !has_squeezed || !has_anti {
        warnings.push(
            "only one quadrature supplied; eta_tot and phi_rad are weakly identifiable \
             (expect wide confidence intervals)"
                .into(),
        );
    }

    let kappa_init = config.kappa_initial_hz.unwrap_or(0.5 * max_freq).max(1e3);
    if max_freq < 0.5 * kappa_init {
        warnings.push(format!(
            "largest unmasked frequency {max_freq:.3e} Hz is far below the bandwidth guess \
             {kappa_init:.3e} Hz; kappa_hz is weakly identifiable"
        ));
    }

    // Phase-noise parameter groups.
    let mut group_powers: Vec<f64> = Vec::new();
    let group_of: Vec<usize> = kept
        .iter()
        .map(|&(p, ..)| {
            match group_powers.iter().position(|&g| g == p) {
                Some(i) => i,
                None => {
                    group_powers.push(p);
                    group_powers.len() - 1
                }
            }
        })
        .collect();
    let n_phi = match config.phi_mode {
        PhiMode::Shared => 1,
        PhiMode::PerPower => group_powers.len(),
    };

    let min_squeezed_variance = kept
        .iter()
        .filter(|&&(_, q, ..)| q == Quadrature::Squeezed)
        .map(|&(.., v)| v)
        .fold(f64::INFINITY, f64::min);
    let eta_init = if min_squeezed_variance.is_finite() {
        (1.0 - min_squeezed_variance).clamp(0.05, 1.0)
    } else {
        0.5
    };

    let mut initial = vec![eta_init, kappa_init];
    let mut bounds = vec![(1e-6, 1.0), (1e3, 1e12)];
    let mut names = vec!["eta_tot".to_string(), "kappa_hz".to_string()];
    for power in group_powers.iter().take(n_phi) {
        initial.push(0.010);
        bounds.push((0.0, 0.1));
        names.push(match config.phi_mode {
            PhiMode::Shared => "phi_rad".to_string(),
            PhiMode::PerPower => format!("phi_rad[p={power} W]"),
        });
    }
    let threshold = config.threshold;
    if let ThresholdMode::Free { initial: init } = threshold {
        let lo = 1.0001 * max_power.max(f64::MIN_POSITIVE);
        let hi = 1e4 * lo;
        initial.push(init.unwrap_or(1.2 * max_power).clamp(lo, hi));
        bounds.push((lo, hi));
        names.push("p_thr_w".into());
    }
    let n_params = initial.len();

    let phi_mode = config.phi_mode;
    let residual = move |theta: &[f64]| -> Vec<f64> {
        let eta = theta[0];
        let kappa = theta[1];
        let p_thr = match threshold {
            ThresholdMode::Fixed(t) => t,
            ThresholdMode::Free { .. } => theta[n_params - 1],
        };
        kept.iter()
            .zip(&group_of)
            .map(|(&(p, quad, f, v), &g)| {
                let phi = match phi_mode {
                    PhiMode::Shared => theta[2],
                    PhiMode::PerPower => theta[2 + g],
                };
                let x = (p / p_thr).sqrt();
                let model = variance_raw(eta, phi, x, f / kappa, quad);
                db(model) - db(v)
            })
            .collect()
    };

    let mut fit = least_squares(residual, &initial, &bounds)?;
    fit.parameter_names = names;
    fit.warnings.extend(warnings);
    Ok(fit)
}

#[cfg(test)]
mod tests;
