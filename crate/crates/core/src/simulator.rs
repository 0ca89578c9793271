//! Seeded synthetic-data generation: gain curves, spectrum-analyzer
//! squeezing traces and polarization-noise time series. Every generator is a
//! pure function of its configuration and seed, and collapses to the exact
//! model evaluation when its noise sources are turned off, which makes the
//! outputs usable as estimator round-trip oracles.
//!
//! Randomness comes from a ChaCha12 stream (seeded through the standard
//! SplitMix64 expansion of the 64-bit seed) with Gaussian variates drawn by
//! Box-Muller. Identical seeds give bit-identical data on reruns; the raw
//! uniform stream is also bit-portable across platforms, with only the libm
//! rounding of the Box-Muller transcendentals (at most 1 ulp) left
//! platform-dependent.

use rand_chacha::ChaCha12Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimation::{apply_electronic_noise, GainMeasurement};
use crate::noise_analysis::TimeSeries;
use crate::opo_model::{self, ModelError, OpoModelParams, Quadrature, SpectrumTrace};
use crate::physics::{db_from_ratio, ratio_from_db};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid analyzer config: {0}")]
    InvalidConfig(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// 64-bit seed; same seed and config give bit-identical output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seed(pub u64);

/// A narrowband disturbance riding on a trace (pilot tone, pick-up line),
/// shaped as a Gaussian bump in dB.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Spur {
    pub frequency_hz: f64,
    /// Peak height above the underlying trace, in dB.
    pub height_db: f64,
    /// Gaussian standard deviation of the bump, in Hz.
    pub width_hz: f64,
}

/// Spectrum-analyzer settings controlling the per-point estimation noise and
/// the additive electronics floor.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumAnalyzerConfig {
    pub rbw_hz: f64,
    pub vbw_hz: f64,
    /// Number of averaged traces; `u32::MAX` is treated as the
    /// infinite-averaging limit (per-point estimation noise disabled).
    pub trace_averages: u32,
    /// Electronics dark-noise floor, linear relative to measured shot noise.
    pub electronic_noise_rel_shot: f64,
    pub spurs: Vec<Spur>,
}

impl Default for SpectrumAnalyzerConfig {
    /// The instrument settings used throughout: 300 kHz RBW, 300 Hz VBW,
    /// 100 averages, electronics floor 22 dB below shot noise, no spurs.
    fn default() -> Self {
        SpectrumAnalyzerConfig {
            rbw_hz: 300e3,
            vbw_hz: 300.0,
            trace_averages: 100,
            electronic_noise_rel_shot: ratio_from_db(-22.0),
            spurs: Vec::new(),
        }
    }
}

impl SpectrumAnalyzerConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.rbw_hz > 0.0) || !(self.vbw_hz > 0.0) {
            return Err(SimError::InvalidConfig(format!(
                "rbw and vbw must be positive, got {} / {}",
                self.rbw_hz, self.vbw_hz
            )));
        }
        if self.trace_averages < 1 {
            return Err(SimError::InvalidConfig("trace averages must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.electronic_noise_rel_shot) {
            return Err(SimError::InvalidConfig(format!(
                "electronic noise must be in [0, 1) relative to shot noise, got {}",
                self.electronic_noise_rel_shot
            )));
        }
        for s in &self.spurs {
            if !(s.frequency_hz > 0.0) || !(s.width_hz > 0.0) {
                return Err(SimError::InvalidConfig(
                    "spur frequency and width must be positive".into(),
                ));
            }
        }
        Ok(())
    }

    /// Relative standard deviation of one trace point,
    /// `1 / sqrt(averages * K)` with the video-bandwidth smoothing modeled as
    /// an effective factor `K = clamp(rbw / (2 vbw), 1, 250)`. Zero in the
    /// infinite-averaging limit.
    pub fn point_relative_std(&self) -> f64 {
        if self.trace_averages == u32::MAX {
            return 0.0;
        }
        let smoothing = (self.rbw_hz / (2.0 * self.vbw_hz)).clamp(1.0, 250.0);
        1.0 / (self.trace_averages as f64 * smoothing).sqrt()
    }
}

/// Deterministic Gaussian stream: ChaCha12 keyed by the seed, uniform
/// doubles from the top 53 bits, Box-Muller pairs with the sine variate
/// cached.
pub struct GaussianStream {
    rng: ChaCha12Rng,
    spare: Option<f64>,
}

impl GaussianStream {
    pub fn new(seed: Seed) -> Self {
        GaussianStream { rng: ChaCha12Rng::seed_from_u64(seed.0), spare: None }
    }

    fn next_unit(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * 2f64.powi(-53)
    }

    /// Standard normal variate.
    pub fn next_gaussian(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - self.next_unit(); // (0, 1], keeps ln finite
        let u2 = self.next_unit();
        let radius = (-2.0 * u1.ln()).sqrt();
        let (sin, cos) = (2.0 * std::f64::consts::PI * u2).sin_cos();
        self.spare = Some(radius * sin);
        radius * cos
    }
}

/// Synthetic classical-gain data with the measured x-error structure: the
/// gain is evaluated at a jittered pump power `P * (1 + err * z)` while the
/// recorded power stays at the nominal value.
///
/// Jittered powers that would land outside `[0, threshold)` are redrawn so
/// the gain model stays defined; at the few-percent error level this
/// truncation is negligible.
pub fn gen_gain_data(
    threshold_w: f64,
    powers_w: &[f64],
    power_fractional_error: f64,
    seed: Seed,
) -> Result<Vec<GainMeasurement>, SimError> {
    if !(threshold_w > 0.0) {
        return Err(SimError::InvalidInput(format!(
            "threshold must be positive, got {threshold_w}"
        )));
    }
    if !(0.0..1.0).contains(&power_fractional_error) {
        return Err(SimError::InvalidInput(format!(
            "fractional power error must be in [0, 1), got {power_fractional_error}"
        )));
    }
    for &p in powers_w {
        if !(p >= 0.0) || p >= threshold_w {
            return Err(SimError::InvalidInput(format!(
                "pump powers must lie in [0, threshold), got {p}"
            )));
        }
    }
    let mut noise = GaussianStream::new(seed);
    let mut out = Vec::with_capacity(powers_w.len());
    for &p in powers_w {
        let jittered = if power_fractional_error == 0.0 {
            p
        } else {
            loop {
                let candidate = p * (1.0 + power_fractional_error * noise.next_gaussian());
                if (0.0..threshold_w).contains(&candidate) {
                    break candidate;
                }
            }
        };
        let gain = opo_model::parametric_gain(jittered, threshold_w)?;
        out.push(GainMeasurement {
            pump_power_w: p,
            gain,
            power_fractional_uncertainty: power_fractional_error,
        });
    }
    Ok(out)
}

/// Synthetic spectrum-analyzer trace of the variance model at one pump power
/// and quadrature.
///
/// Pipeline per point: model variance, electronics floor folded in
/// (additively, with the shot-noise reference renormalized to keep
/// [`crate::estimation::correct_electronic_noise`] an exact inverse),
/// multiplicative estimation noise of relative std
/// [`SpectrumAnalyzerConfig::point_relative_std`], then any spur bumps added
/// in dB.
pub fn gen_spectrum_trace(
    params: &OpoModelParams,
    pump_power_w: f64,
    frequency_grid_hz: &[f64],
    quadrature: Quadrature,
    sa: &SpectrumAnalyzerConfig,
    seed: Seed,
) -> Result<SpectrumTrace, SimError> {
    sa.validate()?;
    let clean = opo_model::spectrum(params, pump_power_w, frequency_grid_hz, quadrature)?;
    let rel_std = sa.point_relative_std();
    let mut noise = GaussianStream::new(seed);
    let points = clean
        .points
        .into_iter()
        .map(|(f, v_true)| {
            let mut v = if sa.electronic_noise_rel_shot > 0.0 {
                apply_electronic_noise(v_true, sa.electronic_noise_rel_shot)
                    .expect("validated floor")
            } else {
                v_true
            };
            if rel_std > 0.0 {
                v *= 1.0 + rel_std * noise.next_gaussian();
                v = v.max(1e-12);
            }
            if !sa.spurs.is_empty() {
                let mut v_db = db_from_ratio(v).expect("positive variance");
                for s in &sa.spurs {
                    let arg = (f - s.frequency_hz) / s.width_hz;
                    v_db += s.height_db * (-0.5 * arg * arg).exp();
                }
                v = ratio_from_db(v_db);
            }
            (f, v)
        })
        .collect();
    Ok(SpectrumTrace {
        pump_power_w,
        quadrature,
        points,
        rbw_hz: Some(sa.rbw_hz),
        vbw_hz: Some(sa.vbw_hz),
        averages: Some(sa.trace_averages),
    })
}

/// Phenomenological polarization-noise series: unity mean power plus white
/// Gaussian noise plus a Gaussian random walk,
/// `x_i = 1 + white_std * w_i + rw_i` with
/// `rw_i = rw_{i-1} + random_walk_step * z_i`. Per sample the white variate
/// is drawn first, then the walk step.
pub fn gen_polarization_noise(
    duration_s: f64,
    sample_rate_hz: f64,
    white_std: f64,
    random_walk_step: f64,
    seed: Seed,
) -> Result<TimeSeries, SimError> {
    if !(sample_rate_hz > 0.0) || !(duration_s > 0.0) {
        return Err(SimError::InvalidInput(
            "duration and sample rate must be positive".into(),
        ));
    }
    if !(white_std >= 0.0) || !(random_walk_step >= 0.0) {
        return Err(SimError::InvalidInput("noise magnitudes must be non-negative".into()));
    }
    let n = (duration_s * sample_rate_hz).round() as usize;
    if n < 10 {
        return Err(SimError::InvalidInput(format!(
            "need at least 10 samples (duration * rate), got {n}"
        )));
    }
    let mut noise = GaussianStream::new(seed);
    let mut walk = 0.0f64;
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let white = white_std * noise.next_gaussian();
        walk += random_walk_step * noise.next_gaussian();
        samples.push(1.0 + white + walk);
    }
    TimeSeries::new(sample_rate_hz, samples)
        .map_err(|e| SimError::InvalidInput(format!("generated series invalid: {e}")))
}
