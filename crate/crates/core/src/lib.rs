//! Modeling, estimation and noise-analysis library for a below-threshold
//! double-resonant optical parametric oscillator.
//!
//! - [`physics`]: cavity calculator (FSR, finesse, linewidth, escape
//!   efficiency) and decibel helpers.
//! - [`opo_model`]: classical parametric gain and the quadrature-variance
//!   model with detection efficiency and residual phase noise.
//! - [`estimation`]: bounded Levenberg-Marquardt fits of the model to gain
//!   curves, power sweeps and spectra, plus electronic-noise correction.
//! - [`noise_analysis`]: overlapped Allan deviation and Welch PSD of
//!   intensity time series.
//! - [`simulator`]: seeded synthetic measurements used as estimator oracles.
//!
//! All quantities are SI (watts, hertz, meters, radians); variances are
//! linear relative to shot noise unless a name says dB.

// Validation guards are written as negated comparisons (`!(x > 0.0)`) so
// that NaN inputs fail them too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod estimation;
pub mod noise_analysis;
pub mod opo_model;
pub mod physics;
pub mod simulator;

pub use estimation::{
    correct_electronic_noise, fit_gain, fit_power_sweep, fit_spectra, ExclusionBand, FitResult,
    GainMeasurement, PhiMode, SpectraFitConfig, ThresholdMode,
};
pub use noise_analysis::{normalize_fractional, oadev, welch_psd, TimeSeries, Window};
pub use opo_model::{
    max_detected_squeezing, parametric_gain, quadrature_variance, spectrum, OpoModelParams,
    Quadrature, SpectrumTrace,
};
pub use physics::{
    db_from_ratio, ratio_from_db, total_efficiency, CavityCharacter, CavityGeometry, LossBudget,
};
pub use simulator::{
    gen_gain_data, gen_polarization_noise, gen_spectrum_trace, Seed, SpectrumAnalyzerConfig, Spur,
};
