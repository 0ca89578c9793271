//! Intensity-noise analysis of sampled power readings: fractional
//! normalization, overlapped Allan deviation and Welch power spectral
//! density.

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NoiseError {
    #[error("time series needs at least 2 samples, got {0}")]
    TooShort(usize),
    #[error("sample rate must be positive, got {0}")]
    BadSampleRate(f64),
    #[error("time series contains a non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("series mean is zero; cannot form fractional deviations")]
    ZeroMean,
    #[error("averaging factor m must be >= 1")]
    ZeroTau,
    #[error("segment length {segment} invalid for a series of {len} samples")]
    BadSegment { segment: usize, len: usize },
    #[error("overlap fraction must be in [0, 0.9], got {0}")]
    BadOverlap(f64),
}

/// Uniformly sampled real-valued series (power-meter readings in arbitrary
/// linear units).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimeSeries {
    pub sample_rate_hz: f64,
    pub samples: Vec<f64>,
}

impl TimeSeries {
    pub fn new(sample_rate_hz: f64, samples: Vec<f64>) -> Result<Self, NoiseError> {
        if !(sample_rate_hz > 0.0) || !sample_rate_hz.is_finite() {
            return Err(NoiseError::BadSampleRate(sample_rate_hz));
        }
        if samples.len() < 2 {
            return Err(NoiseError::TooShort(samples.len()));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(NoiseError::NonFinite(i));
        }
        Ok(TimeSeries { sample_rate_hz, samples })
    }
}

/// One Allan-deviation point at averaging time `tau = m / sample_rate`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AllanPoint {
    pub tau_s: f64,
    pub oadev: f64,
    /// Number of overlapped terms averaged into this estimate, `N - 2m + 1`.
    pub num_terms: usize,
}

/// One-sided spectral density sample.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PsdPoint {
    pub frequency_hz: f64,
    /// (input units)^2 per hertz.
    pub density: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    Hann,
    Rectangular,
}

/// Allan deviation points plus the averaging factors that had to be skipped
/// because the series is too short for them.
#[derive(Debug, Clone)]
pub struct OadevOutcome {
    pub points: Vec<AllanPoint>,
    pub omitted_taus: Vec<usize>,
}

/// Fractional deviation from the mean: `y_i = x_i / mean(x) - 1`.
pub fn normalize_fractional(series: &TimeSeries) -> Result<TimeSeries, NoiseError> {
    let mean = series.samples.iter().sum::<f64>() / series.samples.len() as f64;
    if mean == 0.0 {
        return Err(NoiseError::ZeroMean);
    }
    Ok(TimeSeries {
        sample_rate_hz: series.sample_rate_hz,
        samples: series.samples.iter().map(|&x| x / mean - 1.0).collect(),
    })
}

/// Averaging factors in a 1-2-5 decade progression up to `n_samples / 3`.
pub fn default_tau_grid(n_samples: usize) -> Vec<usize> {
    let limit = n_samples / 3;
    let mut grid = Vec::new();
    let mut decade = 1usize;
    'outer: loop {
        for mult in [1, 2, 5] {
            let m = match decade.checked_mul(mult) {
                Some(m) => m,
                None => break 'outer,
            };
            if m > limit {
                break 'outer;
            }
            grid.push(m);
        }
        decade = match decade.checked_mul(10) {
            Some(d) => d,
            None => break,
        };
    }
    grid
}

/// Overlapped Allan deviation of a fractional-deviation series.
///
/// Samples are treated as frequency-like data, so the estimator acts
/// directly on the normalized power readings:
///
/// ```text
/// sigma^2(m tau0) = 1 / (2 m^2 (N - 2m + 1)) *
///                   sum_{j=0}^{N-2m} ( sum_{i=j}^{j+m-1} (y_{i+m} - y_i) )^2
/// ```
///
/// Averaging factors that require more than the available `N` samples are
/// skipped and reported in `omitted_taus` rather than failing the call.
pub fn oadev(series: &TimeSeries, taus_m: &[usize]) -> Result<OadevOutcome, NoiseError> {
    let y = &series.samples;
    let n = y.len();
    if n < 2 {
        return Err(NoiseError::TooShort(n));
    }
    let tau0 = 1.0 / series.sample_rate_hz;

    // Constant offsets cancel in the differences; removing the mean before
    // accumulating keeps that cancellation exact in floating point.
    let mean = y.iter().sum::<f64>() / n as f64;

    // Prefix sums turn the inner window sum into three lookups.
    let mut prefix = vec![0.0f64; n + 1];
    for (i, &v) in y.iter().enumerate() {
        prefix[i + 1] = prefix[i] + (v - mean);
    }

    let mut points = Vec::new();
    let mut omitted = Vec::new();
    for &m in taus_m {
        if m == 0 {
            return Err(NoiseError::ZeroTau);
        }
        if n < 2 * m + 1 {
            omitted.push(m);
            continue;
        }
        let num_terms = n - 2 * m + 1;
        let mut acc = 0.0f64;
        for j in 0..num_terms {
            let second_difference = prefix[j + 2 * m] - 2.0 * prefix[j + m] + prefix[j];
            acc += second_difference * second_difference;
        }
        let var = acc / (2.0 * (m as f64) * (m as f64) * num_terms as f64);
        points.push(AllanPoint { tau_s: m as f64 * tau0, oadev: var.sqrt(), num_terms });
    }
    Ok(OadevOutcome { points, omitted_taus: omitted })
}

/// Largest power of two no bigger than `n / 8`, the conventional segment
/// default for [`welch_psd`].
pub fn default_segment_length(n_samples: usize) -> usize {
    let mut segment = 2usize;
    while segment * 2 <= n_samples / 8 {
        segment *= 2;
    }
    segment.min(n_samples)
}

/// One-sided Welch power spectral density.
///
/// Normalized so that white noise of variance `sigma^2` gives a flat level
/// `2 sigma^2 / fs` away from DC and Nyquist, and the integral over
/// `[0, fs/2]` recovers the variance of a stationary zero-mean input
/// (Parseval).
pub fn welch_psd(
    series: &TimeSeries,
    segment_length: usize,
    overlap_fraction: f64,
    window: Window,
) -> Result<Vec<PsdPoint>, NoiseError> {
    let n = series.samples.len();
    if segment_length < 2 || segment_length > n {
        return Err(NoiseError::BadSegment { segment: segment_length, len: n });
    }
    if !(0.0..=0.9).contains(&overlap_fraction) {
        return Err(NoiseError::BadOverlap(overlap_fraction));
    }
    let fs = series.sample_rate_hz;
    let taps: Vec<f64> = match window {
        Window::Rectangular => vec![1.0; segment_length],
        Window::Hann => (0..segment_length)
            .map(|i| {
                0.5 * (1.0
                    - (2.0 * std::f64::consts::PI * i as f64 / segment_length as f64).cos())
            })
            .collect(),
    };
    let window_power: f64 = taps.iter().map(|w| w * w).sum();

    let overlap = (segment_length as f64 * overlap_fraction).floor() as usize;
    let step = (segment_length - overlap).max(1);
    let fft = FftPlanner::new().plan_fft_forward(segment_length);

    let n_bins = segment_length / 2 + 1;
    let mut acc = vec![0.0f64; n_bins];
    let mut segments = 0usize;
    let mut buf = vec![Complex::new(0.0, 0.0); segment_length];
    let mut start = 0usize;
    while start + segment_length <= n {
        for (i, slot) in buf.iter_mut().enumerate() {
            *slot = Complex::new(series.samples[start + i] * taps[i], 0.0);
        }
        fft.process(&mut buf);
        for (k, a) in acc.iter_mut().enumerate() {
            *a += buf[k].norm_sqr();
        }
        segments += 1;
        start += step;
    }

    let norm = 1.0 / (segments as f64 * fs * window_power);
    let nyquist_bin = if segment_length.is_multiple_of(2) { Some(segment_length / 2) } else { None };
    Ok(acc
        .iter()
        .enumerate()
        .map(|(k, &a)| {
            let one_sided = if k == 0 || Some(k) == nyquist_bin { 1.0 } else { 2.0 };
            PsdPoint {
                frequency_hz: k as f64 * fs / segment_length as f64,
                density: one_sided * a * norm,
            }
        })
        .collect())
}
