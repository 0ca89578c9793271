use super::*;
use crate::opo_model::{spectrum, OpoModelParams};
use crate::simulator::{gen_gain_data, GaussianStream, Seed};
use approx::assert_relative_eq;

fn reference_params() -> OpoModelParams {
    OpoModelParams {
        threshold_power_w: 5.12e-3,
        fwhm_bandwidth_hz: 66e6,
        total_efficiency: 0.92,
        phase_noise_rms_rad: 0.019,
    }
}

fn grid(start: f64, step: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| start + step * i as f64).collect()
}

#[test]
fn electronic_noise_correction_reference_points() {
    let v_meas = 10f64.powf(-0.9); // -9.0 dB
    let v_el = 10f64.powf(-2.2); // -22 dB
    let corrected = correct_electronic_noise(v_meas, v_el).unwrap();
    assert_relative_eq!(corrected, 0.12034, epsilon = 1e-5);
    assert_relative_eq!(10.0 * corrected.log10(), -9.196, epsilon = 1e-3);

    // zero floor: identity
    assert_eq!(correct_electronic_noise(0.5, 0.0).unwrap(), 0.5);
    // shot noise maps to shot noise for any floor
    for v_el in [0.0, 0.001, 0.0063, 0.5] {
        assert_relative_eq!(correct_electronic_noise(1.0, v_el).unwrap(), 1.0, epsilon = 1e-15);
    }
    assert!(correct_electronic_noise(0.005, 0.0063).is_err());
    assert!(correct_electronic_noise(0.5, 1.0).is_err());
    assert!(correct_electronic_noise(0.5, -0.1).is_err());
}

#[test]
fn electronic_noise_correction_round_trips_and_is_monotone() {
    let mut rng = GaussianStream::new(Seed(2));
    for _ in 0..200 {
        let v = 10f64.powf(rng.next_gaussian()); // spans ~1e-2..1e2
        let v_el = 0.3 * rng.next_gaussian().abs().min(2.9) / 3.0;
        let forward = apply_electronic_noise(v, v_el).unwrap();
        let back = correct_electronic_noise(forward, v_el).unwrap();
        assert_relative_eq!(back, v, max_relative = 1e-12);
        let above = correct_electronic_noise(forward + 1e-3, v_el).unwrap();
        assert!(above > back);
    }
}

#[test]
fn fit_gain_two_exact_points() {
    let p_thr = 5.12e-3;
    let data = vec![
        GainMeasurement::new(p_thr / 4.0, 4.0),
        GainMeasurement::new(p_thr / 9.0, 2.25),
    ];
    let fit = fit_gain(&data, 2e-3).unwrap();
    assert!(fit.converged);
    assert_relative_eq!(fit.values[0], p_thr, max_relative = 1e-9);
    assert_eq!(fit.parameter_names, vec!["p_thr_w".to_string()]);
}

#[test]
fn fit_gain_noiseless_simulated_curve() {
    let powers = grid(0.5e-3, 0.25e-3, 17);
    let data = gen_gain_data(5.12e-3, &powers, 0.0, Seed(0)).unwrap();
    let fit = fit_gain(&data, 6e-3).unwrap();
    assert!(fit.converged);
    assert_relative_eq!(fit.values[0], 5.12e-3, max_relative = 1e-6);
}

#[test]
fn fit_gain_rejects_unidentifiable_data() {
    let data = vec![GainMeasurement::new(0.0, 1.0), GainMeasurement::new(0.0, 1.0)];
    assert!(matches!(fit_gain(&data, 1e-3), Err(EstimationError::Unidentifiable(_))));
    assert!(fit_gain(&[GainMeasurement::new(1e-3, 2.0)], 1e-3).is_err());
}

// The uncertainty calibration checks run on powers up to 3.5 mW (x <= 0.83).
// Above that the gain curve is steep enough that a 5% power error leaves the
// first-order propagation regime and the spread genuinely exceeds the
// first-order standard error.

#[test]
fn fit_gain_standard_error_is_calibrated() {
    // empirical spread over 100 seeds vs the mean reported standard error
    let powers = grid(0.5e-3, 0.25e-3, 13);
    let mut estimates = Vec::new();
    let mut reported = Vec::new();
    for seed in 0..100u64 {
        let data = gen_gain_data(5.12e-3, &powers, 0.05, Seed(seed)).unwrap();
        let fit = fit_gain(&data, 5.4e-3).unwrap();
        assert!(fit.converged, "seed {seed}");
        estimates.push(fit.values[0]);
        reported.push(fit.standard_errors[0]);
    }
    let mean = estimates.iter().sum::<f64>() / estimates.len() as f64;
    let emp_std = (estimates.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>()
        / (estimates.len() - 1) as f64)
        .sqrt();
    let mean_se = reported.iter().sum::<f64>() / reported.len() as f64;
    let ratio = emp_std / mean_se;
    assert!((0.7..=1.3).contains(&ratio), "spread/reported ratio {ratio}");
}

#[test]
fn fit_gain_one_sigma_coverage() {
    // nominal 68% coverage of the 1-sigma interval, accepted between 55% and 80%
    let powers = grid(0.5e-3, 0.25e-3, 13);
    let truth = 5.12e-3;
    let mut hits = 0usize;
    let reps = 200usize;
    for seed in 0..reps as u64 {
        let data = gen_gain_data(truth, &powers, 0.05, Seed(1000 + seed)).unwrap();
        let fit = fit_gain(&data, 5.4e-3).unwrap();
        if (fit.values[0] - truth).abs() <= fit.standard_errors[0] {
            hits += 1;
        }
    }
    let coverage = hits as f64 / reps as f64;
    assert!((0.55..=0.80).contains(&coverage), "coverage {coverage}");
}

#[test]
fn fit_gain_invariant_under_point_reordering() {
    let powers = grid(0.5e-3, 0.25e-3, 17);
    let data = gen_gain_data(5.12e-3, &powers, 0.05, Seed(8)).unwrap();
    let mut reversed = data.clone();
    reversed.reverse();
    let a = fit_gain(&data, 5.4e-3).unwrap();
    let b = fit_gain(&reversed, 5.4e-3).unwrap();
    assert_relative_eq!(a.values[0], b.values[0], max_relative = 1e-9);
    assert_relative_eq!(a.standard_errors[0], b.standard_errors[0], max_relative = 1e-9);
}

#[test]
fn fit_gain_invariant_under_power_rescaling() {
    // same fit expressed in watts and in milliwatts
    let powers = grid(0.5e-3, 0.25e-3, 17);
    let data_w = gen_gain_data(5.12e-3, &powers, 0.0, Seed(9)).unwrap();
    let data_mw: Vec<GainMeasurement> = data_w
        .iter()
        .map(|d| GainMeasurement {
            pump_power_w: d.pump_power_w * 1e3,
            gain: d.gain,
            power_fractional_uncertainty: d.power_fractional_uncertainty,
        })
        .collect();
    let fit_w = fit_gain(&data_w, 6e-3).unwrap();
    let fit_mw = fit_gain(&data_mw, 6.0).unwrap();
    assert_relative_eq!(fit_w.values[0] * 1e3, fit_mw.values[0], max_relative = 1e-9);
}

#[test]
fn power_sweep_noiseless_recovery() {
    let truth = OpoModelParams {
        threshold_power_w: 5e-3,
        fwhm_bandwidth_hz: 66e6,
        total_efficiency: 0.85,
        phase_noise_rms_rad: 0.03,
    };
    let powers = grid(0.25e-3, 0.25e-3, 16);
    let f = 5e6;
    let sweep = |quad| -> Vec<(f64, f64)> {
        powers
            .iter()
            .map(|&p| (p, quadrature_variance_for_test(&truth, p, f, quad)))
            .collect()
    };
    let squeezed = sweep(Quadrature::Squeezed);
    let antisqueezed = sweep(Quadrature::Antisqueezed);

    let fit = fit_power_sweep(
        &squeezed,
        &antisqueezed,
        f,
        truth.fwhm_bandwidth_hz,
        ThresholdMode::Fixed(truth.threshold_power_w),
    )
    .unwrap();
    assert!(fit.converged);
    assert_relative_eq!(fit.value_of("eta_tot").unwrap(), 0.85, max_relative = 1e-6);
    assert_relative_eq!(fit.value_of("phi_rad").unwrap(), 0.03, max_relative = 1e-6);

    // threshold free: still an exact recovery
    let fit = fit_power_sweep(
        &squeezed,
        &antisqueezed,
        f,
        truth.fwhm_bandwidth_hz,
        ThresholdMode::Free { initial: None },
    )
    .unwrap();
    assert!(fit.converged);
    assert_relative_eq!(fit.value_of("eta_tot").unwrap(), 0.85, max_relative = 1e-6);
    assert_relative_eq!(fit.value_of("phi_rad").unwrap(), 0.03, max_relative = 1e-6);
    assert_relative_eq!(fit.value_of("p_thr_w").unwrap(), 5e-3, max_relative = 1e-6);
}

fn quadrature_variance_for_test(
    params: &OpoModelParams,
    p: f64,
    f: f64,
    quad: Quadrature,
) -> f64 {
    crate::opo_model::quadrature_variance(params, p, f, quad).unwrap()
}

#[test]
fn power_sweep_zero_phase_noise_pins_phi_at_bound() {
    let truth = OpoModelParams {
        threshold_power_w: 5e-3,
        fwhm_bandwidth_hz: 66e6,
        total_efficiency: 0.9,
        phase_noise_rms_rad: 0.0,
    };
    let powers = grid(0.25e-3, 0.25e-3, 16);
    let f = 5e6;
    let squeezed: Vec<(f64, f64)> = powers
        .iter()
        .map(|&p| (p, quadrature_variance_for_test(&truth, p, f, Quadrature::Squeezed)))
        .collect();
    let antisqueezed: Vec<(f64, f64)> = powers
        .iter()
        .map(|&p| (p, quadrature_variance_for_test(&truth, p, f, Quadrature::Antisqueezed)))
        .collect();
    let fit = fit_power_sweep(
        &squeezed,
        &antisqueezed,
        f,
        truth.fwhm_bandwidth_hz,
        ThresholdMode::Fixed(truth.threshold_power_w),
    )
    .unwrap();
    assert!(fit.value_of("phi_rad").unwrap() < 1e-4);
    assert_relative_eq!(fit.value_of("eta_tot").unwrap(), 0.9, max_relative = 1e-6);
}

#[test]
fn power_sweep_single_quadrature_warns() {
    let truth = reference_params();
    let powers = grid(0.25e-3, 0.25e-3, 16);
    let squeezed: Vec<(f64, f64)> = powers
        .iter()
        .map(|&p| (p, quadrature_variance_for_test(&truth, p, 5e6, Quadrature::Squeezed)))
        .collect();
    let fit = fit_power_sweep(
        &squeezed,
        &[],
        5e6,
        truth.fwhm_bandwidth_hz,
        ThresholdMode::Fixed(truth.threshold_power_w),
    )
    .unwrap();
    assert!(fit.warnings.iter().any(|w| w.contains("one quadrature")));
    assert!(fit_power_sweep(&[], &[], 5e6, 66e6, ThresholdMode::Fixed(5e-3)).is_err());
}

#[test]
fn spectra_fit_recovers_bandwidth_from_single_trace() {
    let truth = reference_params();
    let freqs = grid(1e6, 0.5e6, 239);
    let trace = spectrum(&truth, 2.5e-3, &freqs, Quadrature::Squeezed).unwrap();
    let config = SpectraFitConfig {
        threshold: ThresholdMode::Fixed(truth.threshold_power_w),
        kappa_initial_hz: None,
        phi_mode: PhiMode::Shared,
    };
    let fit = fit_spectra(std::slice::from_ref(&trace), &[], &config).unwrap();
    assert_relative_eq!(fit.value_of("kappa_hz").unwrap(), 66e6, max_relative = 1e-4);
    assert!(fit.warnings.iter().any(|w| w.contains("one quadrature")));
}

#[test]
fn spectra_fit_empty_band_list_is_a_no_op() {
    let truth = reference_params();
    let freqs = grid(1e6, 0.5e6, 239);
    let traces = vec![
        spectrum(&truth, 2.5e-3, &freqs, Quadrature::Squeezed).unwrap(),
        spectrum(&truth, 2.5e-3, &freqs, Quadrature::Antisqueezed).unwrap(),
    ];
    let config = SpectraFitConfig {
        threshold: ThresholdMode::Fixed(truth.threshold_power_w),
        kappa_initial_hz: Some(60e6),
        phi_mode: PhiMode::Shared,
    };
    // bands that sit entirely outside the measured grid
    let outside = vec![ExclusionBand::new(500e6, 510e6).unwrap()];
    let a = fit_spectra(&traces, &[], &config).unwrap();
    let b = fit_spectra(&traces, &outside, &config).unwrap();
    for (va, vb) in a.values.iter().zip(&b.values) {
        assert_relative_eq!(va, vb, max_relative = 1e-9);
    }
}

#[test]
fn spectra_fit_per_power_phase_noise() {
    let base = reference_params();
    let freqs = grid(1e6, 1e6, 120);
    let mut traces = Vec::new();
    for (p, phi) in [(2.5e-3, 0.019), (3.5e-3, 0.012)] {
        let params = OpoModelParams { phase_noise_rms_rad: phi, ..base };
        traces.push(spectrum(&params, p, &freqs, Quadrature::Squeezed).unwrap());
        traces.push(spectrum(&params, p, &freqs, Quadrature::Antisqueezed).unwrap());
    }
    let config = SpectraFitConfig {
        threshold: ThresholdMode::Fixed(base.threshold_power_w),
        kappa_initial_hz: Some(60e6),
        phi_mode: PhiMode::PerPower,
    };
    let fit = fit_spectra(&traces, &[], &config).unwrap();
    assert_relative_eq!(fit.value_of("eta_tot").unwrap(), 0.92, max_relative = 1e-5);
    assert_relative_eq!(
        fit.value_of("phi_rad[p=0.0025 W]").unwrap(),
        0.019,
        max_relative = 1e-4
    );
    assert_relative_eq!(
        fit.value_of("phi_rad[p=0.0035 W]").unwrap(),
        0.012,
        max_relative = 1e-4
    );
}

#[test]
fn spectra_fit_errors_when_everything_is_excluded() {
    let truth = reference_params();
    let freqs = grid(1e6, 1e6, 50);
    let trace = spectrum(&truth, 2.5e-3, &freqs, Quadrature::Squeezed).unwrap();
    let band = vec![ExclusionBand::new(0.5e6, 51e6).unwrap()];
    let config = SpectraFitConfig {
        threshold: ThresholdMode::Fixed(truth.threshold_power_w),
        kappa_initial_hz: None,
        phi_mode: PhiMode::Shared,
    };
    assert!(matches!(
        fit_spectra(std::slice::from_ref(&trace), &band, &config),
        Err(EstimationError::AllPointsExcluded)
    ));
}

#[test]
fn spectra_fit_flags_unidentifiable_bandwidth() {
    let truth = reference_params();
    // all data far inside the linewidth
    let freqs = grid(0.1e6, 0.1e6, 30);
    let traces = vec![
        spectrum(&truth, 2.5e-3, &freqs, Quadrature::Squeezed).unwrap(),
        spectrum(&truth, 2.5e-3, &freqs, Quadrature::Antisqueezed).unwrap(),
    ];
    let config = SpectraFitConfig {
        threshold: ThresholdMode::Fixed(truth.threshold_power_w),
        kappa_initial_hz: Some(66e6),
        phi_mode: PhiMode::Shared,
    };
    let fit = fit_spectra(&traces, &[], &config).unwrap();
    assert!(fit.warnings.iter().any(|w| w.contains("kappa_hz is weakly identifiable")));
}

#[test]
fn default_exclusion_bands_cover_the_spur_lines() {
    let bands = ExclusionBand::default_bands();
    assert_eq!(bands.len(), 3);
    for (band, center) in bands.iter().zip([40e6, 80e6, 100e6]) {
        assert!(band.contains(center));
        assert!(band.contains(center - 2e6));
        assert!(!band.contains(center + 2.1e6));
    }
}

#[test]
fn fit_covariance_is_symmetric_positive_semidefinite() {
    let truth = reference_params();
    let powers = grid(0.25e-3, 0.25e-3, 16);
    let sweep = |quad| -> Vec<(f64, f64)> {
        powers
            .iter()
            .map(|&p| (p, quadrature_variance_for_test(&truth, p, 5e6, quad)))
            .collect()
    };
    let fit = fit_power_sweep(
        &sweep(Quadrature::Squeezed),
        &sweep(Quadrature::Antisqueezed),
        5e6,
        truth.fwhm_bandwidth_hz,
        ThresholdMode::Free { initial: None },
    )
    .unwrap();
    let n = fit.values.len();
    let cov = nalgebra::DMatrix::from_row_slice(n, n, &fit.covariance);
    for i in 0..n {
        for j in 0..n {
            let scale = cov[(i, i)].abs().max(cov[(j, j)].abs()).max(1e-300);
            assert!((cov[(i, j)] - cov[(j, i)]).abs() <= 1e-9 * scale);
        }
        assert_relative_eq!(fit.standard_errors[i], cov[(i, i)].max(0.0).sqrt());
    }
    let eigen = nalgebra::SymmetricEigen::new(cov.clone());
    let max_eig = eigen.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    for &lambda in eigen.eigenvalues.iter() {
        assert!(lambda >= -1e-12 * max_eig, "negative eigenvalue {lambda}");
    }
}

#[test]
fn central_jacobian_matches_forward_stencil() {
    // independent forward-difference check of the solver's Jacobian on the
    // sweep residual, over a deterministic scatter of parameter points
    let truth = reference_params();
    let powers = grid(0.25e-3, 0.25e-3, 15);
    let data: Vec<(f64, f64, Quadrature)> = powers
        .iter()
        .flat_map(|&p| {
            [Quadrature::Squeezed, Quadrature::Antisqueezed].into_iter().map(move |q| (p, q))
        })
        .map(|(p, q)| (p, quadrature_variance_for_test(&truth, p, 5e6, q), q))
        .collect();
    let residual = |theta: &[f64]| -> Vec<f64> {
        let (eta, phi, p_thr) = (theta[0], theta[1], theta[2]);
        data.iter()
            .map(|&(p, v, q)| {
                let x = (p / p_thr).sqrt();
                let model = crate::opo_model::variance_raw(eta, phi, x, 5e6 / 66e6, q);
                10.0 * (model.max(f64::MIN_POSITIVE).log10() - v.log10())
            })
            .collect()
    };

    let mut rng = GaussianStream::new(Seed(77));
    for _ in 0..25 {
        let theta = [
            0.7 + 0.05 * rng.next_gaussian().clamp(-3.0, 3.0),
            (0.03 + 0.005 * rng.next_gaussian()).abs().min(0.09),
            5.12e-3 * (1.0 + 0.02 * rng.next_gaussian().clamp(-3.0, 3.0)),
        ];
        let central = central_difference_jacobian(residual, &theta).unwrap();
        let r0 = residual(&theta);
        for j in 0..theta.len() {
            // the forward stencil gets its own scale-appropriate step
            let h = f64::EPSILON.sqrt() * theta[j].abs();
            let mut bumped = theta;
            bumped[j] += h;
            let r1 = residual(&bumped);
            // compare derivative columns in norm: individual entries near
            // zero are limited by stencil roundoff, not by either Jacobian
            let mut diff_sq = 0.0;
            let mut norm_sq = 0.0;
            for i in 0..r0.len() {
                let forward = (r1[i] - r0[i]) / h;
                diff_sq += (central[i][j] - forward) * (central[i][j] - forward);
                norm_sq += central[i][j] * central[i][j];
            }
            let rel = (diff_sq / norm_sq).sqrt();
            assert!(rel <= 1e-5, "column {j}: relative deviation {rel}");
        }
    }
}
