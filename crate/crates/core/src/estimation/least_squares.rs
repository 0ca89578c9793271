//! Bounded Levenberg-Marquardt solver with a numerically differenced
//! Jacobian. All fits in this crate run through [`least_squares`].

use nalgebra::{Cholesky, DMatrix, DVector};

use super::{EstimationError, FitResult};

const MAX_ITERATIONS: usize = 500;
/// Stop when an accepted step decreases the cost by less than this fraction.
const COST_REL_TOL: f64 = 1e-12;
/// Stop when the projected gradient infinity-norm falls below this.
const GRAD_TOL: f64 = 1e-10;
const LAMBDA_INIT: f64 = 1e-3;
const LAMBDA_MAX: f64 = 1e14;

/// Central-difference Jacobian of a residual function, step
/// `max(1e-8, 1e-8*|theta_j|)` per parameter.
///
/// The function is evaluated just outside the current point in each
/// coordinate, so residual functions must be well-defined in a small
/// neighborhood (including slightly outside any fit bounds).
pub fn central_difference_jacobian<F>(
    residual_fn: F,
    theta: &[f64],
) -> Result<Vec<Vec<f64>>, EstimationError>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let eval = checked(&residual_fn);
    let r0 = eval(theta)?;
    let jac = jacobian_inner(&eval, theta, r0.len())?;
    Ok((0..r0.len())
        .map(|i| (0..theta.len()).map(|j| jac[(i, j)]).collect())
        .collect())
}

fn checked<'a, F>(residual_fn: &'a F) -> impl Fn(&[f64]) -> Result<DVector<f64>, EstimationError> + 'a
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    move |theta: &[f64]| {
        let r = residual_fn(theta);
        if r.is_empty() {
            return Err(EstimationError::InvalidInput(
                "residual function returned an empty vector".into(),
            ));
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(EstimationError::NonFiniteResiduals(format!("{theta:?}")));
        }
        Ok(DVector::from_vec(r))
    }
}

fn jacobian_inner<E>(eval: &E, theta: &[f64], m: usize) -> Result<DMatrix<f64>, EstimationError>
where
    E: Fn(&[f64]) -> Result<DVector<f64>, EstimationError>,
{
    let n = theta.len();
    let mut jac = DMatrix::zeros(m, n);
    let mut work = theta.to_vec();
    for j in 0..n {
        let h = 1e-8f64.max(1e-8 * theta[j].abs());
        work[j] = theta[j] + h;
        let plus = eval(&work)?;
        work[j] = theta[j] - h;
        let minus = eval(&work)?;
        work[j] = theta[j];
        if plus.len() != m || minus.len() != m {
            return Err(EstimationError::InvalidInput(
                "residual vector length changed between evaluations".into(),
            ));
        }
        jac.set_column(j, &((plus - minus) / (2.0 * h)));
    }
    Ok(jac)
}

/// Minimize `|residual_fn(theta)|^2` subject to box bounds.
///
/// Levenberg-Marquardt with multiplicative damping of the normal-matrix
/// diagonal (scale invariant) and bound handling by projection of trial
/// steps. Convergence: projected gradient below 1e-10, or an accepted step
/// whose relative cost decrease is below 1e-12; at most 500 iterations.
///
/// The parameter covariance is `rss/dof * pinv(J^T J)` at the solution; a
/// rank-deficient normal matrix is reported through `converged = false` and
/// a warning naming the condition number, with the pseudo-inverse covariance
/// still returned so flat directions can be inspected.
pub fn least_squares<F>(
    residual_fn: F,
    initial: &[f64],
    bounds: &[(f64, f64)],
) -> Result<FitResult, EstimationError>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = initial.len();
    if n == 0 {
        return Err(EstimationError::InvalidInput("no parameters to fit".into()));
    }
    if bounds.len() != n {
        return Err(EstimationError::InvalidInput(format!(
            "{} parameters but {} bound intervals",
            n,
            bounds.len()
        )));
    }
    for (j, &(lo, hi)) in bounds.iter().enumerate() {
        if !(lo <= hi) {
            return Err(EstimationError::InvalidInput(format!(
                "bounds for parameter {j} are inverted: [{lo}, {hi}]"
            )));
        }
        if initial[j] < lo || initial[j] > hi {
            return Err(EstimationError::InvalidInput(format!(
                "initial guess {} for parameter {j} outside bounds [{lo}, {hi}]",
                initial[j]
            )));
        }
    }

    let eval = checked(&residual_fn);
    let mut theta = DVector::from_column_slice(initial);
    let mut r = eval(theta.as_slice())?;
    let m = r.len();
    let mut cost = r.norm_squared();
    let mut lambda = LAMBDA_INIT;
    let mut converged = false;
    let mut iterations = 0;
    let mut warnings: Vec<String> = Vec::new();

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let jac = jacobian_inner(&eval, theta.as_slice(), m)?;
        let grad = jac.transpose() * &r;

        // Projected gradient: components pushing against an active bound do
        // not count towards the optimality measure.
        let mut proj_grad_norm = 0.0f64;
        for j in 0..n {
            let pinned_low = theta[j] <= bounds[j].0 && grad[j] > 0.0;
            let pinned_high = theta[j] >= bounds[j].1 && grad[j] < 0.0;
            if !pinned_low && !pinned_high {
                proj_grad_norm = proj_grad_norm.max(grad[j].abs());
            }
        }
        if proj_grad_norm < GRAD_TOL {
            converged = true;
            break;
        }

        let normal = jac.transpose() * &jac;
        let max_diag = (0..n).map(|j| normal[(j, j)]).fold(0.0f64, f64::max);

        let mut accepted = false;
        let mut small_decrease = false;
        while lambda <= LAMBDA_MAX {
            let mut damped = normal.clone();
            for j in 0..n {
                let d = normal[(j, j)].max(1e-12 * max_diag).max(f64::MIN_POSITIVE);
                damped[(j, j)] += lambda * d;
            }
            let step = match Cholesky::new(damped) {
                Some(ch) => ch.solve(&(-&grad)),
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let mut trial = &theta + step;
            for j in 0..n {
                trial[j] = trial[j].clamp(bounds[j].0, bounds[j].1);
            }
            let r_trial = eval(trial.as_slice())?;
            let cost_trial = r_trial.norm_squared();
            if cost_trial < cost {
                let rel_decrease = (cost - cost_trial) / cost.max(f64::MIN_POSITIVE);
                theta = trial;
                r = r_trial;
                cost = cost_trial;
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                small_decrease = rel_decrease < COST_REL_TOL;
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // No decreasing step exists even for vanishing step sizes: the
            // cost is at its floating-point floor, which satisfies the
            // relative-decrease criterion with decrease zero.
            converged = true;
            break;
        }
        if small_decrease {
            converged = true;
            break;
        }
    }
    if !converged && iterations >= MAX_ITERATIONS {
        warnings.push(format!("iteration limit {MAX_ITERATIONS} reached"));
    }

    // Covariance from the Jacobian at the solution. Rank and conditioning
    // are judged on the column-scaled (correlation-like) normal matrix so
    // that parameters of wildly different physical scale (hertz next to
    // dimensionless fractions) do not masquerade as flat directions.
    let jac = jacobian_inner(&eval, theta.as_slice(), m)?;
    let normal = jac.transpose() * &jac;
    let dof = m.saturating_sub(n);
    let scale = if dof > 0 {
        cost / dof as f64
    } else {
        warnings.push("zero degrees of freedom; covariance set to zero".into());
        0.0
    };
    let col_scale: Vec<f64> = (0..n)
        .map(|j| {
            let d = normal[(j, j)];
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let mut correlation = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            correlation[(i, j)] = normal[(i, j)] * col_scale[i] * col_scale[j];
        }
    }
    let svd = correlation.svd(true, true);
    let s_max = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let s_min = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
    let rank_cutoff = s_max * 1e-12;
    let rank_deficient =
        s_max == 0.0 || s_min <= rank_cutoff || col_scale.contains(&0.0);
    if rank_deficient {
        converged = false;
        warnings.push(format!(
            "normal matrix J^T J is singular at the solution (scaled singular values span \
             {s_max:.3e} to {s_min:.3e}); at least one parameter direction is unidentifiable"
        ));
    } else if s_max / s_min > 1e10 {
        warnings.push(format!(
            "normal matrix condition number {:.3e}; a nearly flat parameter direction is present",
            s_max / s_min
        ));
    }
    let pinv = svd
        .pseudo_inverse(rank_cutoff.max(f64::MIN_POSITIVE))
        .unwrap_or_else(|_| DMatrix::zeros(n, n));
    let mut cov = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            cov[(i, j)] = scale * pinv[(i, j)] * col_scale[i] * col_scale[j];
        }
    }
    let standard_errors: Vec<f64> = (0..n).map(|j| cov[(j, j)].max(0.0).sqrt()).collect();
    let covariance: Vec<f64> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| cov[(i, j)])
        .collect();

    Ok(FitResult {
        parameter_names: (0..n).map(|j| format!("p{j}")).collect(),
        values: theta.iter().cloned().collect(),
        standard_errors,
        covariance,
        rss: cost,
        dof,
        converged,
        iterations,
        warnings,
    })
}
