use crate::error::{Error, Result};
use crate::nuisance::logistic::check_weights;
use crate::scalar::{expit, Real};

const MAX_ITER: usize = 200;

/// Intercept `ε` of the weighted offset logistic regression of `f` on
/// offsets `offset`; the root of `Σ wᵢ (fᵢ − expit(offsetᵢ + ε)) = 0`.
///
/// Newton steps are safeguarded by a bracket that is expanded until it
/// contains the root and bisected whenever Newton would leave it. Returns
/// `ε` and the weighted mean score at `ε`.
pub fn solve_logistic_fluctuation<T: Real>(
    f: &[T],
    offset: &[T],
    weights: &[T],
    component: usize,
) -> Result<(T, T)> {
    let total = check_weights(weights)?;
    let score = |eps: T| -> (T, T) {
        let (mut s, mut h) = (T::zero(), T::zero());
        for i in 0..f.len() {
            if weights[i] == T::zero() {
                continue;
            }
            let p = expit(offset[i] + eps);
            s += weights[i] * (f[i] - p);
            h += weights[i] * p * (T::one() - p);
        }
        (s / total, h / total)
    };
    let fail = |s: T| Error::FluctuationNonConvergence {
        component,
        score: s.as_f64(),
    };
    let mass: T = f.iter().zip(weights).map(|(f, w)| *f * *w).sum::<T>() / total;
    if !(mass > T::zero() && mass < T::one()) {
        // The score keeps one sign for every finite ε.
        return Err(fail(mass));
    }
    let score_tol = T::of(T::SCORE_TOL) * T::of(1e-2);
    let step_tol = T::of(T::STEP_TOL);
    let (mut lo, mut hi) = (T::neg_infinity(), T::infinity());
    let mut eps = T::zero();
    let (mut s, mut h) = score(eps);
    for _ in 0..MAX_ITER {
        if s.abs() <= score_tol {
            return Ok((eps, s));
        }
        if s > T::zero() {
            lo = eps;
        } else {
            hi = eps;
        }
        let newton = if h > T::zero() { eps + s / h } else { T::nan() };
        let next = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else if lo.is_finite() && hi.is_finite() {
            (lo + hi) / T::of(2.0)
        } else if lo.is_finite() {
            lo + (T::one() + lo.abs())
        } else {
            hi - (T::one() + hi.abs())
        };
        let moved = (next - eps).abs();
        eps = next;
        (s, h) = score(eps);
        if moved <= step_tol * (T::one() + eps.abs()) {
            break;
        }
    }
    if s.abs() <= T::of(T::SCORE_TOL) {
        Ok((eps, s))
    } else {
        Err(fail(s))
    }
}

/// Closed-form log-linear fluctuation: `exp(ε) = Σ wᵢ fᵢ / Σ wᵢ qᵢ`, the
/// unique root of `Σ wᵢ (fᵢ − qᵢ e^ε) = 0`.
pub fn closed_form_log_fluctuation<T: Real>(f: &[T], q: &[T], weights: &[T], component: usize) -> Result<T> {
    check_weights(weights)?;
    let num: T = f.iter().zip(weights).map(|(f, w)| *f * *w).sum();
    let den: T = q.iter().zip(weights).map(|(q, w)| *q * *w).sum();
    if !(den > T::zero()) {
        return Err(Error::NonPositive {
            what: format!("weighted initial fit total for component {}", component + 1),
            value: den.as_f64(),
        });
    }
    if !(num > T::zero()) {
        return Err(Error::NonPositive {
            what: format!("weighted pseudo-outcome total for component {}", component + 1),
            value: num.as_f64(),
        });
    }
    Ok((num / den).ln())
}
