use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, solve_spd, Matrix};
use crate::scalar::{expit, Real};

/// Logits are clipped to this magnitude, and a coefficient beyond it flags
/// separation.
pub const LOGIT_CLIP: f64 = 30.0;

const MAX_ITER: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit<T> {
    pub coefficients: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
    /// Coefficients diverged; predictions are computed from clipped logits.
    pub separated: bool,
    /// Largest weighted score component divided by the total weight.
    pub max_score: T,
}

impl<T: Real> LogisticFit<T> {
    pub fn linear_predictor(&self, x: &[T], offset: T) -> T {
        clip_logit(dot(x, &self.coefficients) + offset)
    }

    pub fn predict(&self, x: &[T], offset: T) -> T {
        expit(self.linear_predictor(x, offset))
    }
}

#[inline]
pub(crate) fn clip_logit<T: Real>(eta: T) -> T {
    let c = T::of(LOGIT_CLIP);
    eta.max(-c).min(c)
}

/// `log(1 + e^x)` without overflow.
#[inline]
fn softplus<T: Real>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn check_weights<T: Real>(weights: &[T]) -> Result<T> {
    if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w >= T::zero())) {
        return Err(Error::InvalidArgument(format!("weight {i} is negative or non-finite")));
    }
    let total: T = weights.iter().copied().sum();
    if total > T::zero() {
        Ok(total)
    } else {
        Err(Error::ZeroWeights)
    }
}

/// Every column must carry some weighted signal.
pub(crate) fn check_columns<T: Real>(x: &Matrix<T>, weights: &[T]) -> Result<()> {
    for j in 0..x.cols() {
        let ss: T = (0..x.rows()).map(|i| weights[i] * x[(i, j)] * x[(i, j)]).sum();
        if ss == T::zero() {
            return Err(Error::RankDeficient(format!("column {j} is zero on every weighted row")));
        }
    }
    Ok(())
}

/// Weighted Bernoulli maximum likelihood with a fixed offset, by Newton–Raphson
/// (IRLS) with step halving.
///
/// `y` may be fractional in `[0, 1]`. Rows with zero weight are ignored.
pub fn fit_weighted_logistic<T: Real>(
    x: &Matrix<T>,
    y: &[T],
    weights: &[T],
    offset: Option<&[T]>,
) -> Result<LogisticFit<T>> {
    let (n, p) = (x.rows(), x.cols());
    if y.len() != n || weights.len() != n || offset.is_some_and(|o| o.len() != n) {
        return Err(Error::InvalidArgument("logistic inputs have mismatched lengths".into()));
    }
    if let Some(i) = y.iter().position(|v| !(*v >= T::zero() && *v <= T::one())) {
        return Err(Error::InvalidArgument(format!("outcome {i} is outside [0, 1]")));
    }
    let total = check_weights(weights)?;
    check_columns(x, weights)?;
    let rows: Vec<usize> = (0..n).filter(|&i| weights[i] > T::zero()).collect();
    let off = |i: usize| offset.map_or(T::zero(), |o| o[i]);

    let eval = |beta: &[T]| -> (T, Vec<T>, Vec<T>) {
        // log-likelihood, score, and IRLS working weights
        let mut ll = T::zero();
        let mut score = vec![T::zero(); p];
        let mut work = vec![T::zero(); n];
        for &i in &rows {
            let eta = clip_logit(dot(x.row(i), beta) + off(i));
            let mu = expit(eta);
            ll += weights[i] * (y[i] * eta - softplus(eta));
            let r = weights[i] * (y[i] - mu);
            for (j, s) in score.iter_mut().enumerate() {
                *s += r * x[(i, j)];
            }
            work[i] = weights[i] * mu * (T::one() - mu);
        }
        (ll, score, work)
    };
    let max_abs = |v: &[T]| v.iter().fold(T::zero(), |m, s| m.max(s.abs()));

    let mut beta = vec![T::zero(); p];
    let (mut ll, mut score, mut work) = eval(&beta);
    let tol = T::of(T::SCORE_TOL);
    let step_tol = T::of(T::STEP_TOL);
    let mut converged = false;
    let mut separated = false;
    let mut iterations = 0;
    while iterations < MAX_ITER {
        if max_abs(&score) / total <= tol {
            converged = true;
            break;
        }
        iterations += 1;
        let mut h = Matrix::zeros(p, p);
        for &i in &rows {
            let xi = x.row(i);
            for a in 0..p {
                let wa = work[i] * xi[a];
                for b in 0..=a {
                    h[(a, b)] += wa * xi[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                h[(b, a)] = h[(a, b)];
            }
        }
        let step = match solve_spd(&h, &score) {
            Ok(s) => s,
            Err(e) => {
                if max_abs(&beta) > T::of(LOGIT_CLIP / 2.0) {
                    separated = true;
                    break;
                }
                return Err(e);
            }
        };
        let mut t = T::one();
        let mut accepted = false;
        for _ in 0..40 {
            let cand: Vec<T> = beta.iter().zip(&step).map(|(b, s)| *b + t * *s).collect();
            let (ll_c, score_c, work_c) = eval(&cand);
            if ll_c >= ll - T::epsilon() * ll.abs().max(T::one()) * T::of(8.0) {
                beta = cand;
                ll = ll_c;
                score = score_c;
                work = work_c;
                accepted = true;
                break;
            }
            t /= T::of(2.0);
        }
        let moved = max_abs(&step) * t;
        if max_abs(&beta) > T::of(LOGIT_CLIP) {
            separated = true;
            break;
        }
        if !accepted || moved <= step_tol * (T::one() + max_abs(&beta)) {
            converged = max_abs(&score) / total <= tol.sqrt();
            break;
        }
    }
    if separated {
        log::warn!("logistic fit separated; logits clipped at ±{LOGIT_CLIP}");
    }
    let max_score = max_abs(&score) / total;
    Ok(LogisticFit {
        coefficients: beta,
        iterations,
        converged,
        separated,
        max_score,
    })
}
