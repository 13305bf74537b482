use crate::error::{Error, Result};
use crate::linalg::{solve_spd, Matrix};
use crate::nuisance::logistic::{check_columns, check_weights};
use crate::scalar::Real;

/// Weighted least squares: minimizes `Σ wᵢ (yᵢ − xᵢᵀβ)²`.
pub fn fit_weighted_linear<T: Real>(x: &Matrix<T>, y: &[T], weights: &[T]) -> Result<Vec<T>> {
    let (n, p) = (x.rows(), x.cols());
    if y.len() != n || weights.len() != n {
        return Err(Error::InvalidArgument("linear inputs have mismatched lengths".into()));
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("outcome {i} is not finite")));
    }
    check_weights(weights)?;
    check_columns(x, weights)?;
    let mut xtx = Matrix::zeros(p, p);
    let mut xty = vec![T::zero(); p];
    for i in 0..n {
        let w = weights[i];
        if w == T::zero() {
            continue;
        }
        let xi = x.row(i);
        for a in 0..p {
            let wa = w * xi[a];
            xty[a] += wa * y[i];
            for b in 0..=a {
                xtx[(a, b)] += wa * xi[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            xtx[(b, a)] = xtx[(a, b)];
        }
    }
    solve_spd(&xtx, &xty)
}
