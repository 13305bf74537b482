//! Small statistics used when summarizing replications.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::linalg::{inverse_sqrt_spd, Matrix};

/// Mean and standard deviation (divisor `n − 1`).
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, f64::NAN);
    }
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// Kolmogorov distribution tail `P(K > λ)`.
fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=200 {
        let jf = j as f64;
        let term = (-2.0 * jf * jf * lambda * lambda).exp();
        sum += if j % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov–Smirnov test against `N(0, 1)` with the
/// asymptotic p-value under Stephens' small-sample correction.
pub fn ks_standard_normal(xs: &[f64]) -> Result<KsResult> {
    if xs.is_empty() || xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("KS test needs finite values".into()));
    }
    let normal = Normal::standard();
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in v.iter().enumerate() {
        let f = normal.cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    let rn = n.sqrt();
    let lambda = (rn + 0.12 + 0.11 / rn) * d;
    Ok(KsResult {
        statistic: d,
        p_value: kolmogorov_tail(lambda),
        n: v.len(),
    })
}

/// `Σ^{-1/2} (x − μ)` for each row.
pub fn whiten(rows: &[[f64; 3]], center: [f64; 3], sigma: &Matrix<f64>) -> Result<Vec<[f64; 3]>> {
    let r = inverse_sqrt_spd(sigma)?;
    Ok(rows
        .iter()
        .map(|x| {
            let c = [x[0] - center[0], x[1] - center[1], x[2] - center[2]];
            let z = r.mul_vec(&c);
            [z[0], z[1], z[2]]
        })
        .collect())
}
