use serde::{Deserialize, Serialize};

use crate::continuous::kernel::{check_bandwidth, KernelSpec};
use crate::error::{Error, Result};
use crate::quadrature::adaptive_simpson;

const QUAD_TOL: f64 = 1e-12;
const ZERO_BIAS: f64 = 1e-12;

/// A law with computable unsmoothed parameter `s ↦ Ψ(P; s)`.
pub trait PsiCurve: Sync {
    fn psi_at(&self, s: f64) -> Result<[f64; 3]>;
}

impl<F: Fn(f64) -> [f64; 3] + Sync> PsiCurve for F {
    fn psi_at(&self, s: f64) -> Result<[f64; 3]> {
        Ok(self(s))
    }
}

/// `Ψ_h(P; s*) = ∫ Ψ(P; s) K_h(s − s*) ds`, each component by adaptive Simpson.
pub fn smoothed_truth(curve: &dyn PsiCurve, kernel: &KernelSpec, s_star: f64, h: f64) -> Result<[f64; 3]> {
    check_bandwidth(h)?;
    curve.psi_at(s_star)?;
    let r: f64 = kernel.support_radius();
    let mut out = [0.0; 3];
    for (k, slot) in out.iter_mut().enumerate() {
        *slot = adaptive_simpson(
            |u: f64| curve.psi_at(s_star + h * u).map(|p| p[k]).unwrap_or(f64::NAN) * kernel.unit(u),
            -r,
            r,
            QUAD_TOL,
        );
        if !slot.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "Ψ(P; s) is unavailable near s = {s_star} for component {}",
                k + 1
            )));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasProbe {
    pub h: Vec<f64>,
    /// `‖Ψ_h(P) − Ψ(P)‖` (Euclidean over the three components).
    pub bias: Vec<f64>,
    /// OLS slope of `log bias` on `log h`; `None` when the bias vanishes.
    pub slope: Option<f64>,
}

pub fn bias_decay_probe(curve: &dyn PsiCurve, kernel: &KernelSpec, s_star: f64, h_grid: &[f64]) -> Result<BiasProbe> {
    let exact = curve.psi_at(s_star)?;
    let bias = h_grid
        .iter()
        .map(|&h| {
            let sm = smoothed_truth(curve, kernel, s_star, h)?;
            Ok(sm.iter().zip(&exact).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
        })
        .collect::<Result<Vec<f64>>>()?;
    let pts: Vec<(f64, f64)> = h_grid
        .iter()
        .zip(&bias)
        .filter(|(_, &b)| b > ZERO_BIAS)
        .map(|(&h, &b)| (h.ln(), b.ln()))
        .collect();
    let slope = (pts.len() >= 2 && pts.len() == h_grid.len()).then(|| {
        let m = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    });
    Ok(BiasProbe {
        h: h_grid.to_vec(),
        bias,
        slope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_curve_has_no_smoothing_bias() {
        let c = |_s: f64| [0.4, 0.1, 0.2];
        let p = bias_decay_probe(&c, &KernelSpec::GAUSSIAN, 0.3, &[0.4, 0.2, 0.1]).unwrap();
        assert!(p.bias.iter().all(|&b| b < 1e-10));
        assert_eq!(p.slope, None);
    }

    #[test]
    fn quadratic_curve_decays_at_second_order() {
        // Gaussian kernel: bias of s² smoothing is exactly h².
        let c = |s: f64| [s * s, 0.0, 0.0];
        let p = bias_decay_probe(&c, &KernelSpec::GAUSSIAN, 0.5, &[0.4, 0.2, 0.1, 0.05]).unwrap();
        for (h, b) in p.h.iter().zip(&p.bias) {
            assert!((b - h * h).abs() < 1e-9);
        }
        assert!((p.slope.unwrap() - 2.0).abs() < 1e-6);
    }

    #[test]
    fn fourth_order_kernel_annihilates_cubics() {
        let c = |s: f64| [s * s * s, s * s, 1.0];
        let p = bias_decay_probe(&c, &KernelSpec::GAUSSIAN4, 0.2, &[0.4, 0.2]).unwrap();
        assert!(p.bias.iter().all(|&b| b < 1e-9));
    }
}
