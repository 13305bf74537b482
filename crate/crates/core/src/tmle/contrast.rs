use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::model::{ContrastKind, ContrastReport, Diagnostics, PsiEstimate};
use crate::scalar::Real;
use crate::tmle::diagnostics::eif_diagnostics;

const Z_975: f64 = 1.959_963_984_540_054;

fn ratio_denominator<T: Real>(x: [T; 3]) -> Result<T> {
    let den = x[0] - x[2];
    if den > T::zero() {
        Ok(den)
    } else {
        Err(Error::IdentifiabilityFailure { denominator: den.as_f64() })
    }
}

fn log_rr<T: Real>(x: [T; 3]) -> Result<T> {
    let den = ratio_denominator(x)?;
    if !(x[1] > T::zero()) {
        return Err(Error::NonPositive {
            what: "case component ψ₂".into(),
            value: x[1].as_f64(),
        });
    }
    Ok(x[1].ln() - den.ln())
}

/// `Γ(x)` for the requested contrast.
///
/// The risk difference is `(x₂ − x₃)/x₁`.
pub fn gamma<T: Real>(kind: ContrastKind, x: [T; 3]) -> Result<T> {
    match kind {
        ContrastKind::LogRelativeRisk => log_rr(x),
        ContrastKind::VaccineEfficacy => Ok(T::one() - log_rr(x)?.exp()),
        ContrastKind::RiskDifference => {
            if !(x[0] > T::zero()) {
                return Err(Error::NonPositive {
                    what: "marker component ψ₁".into(),
                    value: x[0].as_f64(),
                });
            }
            Ok((x[1] - x[2]) / x[0])
        }
        ContrastKind::RawPsi(k) => x
            .get(k)
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("raw component index {k} out of range"))),
    }
}

/// Analytic gradient `Γ̇(x)`.
pub fn gamma_gradient<T: Real>(kind: ContrastKind, x: [T; 3]) -> Result<[T; 3]> {
    match kind {
        ContrastKind::LogRelativeRisk => {
            let den = ratio_denominator(x)?;
            log_rr(x)?;
            Ok([-den.recip(), x[1].recip(), den.recip()])
        }
        ContrastKind::VaccineEfficacy => {
            let rr = log_rr(x)?.exp();
            let g = gamma_gradient(ContrastKind::LogRelativeRisk, x)?;
            Ok(g.map(|v| -rr * v))
        }
        ContrastKind::RiskDifference => {
            gamma(kind, x)?;
            let inv = x[0].recip();
            Ok([(x[2] - x[1]) * inv * inv, inv, -inv])
        }
        ContrastKind::RawPsi(k) => {
            gamma(kind, x)?;
            let mut e = [T::zero(); 3];
            e[k] = T::one();
            Ok(e)
        }
    }
}

fn report<T: Real>(est: &PsiEstimate<T>, kind: ContrastKind, se_of: impl Fn(&[T; 3]) -> T) -> Result<ContrastReport<T>> {
    let diag = eif_diagnostics(est);
    let diagnostics = Diagnostics {
        eif_mean_max_abs: diag.eif_mean_max_abs,
        psi4_hat: None,
        min_eigenvalue_sigma: diag.min_eigenvalue_sigma,
        denominator: est.psi[0] - est.psi[2],
    };
    let psi = est.psi;
    let z = T::of(Z_975);
    if kind == ContrastKind::VaccineEfficacy {
        let g_log = gamma_gradient(ContrastKind::LogRelativeRisk, psi)?;
        let log_est = log_rr(psi)?;
        let se_log = se_of(&g_log);
        let rr = log_est.exp();
        return Ok(ContrastReport {
            kind,
            estimate: T::one() - rr,
            std_error: rr * se_log,
            ci_lower: T::one() - (log_est + z * se_log).exp(),
            ci_upper: T::one() - (log_est - z * se_log).exp(),
            gradient: g_log.map(|v| -rr * v),
            diagnostics,
        });
    }
    let estimate = gamma(kind, psi)?;
    let gradient = gamma_gradient(kind, psi)?;
    let se = se_of(&gradient);
    Ok(ContrastReport {
        kind,
        estimate,
        std_error: se,
        ci_lower: estimate - z * se,
        ci_upper: estimate + z * se,
        gradient,
        diagnostics,
    })
}

/// Delta-method contrast with `SE = sqrt(Γ̇ᵀ Σ̂ Γ̇ / n)` and a 95% Wald interval.
/// The vaccine-efficacy interval maps the log relative-risk endpoints.
pub fn contrast<T: Real>(est: &PsiEstimate<T>, kind: ContrastKind) -> Result<ContrastReport<T>> {
    let n = T::of_usize(est.n());
    let sigma = est.sigma_matrix();
    report(est, kind, |g| (sigma.quad_form(g).max(T::zero()) / n).sqrt())
}

/// Contrast of smoothed parameters with `SE = n^{-1/2} sd(⟨D̂ₕ,ᵢ, Γ̇⟩)`,
/// the standard deviation computed from the projected rows directly.
pub fn smoothed_contrast<T: Real>(est: &PsiEstimate<T>, kind: ContrastKind) -> Result<ContrastReport<T>> {
    let n = T::of_usize(est.n());
    report(est, kind, |g| {
        let proj: Vec<T> = est.influence_rows.iter().map(|r| dot(r, g)).collect();
        let m = proj.iter().copied().sum::<T>() / n;
        let var = proj.iter().map(|&p| (p - m) * (p - m)).sum::<T>() / n;
        (var / n).sqrt()
    })
}

/// SE of a smoothed contrast written with the bandwidth factors of the
/// `(n h)^{-1/2}` convention: rows rescaled by `√h` and the result by `h^{-1/2}`.
pub fn smoothed_se_bandwidth_scaled<T: Real>(est: &PsiEstimate<T>, gradient: &[T; 3], h: T) -> T {
    let n = T::of_usize(est.n());
    let root_h = h.sqrt();
    let proj: Vec<T> = est.influence_rows.iter().map(|r| root_h * dot(r, gradient)).collect();
    let m = proj.iter().copied().sum::<T>() / n;
    let var_h = proj.iter().map(|&p| (p - m) * (p - m)).sum::<T>() / n;
    (var_h / (n * h)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::EstimatorMode;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const KINDS: [ContrastKind; 6] = [
        ContrastKind::LogRelativeRisk,
        ContrastKind::VaccineEfficacy,
        ContrastKind::RiskDifference,
        ContrastKind::RawPsi(0),
        ContrastKind::RawPsi(1),
        ContrastKind::RawPsi(2),
    ];

    fn estimate(rows: Vec<[f64; 3]>, psi: [f64; 3]) -> PsiEstimate<f64> {
        let sigma_m = crate::linalg::covariance(&rows);
        let mut sigma = [[0.0; 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                sigma[a][b] = sigma_m[(a, b)];
            }
        }
        PsiEstimate {
            psi,
            influence_rows: rows,
            sigma,
            epsilons: [0.0; 3],
            mode: EstimatorMode::Tmle,
            bandwidth_used: None,
            scores: [0.0; 3],
            compatible: None,
        }
    }

    #[test]
    fn log_rr_at_balanced_point() {
        let x = [1.0, 0.5, 0.5];
        assert_eq!(gamma(ContrastKind::LogRelativeRisk, x).unwrap(), 0.0);
        assert_eq!(gamma_gradient(ContrastKind::LogRelativeRisk, x).unwrap(), [-2.0, 2.0, 2.0]);
        assert_eq!(gamma(ContrastKind::RiskDifference, x).unwrap(), 0.0);
        assert_eq!(gamma(ContrastKind::LogRelativeRisk, [2.0, 1.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        for _ in 0..20 {
            let x3: f64 = rng.random_range(0.05..0.4);
            let x = [x3 + rng.random_range(0.1..0.5), rng.random_range(0.05..0.5), x3];
            for kind in KINDS {
                let g = gamma_gradient(kind, x).unwrap();
                for j in 0..3 {
                    let h = 1e-6 * x[j].abs().max(1e-3);
                    let (mut up, mut dn) = (x, x);
                    up[j] += h;
                    dn[j] -= h;
                    let fd = (gamma(kind, up).unwrap() - gamma(kind, dn).unwrap()) / (2.0 * h);
                    let scale = fd.abs().max(g[j].abs()).max(1e-8);
                    assert!((fd - g[j]).abs() / scale < 1e-6 || (fd - g[j]).abs() < 1e-9, "{kind:?} {j}");
                }
            }
        }
    }

    #[test]
    fn nonpositive_denominator_is_flagged() {
        for kind in [ContrastKind::LogRelativeRisk, ContrastKind::VaccineEfficacy] {
            assert!(matches!(
                gamma(kind, [0.3, 0.1, 0.3]),
                Err(Error::IdentifiabilityFailure { .. })
            ));
        }
        assert!(matches!(
            gamma(ContrastKind::LogRelativeRisk, [0.5, 0.0, 0.1]),
            Err(Error::NonPositive { .. })
        ));
    }

    #[test]
    fn ve_interval_is_mapped_log_rr_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rows: Vec<[f64; 3]> = (0..200)
            .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        let est = estimate(rows, [0.5, 0.1, 0.2]);
        let lr = contrast(&est, ContrastKind::LogRelativeRisk).unwrap();
        let ve = contrast(&est, ContrastKind::VaccineEfficacy).unwrap();
        assert!((ve.estimate - (1.0 - lr.estimate.exp())).abs() < 1e-14);
        assert!((ve.ci_lower - (1.0 - lr.ci_upper.exp())).abs() < 1e-14);
        assert!((ve.ci_upper - (1.0 - lr.ci_lower.exp())).abs() < 1e-14);
        assert!(ve.ci_lower < ve.estimate && ve.estimate < ve.ci_upper);
    }

    #[test]
    fn smoothed_se_conventions_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<[f64; 3]> = (0..500)
            .map(|_| [rng.random_range(-3.0..3.0), rng.random_range(-1.0..2.0), rng.random_range(-2.0..1.0)])
            .collect();
        let est = estimate(rows, [2.0, 0.7, 0.9]);
        for kind in [ContrastKind::LogRelativeRisk, ContrastKind::RiskDifference] {
            let a = contrast(&est, kind).unwrap();
            let b = smoothed_contrast(&est, kind).unwrap();
            assert!((a.std_error - b.std_error).abs() < 1e-12 * a.std_error);
            let c = smoothed_se_bandwidth_scaled(&est, &b.gradient, 0.2);
            assert!((c - b.std_error).abs() < 1e-12 * b.std_error);
        }
    }
}
