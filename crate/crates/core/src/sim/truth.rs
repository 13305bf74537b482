//! Quadrature ground truth for the Gaussian-logistic trial.

use crate::continuous::bias::{smoothed_truth, PsiCurve};
use crate::continuous::KernelSpec;
use crate::error::{Error, Result};
use crate::quadrature::{adaptive_simpson, normal_expectation, normal_pdf};
use crate::sim::dgp::{CrossoverRule, SimConfig};

const TOL: f64 = 1e-11;
/// Half-width, in standard deviations of S₁, of the range used for
/// integrals over the biomarker.
const S_RANGE: f64 = 12.0;

/// Conditional law `W | S₁ = s ~ N(m(s), v)`.
fn w_given_s(cfg: &SimConfig, s: f64) -> (f64, f64) {
    let c = &cfg.cov;
    let mean = cfg.mu[0] + c[0][1] / c[1][1] * (s - cfg.mu[1]);
    let var = c[0][0] - c[0][1] * c[0][1] / c[1][1];
    (mean, var.sqrt())
}

fn require_exact(cfg: &SimConfig) -> Result<()> {
    cfg.validate()?;
    match cfg.crossover_rule {
        CrossoverRule::Exact => Ok(()),
        CrossoverRule::Noisy(_) => Err(Error::UnsupportedMode(
            "closed-form truth is available only for exact crossover".into(),
        )),
    }
}

/// Unsmoothed `Ψ(P; s)`: the density of S₁ at `s`, and that density times
/// `E[P(Y₁=1|S₁=s,W)|S₁=s]` and `E[P(Y₀=0|S₁=s,W)|S₁=s]`.
pub fn true_psi(cfg: &SimConfig, s: f64) -> Result<[f64; 3]> {
    require_exact(cfg)?;
    Ok(psi_unchecked(cfg, s))
}

fn psi_unchecked(cfg: &SimConfig, s: f64) -> [f64; 3] {
    let dens = normal_pdf(s, cfg.mu[1], cfg.cov[1][1].sqrt());
    let (m, sd) = w_given_s(cfg, s);
    let r1 = normal_expectation(|w| cfg.risk(true, w, s), m, sd);
    let n0 = normal_expectation(|w| 1.0 - cfg.risk(false, w, s), m, sd);
    [dens, dens * r1, dens * n0]
}

struct Curve<'a>(&'a SimConfig);

impl PsiCurve for Curve<'_> {
    fn psi_at(&self, s: f64) -> Result<[f64; 3]> {
        Ok(psi_unchecked(self.0, s))
    }
}

/// The trial's unsmoothed parameter as a curve in `s`.
pub fn psi_curve(cfg: &SimConfig) -> Result<impl PsiCurve + '_> {
    require_exact(cfg)?;
    Ok(Curve(cfg))
}

/// `Ψ_h(P; s*) = ∫ Ψ(P; s) K_h(s − s*) ds`.
pub fn true_psi_smoothed(cfg: &SimConfig, s_star: f64, kernel: &KernelSpec, h: f64) -> Result<[f64; 3]> {
    let curve = psi_curve(cfg)?;
    smoothed_truth(&curve, kernel, s_star, h)
}

/// `Ψ_h` by the other order of integration: `E_W[q_{k,h}(W)]` with
/// `q_{k,h}(w) = ∫ K_h(s − s*) p(s | w) P(event_k | s, w) ds`.
pub fn true_psi_smoothed_by_covariate(cfg: &SimConfig, s_star: f64, kernel: &KernelSpec, h: f64) -> Result<[f64; 3]> {
    require_exact(cfg)?;
    crate::continuous::kernel::check_bandwidth(h)?;
    let c = &cfg.cov;
    let s_mean = |w: f64| cfg.mu[1] + c[0][1] / c[0][0] * (w - cfg.mu[0]);
    let s_sd = (c[1][1] - c[0][1] * c[0][1] / c[0][0]).sqrt();
    let r: f64 = kernel.support_radius();
    let mut out = [0.0; 3];
    for (k, slot) in out.iter_mut().enumerate() {
        let q = |w: f64| {
            adaptive_simpson(
                |u: f64| {
                    let s = s_star + h * u;
                    let event = match k {
                        0 => 1.0,
                        1 => cfg.risk(true, w, s),
                        _ => 1.0 - cfg.risk(false, w, s),
                    };
                    kernel.unit(u) * normal_pdf(s, s_mean(w), s_sd) * event
                },
                -r,
                r,
                TOL,
            )
        };
        *slot = normal_expectation(q, cfg.mu[0], c[0][0].sqrt());
    }
    Ok(out)
}

/// `Ψ` for the thresholded biomarker `1{S > threshold}` at level `level`.
pub fn true_psi_discretized(cfg: &SimConfig, threshold: f64, level: bool) -> Result<[f64; 3]> {
    require_exact(cfg)?;
    let sd = cfg.cov[1][1].sqrt();
    let (lo, hi) = if level {
        (threshold, cfg.mu[1] + S_RANGE * sd)
    } else {
        (cfg.mu[1] - S_RANGE * sd, threshold)
    };
    let mut out = [0.0; 3];
    for (k, slot) in out.iter_mut().enumerate() {
        *slot = adaptive_simpson(|s| psi_unchecked(cfg, s)[k], lo, hi, TOL);
    }
    Ok(out)
}

/// `log Ψ₂ − log(Ψ₁ − Ψ₃)`.
pub fn log_rr(psi: [f64; 3]) -> f64 {
    psi[1].ln() - (psi[0] - psi[2]).ln()
}

/// Marginal disease rate `P(Y_a = 1)`.
pub fn arm_risk(cfg: &SimConfig, a: bool) -> Result<f64> {
    require_exact(cfg)?;
    let sd = cfg.cov[1][1].sqrt();
    Ok(normal_expectation(
        |s| {
            let (m, v) = w_given_s(cfg, s);
            normal_expectation(|w| cfg.risk(a, w, s), m, v)
        },
        cfg.mu[1],
        sd,
    ))
}
