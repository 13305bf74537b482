//! Estimators for two-phase designs in which the biomarker is measured on a
//! sampled subset with known sampling probabilities `π`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::covariance;
use crate::model::{ensure_valid, pseudo_outcomes, BiomarkerKind, Component, Dataset, EstimatorMode, PsiEstimate, TargetSpec};
use crate::nuisance::{fit_nuisance, fit_predictor, mix_seed, Family, FoldPlan, NuisanceConfig, NuisanceFit, Predictor};
use crate::scalar::Real;
use crate::tmle::eif::eif_component;
use crate::tmle::target::{target, TargetInput};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilizedWeights<T> {
    /// `c(a)`, indexed by `a as usize`.
    pub c: [T; 2],
    /// `π̄ᵢ = c(Aᵢ) πᵢ`.
    pub pi_bar: Vec<T>,
    /// `Δᵢ / π̄ᵢ`.
    pub w_eff: Vec<T>,
}

/// `c(a) = Σ_{Aᵢ=a} Δᵢ/πᵢ ÷ #{Aᵢ=a}`, so effective weights average to one
/// within each arm.
pub fn stabilize_weights<T: Real>(d: &Dataset<T>) -> Result<StabilizedWeights<T>> {
    let mut sum = [T::zero(); 2];
    let mut count = [0usize; 2];
    let mut sampled = [false; 2];
    for (i, o) in d.iter().enumerate() {
        if !(o.pi > T::zero() && o.pi <= T::one()) {
            return Err(Error::Data {
                row: Some(i),
                column: "pi".into(),
                message: format!("{} is outside (0, 1]", o.pi),
            });
        }
        let a = o.a as usize;
        count[a] += 1;
        if o.delta {
            sum[a] += o.pi.recip();
            sampled[a] = true;
        }
    }
    for a in 0..2 {
        if !sampled[a] {
            return Err(Error::NoPhaseTwo(a as u8));
        }
    }
    let c = [0, 1].map(|a| sum[a] / T::of_usize(count[a]));
    let pi_bar: Vec<T> = d.iter().map(|o| c[o.a as usize] * o.pi).collect();
    let w_eff = d
        .iter()
        .zip(&pi_bar)
        .map(|(o, &p)| if o.delta { p.recip() } else { T::zero() })
        .collect();
    Ok(StabilizedWeights { c, pi_bar, w_eff })
}

fn require_discrete<T: Real>(d: &Dataset<T>) -> Result<()> {
    ensure_valid(d)?;
    if d.biomarker_kind != BiomarkerKind::Discrete {
        return Err(Error::UnsupportedMode(
            "two-phase estimators support discrete biomarkers only".into(),
        ));
    }
    Ok(())
}

/// Initial fits weighted by `Δ/π̄`; the treatment mechanism uses every
/// subject without weights.
pub fn fit_weighted_nuisance<T: Real>(
    d: &Dataset<T>,
    spec: &TargetSpec<T>,
    cfg: &NuisanceConfig,
) -> Result<(StabilizedWeights<T>, NuisanceFit<T>)> {
    require_discrete(d)?;
    let sw = stabilize_weights(d)?;
    let all: Vec<usize> = (0..d.len()).collect();
    let fit = fit_nuisance(d, spec, &sw.w_eff, &all, cfg)?;
    Ok((sw, fit))
}

/// Inverse-probability-weighted TMLE.
pub fn ipw_tmle<T: Real>(d: &Dataset<T>, spec: &TargetSpec<T>, cfg: &NuisanceConfig) -> Result<PsiEstimate<T>> {
    let (sw, fit) = fit_weighted_nuisance(d, spec, cfg)?;
    ipw_tmle_from_fit(d, spec, &sw, &fit)
}

pub fn ipw_tmle_from_fit<T: Real>(
    d: &Dataset<T>,
    spec: &TargetSpec<T>,
    sw: &StabilizedWeights<T>,
    fit: &NuisanceFit<T>,
) -> Result<PsiEstimate<T>> {
    require_discrete(d)?;
    target(TargetInput {
        d,
        spec,
        plan: &FoldPlan::single(d.len()),
        fits: std::slice::from_ref(fit),
        weights: &sw.w_eff,
        mode: EstimatorMode::IpwTmle,
        bandwidth: None,
    })
}

/// `Ê[f_k(O) | Δ=1, a, w, y]`, fitted separately in each `(a, y)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Phase2Projection<T> {
    /// Indexed by `[k][y as usize]`; only cells in the arm of `k` are used.
    cells: [[Option<Predictor<T>>; 2]; 3],
}

impl<T: Real> Phase2Projection<T> {
    pub fn predict(&self, k: Component, a: bool, w: &[T], y: bool) -> T {
        if a != k.arm() {
            return T::zero();
        }
        match &self.cells[k.index()][y as usize] {
            Some(p) => p.predict(w),
            None => T::zero(),
        }
    }
}

fn structurally_zero(k: Component, y: bool) -> bool {
    matches!((k, y), (Component::MarkerCase, false) | (Component::CrossoverNonCase, true))
}

pub fn phase2_projection<T: Real>(d: &Dataset<T>, spec: &TargetSpec<T>, cfg: &NuisanceConfig) -> Result<Phase2Projection<T>> {
    let mut cells: [[Option<Predictor<T>>; 2]; 3] = Default::default();
    for k in Component::ALL {
        let f = pseudo_outcomes(d, k, spec)?;
        for y in [false, true] {
            if structurally_zero(k, y) {
                continue;
            }
            let members: Vec<usize> = (0..d.len())
                .filter(|&i| d.observations[i].a == k.arm() && d.observations[i].y == y)
                .collect();
            if members.is_empty() {
                continue;
            }
            let rows: Vec<usize> = members.iter().copied().filter(|&i| d.observations[i].delta).collect();
            if rows.is_empty() {
                return Err(Error::EmptyStratum(format!(
                    "no phase-two subjects in the cell A={}, Y={}",
                    k.arm() as u8,
                    y as u8
                )));
            }
            let x: Vec<&[T]> = rows.iter().map(|&i| d.observations[i].w.as_slice()).collect();
            let target: Vec<T> = rows.iter().map(|&i| f[i]).collect();
            let w = vec![T::one(); rows.len()];
            let seed = mix_seed(cfg.seed, 0x9200 + k.index() as u64, y as u64);
            cells[k.index()][y as usize] = Some(fit_predictor(
                cfg,
                &cfg.library,
                Family::Binomial,
                (T::zero(), T::one()),
                &x,
                &target,
                &w,
                seed,
            )?);
        }
    }
    Ok(Phase2Projection { cells })
}

/// One-step estimator `ψ̂ = Ψ(P̂) + (1/n) Σ D̃(Õᵢ)`, where `D̃` replaces
/// `f_k` by `δπ⁻¹ f_k + (1 − δπ⁻¹) Ê[f_k | Δ=1, a, w, y]`.
pub fn one_step_estimate<T: Real>(d: &Dataset<T>, spec: &TargetSpec<T>, cfg: &NuisanceConfig) -> Result<PsiEstimate<T>> {
    let (_, fit) = fit_weighted_nuisance(d, spec, cfg)?;
    let projection = phase2_projection(d, spec, cfg)?;
    one_step_from_fits(d, spec, &fit, &projection)
}

pub fn one_step_from_fits<T: Real>(
    d: &Dataset<T>,
    spec: &TargetSpec<T>,
    fit: &NuisanceFit<T>,
    projection: &Phase2Projection<T>,
) -> Result<PsiEstimate<T>> {
    require_discrete(d)?;
    let n = d.len();
    let nt = T::of_usize(n);
    let mut psi = [T::zero(); 3];
    let mut rows = vec![[T::zero(); 3]; n];
    for k in Component::ALL {
        let ki = k.index();
        let f = pseudo_outcomes(d, k, spec)?;
        let e: Vec<T> = d.iter().map(|o| fit.conditional_mean(k, &o.w)).collect();
        let plug_in = e.iter().copied().sum::<T>() / nt;
        for (i, o) in d.iter().enumerate() {
            let g = fit.treatment_prob(k.arm(), &o.w);
            if !(g > T::zero()) {
                return Err(Error::Positivity(format!("P(A={}|W) = {g} at row {i}", k.arm() as u8)));
            }
            let ratio = if o.delta { o.pi.recip() } else { T::zero() };
            let m = projection.predict(k, o.a, &o.w, o.y);
            let f_tilde = ratio * f[i] + (T::one() - ratio) * m;
            rows[i][ki] = eif_component(k, o.a, g, f_tilde, e[i], plug_in);
        }
        let correction = rows.iter().map(|r| r[ki]).sum::<T>() / nt;
        psi[ki] = plug_in + correction;
        for r in rows.iter_mut() {
            r[ki] -= correction;
        }
        if !(psi[ki] >= T::zero() && psi[ki] <= T::one()) {
            log::warn!("one-step estimate of component {} is {} (outside [0, 1])", ki + 1, psi[ki]);
        }
    }
    let sigma_m = covariance(&rows);
    let mut sigma = [[T::zero(); 3]; 3];
    for (a, row) in sigma.iter_mut().enumerate() {
        for (b, v) in row.iter_mut().enumerate() {
            *v = sigma_m[(a, b)];
        }
    }
    Ok(PsiEstimate {
        psi,
        influence_rows: rows,
        sigma,
        epsilons: [T::zero(); 3],
        mode: EstimatorMode::OneStep,
        bandwidth_used: None,
        scores: [T::zero(); 3],
        compatible: None,
    })
}

/// Replace `π` by empirical phase-two rates within cells of a discrete
/// coarsening `v` crossed with `(A, Y)`.
pub fn npmle_sampling_probabilities<T: Real>(d: &Dataset<T>, v: &[u32]) -> Result<Vec<T>> {
    use std::collections::HashMap;
    if v.len() != d.len() {
        return Err(Error::InvalidArgument("coarsening must have one entry per subject".into()));
    }
    let mut cells: HashMap<(u32, bool, bool), (usize, usize)> = HashMap::new();
    for (o, &vi) in d.iter().zip(v) {
        let e = cells.entry((vi, o.a, o.y)).or_default();
        e.0 += 1;
        e.1 += o.delta as usize;
    }
    d.iter()
        .zip(v)
        .map(|(o, &vi)| {
            let (total, sampled) = cells[&(vi, o.a, o.y)];
            if sampled == 0 {
                Err(Error::EmptyStratum(format!(
                    "no phase-two subjects in sampling cell (V={vi}, A={}, Y={})",
                    o.a as u8, o.y as u8
                )))
            } else {
                Ok(T::of_usize(sampled) / T::of_usize(total))
            }
        })
        .collect()
}

/// A copy of `d` with `π` replaced by [`npmle_sampling_probabilities`].
pub fn with_estimated_pi<T: Real>(d: &Dataset<T>, v: &[u32]) -> Result<Dataset<T>> {
    let pi = npmle_sampling_probabilities(d, v)?;
    let mut out = d.clone();
    for (o, p) in out.observations.iter_mut().zip(pi) {
        o.pi = p;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Observation;
    use crate::nuisance::{Learner, TreatmentModel};
    use crate::testutil::saturated;
    use crate::tmle::{fit_and_tmle, tmle_estimate};

    fn arm_dataset(pis: &[(bool, f64, bool)]) -> Dataset<f64> {
        let obs = pis
            .iter()
            .map(|&(a, pi, delta)| {
                Observation::new(vec![0.0], a, delta.then_some(0.0), false, delta.then_some(0.0)).with_phase_two(delta, pi)
            })
            .collect();
        Dataset::new(obs, BiomarkerKind::Discrete)
    }

    #[test]
    fn half_sampling_everyone_observed() {
        let d = arm_dataset(&[(true, 0.5, true), (true, 0.5, true), (false, 0.5, true), (false, 0.5, true)]);
        let sw = stabilize_weights(&d).unwrap();
        assert_eq!(sw.c, [2.0, 2.0]);
        assert!(sw.pi_bar.iter().all(|&p| p == 1.0));
        assert!(sw.w_eff.iter().all(|&w| w == 1.0));
    }

    #[test]
    fn full_sampling_is_identity() {
        let d = saturated();
        let sw = stabilize_weights(&d).unwrap();
        assert_eq!(sw.c, [1.0, 1.0]);
        assert!(sw.w_eff.iter().all(|&w| w == 1.0));
    }

    #[test]
    fn hand_enumerated_arm() {
        let d = arm_dataset(&[(true, 0.5, true), (true, 1.0, true), (false, 1.0, true)]);
        let sw = stabilize_weights(&d).unwrap();
        assert!((sw.c[1] - 1.5).abs() < 1e-15);
        assert!((sw.w_eff[0] - 4.0 / 3.0).abs() < 1e-15);
        assert!((sw.w_eff[1] - 2.0 / 3.0).abs() < 1e-15);
        assert!(((sw.w_eff[0] + sw.w_eff[1]) / 2.0 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn arm_without_phase_two_is_an_error() {
        let d = arm_dataset(&[(true, 0.5, false), (false, 1.0, true)]);
        assert!(matches!(stabilize_weights(&d), Err(Error::NoPhaseTwo(1))));
    }

    #[test]
    fn full_sampling_ipw_reproduces_tmle_bitwise() {
        let d = saturated();
        let spec = TargetSpec::discrete(1.0);
        let cfg = NuisanceConfig::default();
        let (fit, plain) = fit_and_tmle(&d, &spec, &cfg).unwrap();
        let ipw = ipw_tmle(&d, &spec, &cfg).unwrap();
        assert_eq!(ipw.psi, plain.psi);
        assert_eq!(ipw.influence_rows, plain.influence_rows);
        assert_eq!(ipw.sigma, plain.sigma);
        assert_eq!(ipw.epsilons, plain.epsilons);
        assert_eq!(tmle_estimate(&d, &spec, &fit).unwrap().psi, ipw.psi);
    }

    fn subsampled() -> Dataset<f64> {
        // Every third treated subject and every other untreated non-case
        // leaves phase two.
        let mut d = saturated();
        for (i, o) in d.observations.iter_mut().enumerate() {
            if o.is_untreated_case() {
                continue;
            }
            let keep = if o.a { i % 3 != 0 } else { i % 2 == 0 };
            let pi = if o.a { 2.0 / 3.0 } else { 0.5 };
            o.delta = keep;
            o.pi = pi;
            if !keep {
                o.s = None;
                o.s_c = None;
            }
        }
        d
    }

    #[test]
    fn weighted_score_vanishes_after_targeting() {
        let d = subsampled();
        let spec = TargetSpec::discrete(1.0);
        let est = ipw_tmle(&d, &spec, &NuisanceConfig::default()).unwrap();
        assert!(est.scores.iter().all(|s| s.abs() < 1e-8));
    }

    #[test]
    fn rescaled_weights_leave_ipw_estimate_unchanged() {
        let d = subsampled();
        let spec = TargetSpec::discrete(1.0);
        let cfg = NuisanceConfig {
            library: vec![Learner::MainTerms],
            ..Default::default()
        };
        let (sw, fit) = fit_weighted_nuisance(&d, &spec, &cfg).unwrap();
        let base = ipw_tmle_from_fit(&d, &spec, &sw, &fit).unwrap();
        let mut scaled = sw.clone();
        scaled.w_eff.iter_mut().for_each(|w| *w *= 3.0);
        let other = ipw_tmle_from_fit(&d, &spec, &scaled, &fit).unwrap();
        for k in 0..3 {
            assert!((base.psi[k] - other.psi[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn full_sampling_one_step_is_plug_in_plus_mean_eif() {
        let d = saturated();
        let spec = TargetSpec::discrete(1.0);
        let cfg = NuisanceConfig {
            library: vec![Learner::Mean],
            treatment: TreatmentModel::Known(0.5),
            ..Default::default()
        };
        let (fit, _) = fit_and_tmle(&d, &spec, &cfg).unwrap();
        let proj = phase2_projection(&d, &spec, &cfg).unwrap();
        let est = one_step_from_fits(&d, &spec, &fit, &proj).unwrap();
        for k in Component::ALL {
            let f: Vec<f64> = d.iter().map(|o| crate::model::pseudo_outcome(o, k, &spec, d.biomarker_kind).unwrap()).collect();
            let n = d.len() as f64;
            let plug: f64 = d.iter().map(|o| fit.conditional_mean(k, &o.w)).sum::<f64>() / n;
            let mean_d: f64 = d
                .iter()
                .zip(&f)
                .map(|(o, &fi)| eif_component(k, o.a, 0.5, fi, fit.conditional_mean(k, &o.w), plug))
                .sum::<f64>()
                / n;
            assert!((est.psi[k.index()] - (plug + mean_d)).abs() < 1e-14);
        }
    }

    #[test]
    fn perfect_projection_recovers_pseudo_outcome() {
        // S equals W among the treated, so W determines f₁.
        let mut obs = Vec::new();
        for i in 0..40 {
            let w = (i % 2) as f64;
            let y = i % 5 == 0;
            let delta = i % 4 < 2 || i % 8 == 3;
            let o = Observation::new(vec![w], true, Some(w), y, Some(0.0));
            obs.push(o);
            obs[i].delta = delta;
            obs[i].pi = 0.6;
        }
        for i in 0..20 {
            obs.push(Observation::new(vec![(i % 2) as f64], false, Some(0.0), false, Some(1.0)));
        }
        let full: Vec<f64> = obs.iter().map(|o| if o.a && o.s == Some(1.0) { 1.0 } else { 0.0 }).collect();
        for o in obs.iter_mut().filter(|o| !o.delta) {
            o.s = None;
            o.s_c = None;
        }
        let d = Dataset::new(obs, BiomarkerKind::Discrete);
        let spec = TargetSpec::discrete(1.0);
        let proj = phase2_projection(&d, &spec, &NuisanceConfig::default()).unwrap();
        let f = pseudo_outcomes(&d, Component::Marker, &spec).unwrap();
        for (i, o) in d.iter().enumerate().filter(|(_, o)| o.a) {
            let ratio = if o.delta { 1.0 / o.pi } else { 0.0 };
            let tilde = ratio * f[i] + (1.0 - ratio) * proj.predict(Component::Marker, o.a, &o.w, o.y);
            assert!((tilde - full[i]).abs() < 1e-9, "row {i}");
        }
    }

    #[test]
    fn cell_without_phase_two_members_is_an_error() {
        let mut d = subsampled();
        for o in d.observations.iter_mut().filter(|o| o.a && o.y) {
            o.delta = false;
            o.s = None;
            o.s_c = None;
        }
        assert!(matches!(
            phase2_projection(&d, &TargetSpec::discrete(1.0), &NuisanceConfig::default()),
            Err(Error::EmptyStratum(_))
        ));
    }

    #[test]
    fn npmle_rates_are_cell_frequencies() {
        let d = subsampled();
        let v = vec![0u32; d.len()];
        let pi = npmle_sampling_probabilities(&d, &v).unwrap();
        for (o, p) in d.iter().zip(&pi) {
            let cell: Vec<_> = d.iter().filter(|q| q.a == o.a && q.y == o.y).collect();
            let rate = cell.iter().filter(|q| q.delta).count() as f64 / cell.len() as f64;
            assert!((p - rate).abs() < 1e-15);
        }
    }
}
