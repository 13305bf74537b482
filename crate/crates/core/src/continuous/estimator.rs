use crate::continuous::bandwidth::select_bandwidth;
use crate::error::{Error, Result};
use crate::model::{ensure_valid, Bandwidth, BiomarkerKind, Dataset, EstimatorMode, PsiEstimate, TargetSpec};
use crate::nuisance::{fit_fold_nuisance, FoldFits, FoldPlan, NuisanceConfig};
use crate::scalar::Real;
use crate::tmle::target::{target, TargetInput};

/// `spec` with its bandwidth rule replaced by the selected value.
pub fn resolve_bandwidth<T: Real>(d: &Dataset<T>, spec: &TargetSpec<T>) -> Result<TargetSpec<T>> {
    let kernel = spec
        .kernel
        .ok_or_else(|| Error::InvalidArgument("continuous mode requires a kernel".into()))?;
    let rule = spec.bandwidth.unwrap_or(Bandwidth::Lscv);
    let h = select_bandwidth(d, rule, &kernel)?;
    let mut out = spec.clone();
    out.bandwidth = Some(Bandwidth::Fixed(h));
    Ok(out)
}

fn require_continuous_single_phase<T: Real>(d: &Dataset<T>) -> Result<()> {
    ensure_valid(d)?;
    if d.biomarker_kind != BiomarkerKind::Continuous {
        return Err(Error::UnsupportedMode("kernel estimators need a continuous biomarker".into()));
    }
    if !d.is_single_phase() {
        return Err(Error::UnsupportedMode(
            "continuous-biomarker estimation is implemented for single-phase data only".into(),
        ));
    }
    Ok(())
}

/// Cross-validated TMLE of the kernel-smoothed parameter `Ψ_h`, with the
/// log-linear fluctuation `q* = q·e^ε` solved in closed form.
pub fn cv_tmle_continuous<T: Real>(
    d: &Dataset<T>,
    spec: &TargetSpec<T>,
    plan: &FoldPlan,
    cfg: &NuisanceConfig,
) -> Result<PsiEstimate<T>> {
    require_continuous_single_phase(d)?;
    let spec = resolve_bandwidth(d, spec)?;
    let ones = vec![T::one(); d.len()];
    let ff = fit_fold_nuisance(d, &spec, &ones, plan, cfg)?;
    continuous_from_fits(d, &spec, &ff)
}

/// Targeting step from precomputed fold fits; `spec` must carry a fixed bandwidth.
pub fn continuous_from_fits<T: Real>(d: &Dataset<T>, spec: &TargetSpec<T>, ff: &FoldFits<T>) -> Result<PsiEstimate<T>> {
    require_continuous_single_phase(d)?;
    let (_, h) = spec.smoothing()?;
    let ones = vec![T::one(); d.len()];
    target(TargetInput {
        d,
        spec,
        plan: &ff.plan,
        fits: &ff.fits,
        weights: &ones,
        mode: EstimatorMode::ContinuousCvTmle,
        bandwidth: Some(h),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::continuous::KernelSpec;
    use crate::model::{pseudo_outcome, Component, Observation};
    use crate::nuisance::{FittedLearner, Learner, NuisanceFit, Predictor, RegressionKind, TreatmentModel};
    use crate::tmle::eif_diagnostics;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample(n: usize, seed: u64) -> Dataset<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let obs = (0..n)
            .map(|_| {
                let w: f64 = rng.random_range(-1.0..1.0);
                let a = rng.random::<bool>();
                let s = 0.4 + 0.3 * w + rng.random_range(-0.5..0.5);
                let y = rng.random::<f64>() < 0.2 - 0.1 * s.clamp(0.0, 1.0);
                let sc = if a || y { 0.0 } else { s };
                Observation::new(vec![w], a, Some(s), y, Some(sc))
            })
            .collect();
        Dataset::new(obs, BiomarkerKind::Continuous)
    }

    #[test]
    fn targeted_scores_vanish() {
        let d = sample(600, 1);
        let spec = TargetSpec::continuous(0.4, KernelSpec::GAUSSIAN, 0.2);
        let plan = FoldPlan::stratified(&d, 5, 2).unwrap();
        let est = cv_tmle_continuous(&d, &spec, &plan, &NuisanceConfig::default()).unwrap();
        assert!(est.scores.iter().all(|s| s.abs() < 1e-12));
        assert_eq!(est.bandwidth_used, Some(0.2));
        assert!(est.psi.iter().all(|&p| p > 0.0));
    }

    #[test]
    fn arm_mean_fits_with_known_randomization_need_no_fluctuation() {
        let d = sample(400, 3);
        let spec = TargetSpec::continuous(0.4, KernelSpec::GAUSSIAN, 0.2);
        let plan = FoldPlan::random(d.len(), 4, 9).unwrap();
        let mut fits = Vec::new();
        for _ in 0..4 {
            let mut regs = Vec::new();
            for k in Component::ALL {
                // Whole-sample arm mean; identical in every fold.
                let vals: Vec<f64> = d
                    .iter()
                    .filter(|o| o.a == k.arm())
                    .map(|o| pseudo_outcome(o, k, &spec, d.biomarker_kind).unwrap())
                    .collect();
                let m = vals.iter().sum::<f64>() / vals.len() as f64;
                regs.push(Predictor::constant(m, 1e-4, f64::INFINITY));
            }
            fits.push(NuisanceFit {
                treatment: Predictor {
                    learner: Learner::Mean,
                    fitted: FittedLearner::Constant(0.5),
                    lower: 0.01,
                    upper: 0.99,
                },
                regressions: regs.try_into().unwrap(),
                kind: RegressionKind::Kernel,
            });
        }
        let est = continuous_from_fits(&d, &spec, &FoldFits { plan, fits }).unwrap();
        assert!(est.epsilons.iter().all(|e| e.abs() < 1e-12));
        assert!(eif_diagnostics(&est).eif_mean_max_abs < 1e-10);
    }

    #[test]
    fn discrete_data_is_rejected() {
        let mut d = sample(50, 2);
        d.biomarker_kind = BiomarkerKind::Discrete;
        let spec = TargetSpec::continuous(0.4, KernelSpec::GAUSSIAN, 0.2);
        assert!(matches!(
            cv_tmle_continuous(&d, &spec, &FoldPlan::single(50), &NuisanceConfig::default()),
            Err(Error::UnsupportedMode(_)) | Err(Error::Validation(_))
        ));
    }

    #[test]
    fn two_phase_data_is_rejected() {
        let mut d = sample(50, 2);
        d.observations[0].pi = 0.5;
        let spec = TargetSpec::continuous(0.4, KernelSpec::GAUSSIAN, 0.2);
        assert!(matches!(
            cv_tmle_continuous(&d, &spec, &FoldPlan::single(50), &NuisanceConfig::default()),
            Err(Error::UnsupportedMode(_))
        ));
    }

    #[test]
    fn uniform_kernel_on_coarse_grid_rescales_discrete_estimate() {
        // S on {0, 1}; a uniform window of width 0.5 around 1 only sees the atom.
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut obs = Vec::new();
        for _ in 0..400 {
            let w = (rng.random::<f64>() < 0.5) as u8 as f64;
            let a = rng.random::<bool>();
            let s = (rng.random::<f64>() < 0.3 + 0.3 * w) as u8 as f64;
            let y = rng.random::<f64>() < 0.3;
            let sc = if a || y { 0.0 } else { s };
            obs.push(Observation::new(vec![w], a, Some(s), y, Some(sc)));
        }
        let cfg = NuisanceConfig {
            library: vec![Learner::MainTerms],
            treatment: TreatmentModel::Known(0.5),
            ..Default::default()
        };
        let disc = Dataset::new(obs.clone(), BiomarkerKind::Discrete);
        let (_, de) = crate::tmle::fit_and_tmle(&disc, &TargetSpec::discrete(1.0), &cfg).unwrap();
        let cont = Dataset::new(obs, BiomarkerKind::Continuous);
        let h = 0.5;
        let ce = cv_tmle_continuous(
            &cont,
            &TargetSpec::continuous(1.0, KernelSpec::UNIFORM, h),
            &FoldPlan::single(400),
            &cfg,
        )
        .unwrap();
        // Saturated fits: the factorized case regression equals the direct one.
        for k in 0..3 {
            assert!((ce.psi[k] * h - de.psi[k]).abs() < 1e-8, "component {k}");
        }
    }
}
