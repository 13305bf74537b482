use crate::error::{Error, Result};
use crate::model::{ensure_valid, BiomarkerKind, Dataset, EstimatorMode, PsiEstimate, TargetSpec};
use crate::nuisance::{fit_fold_nuisance, fit_nuisance, FoldFits, FoldPlan, NuisanceConfig, NuisanceFit};
use crate::scalar::Real;
use crate::tmle::target::{target, TargetInput};

fn require_discrete_single_phase<T: Real>(d: &Dataset<T>) -> Result<()> {
    ensure_valid(d)?;
    if d.biomarker_kind != BiomarkerKind::Discrete {
        return Err(Error::UnsupportedMode("discrete estimators need a discrete biomarker".into()));
    }
    if !d.is_single_phase() {
        return Err(Error::UnsupportedMode(
            "dataset has two-phase sampling; use the two-phase estimators".into(),
        ));
    }
    Ok(())
}

/// Targeted estimate of ψ from a given initial fit.
pub fn tmle_estimate<T: Real>(d: &Dataset<T>, spec: &TargetSpec<T>, fit: &NuisanceFit<T>) -> Result<PsiEstimate<T>> {
    require_discrete_single_phase(d)?;
    let ones = vec![T::one(); d.len()];
    target(TargetInput {
        d,
        spec,
        plan: &FoldPlan::single(d.len()),
        fits: std::slice::from_ref(fit),
        weights: &ones,
        mode: EstimatorMode::Tmle,
        bandwidth: None,
    })
}

/// Fit the nuisance on the full sample, then target.
pub fn fit_and_tmle<T: Real>(
    d: &Dataset<T>,
    spec: &TargetSpec<T>,
    cfg: &NuisanceConfig,
) -> Result<(NuisanceFit<T>, PsiEstimate<T>)> {
    require_discrete_single_phase(d)?;
    let all: Vec<usize> = (0..d.len()).collect();
    let fit = fit_nuisance(d, spec, &vec![T::one(); d.len()], &all, cfg)?;
    let est = tmle_estimate(d, spec, &fit)?;
    Ok((fit, est))
}

/// Cross-validated TMLE: fold-specific initial fits, one pooled fluctuation
/// per component.
pub fn cv_tmle_estimate<T: Real>(
    d: &Dataset<T>,
    spec: &TargetSpec<T>,
    plan: &FoldPlan,
    cfg: &NuisanceConfig,
) -> Result<PsiEstimate<T>> {
    require_discrete_single_phase(d)?;
    let ones = vec![T::one(); d.len()];
    let ff = fit_fold_nuisance(d, spec, &ones, plan, cfg)?;
    cv_tmle_from_fits(d, spec, &ff)
}

/// Cross-validated targeting from precomputed fold fits.
pub fn cv_tmle_from_fits<T: Real>(d: &Dataset<T>, spec: &TargetSpec<T>, ff: &FoldFits<T>) -> Result<PsiEstimate<T>> {
    require_discrete_single_phase(d)?;
    let ones = vec![T::one(); d.len()];
    target(TargetInput {
        d,
        spec,
        plan: &ff.plan,
        fits: &ff.fits,
        weights: &ones,
        mode: EstimatorMode::CvTmle,
        bandwidth: None,
    })
}
