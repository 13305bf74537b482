//! Targeting engine shared by the single-phase, cross-validated, two-phase
//! and continuous-biomarker estimators.

use crate::error::{Error, Result};
use crate::linalg::covariance;
use crate::model::{pseudo_outcomes, Component, Dataset, EstimatorMode, PsiEstimate, TargetSpec};
use crate::nuisance::{FoldPlan, NuisanceFit, RegressionKind};
use crate::scalar::{expit, logit, Real};
use crate::tmle::eif::eif_component;
use crate::tmle::fluctuation::{closed_form_log_fluctuation, solve_logistic_fluctuation};

pub(crate) struct TargetInput<'a, T> {
    pub d: &'a Dataset<T>,
    pub spec: &'a TargetSpec<T>,
    pub plan: &'a FoldPlan,
    /// One fit per fold of `plan`.
    pub fits: &'a [NuisanceFit<T>],
    /// Observation weights: ones, or `Δᵢ/π̄ᵢ` under two-phase sampling.
    pub weights: &'a [T],
    pub mode: EstimatorMode,
    pub bandwidth: Option<T>,
}

#[derive(Clone, Copy)]
enum Update<T> {
    Logistic(T),
    LogLinear(T),
}

impl<T: Real> Update<T> {
    #[inline]
    fn apply(self, e: T) -> T {
        match self {
            Update::Logistic(eps) => expit(logit(e) + eps),
            Update::LogLinear(eps) => e * eps.exp(),
        }
    }

    fn epsilon(self) -> T {
        match self {
            Update::Logistic(e) | Update::LogLinear(e) => e,
        }
    }
}

pub(crate) fn target<T: Real>(inp: TargetInput<'_, T>) -> Result<PsiEstimate<T>> {
    let TargetInput {
        d,
        spec,
        plan,
        fits,
        weights,
        mode,
        bandwidth,
    } = inp;
    let n = d.len();
    if plan.len() != n || fits.len() != plan.v || weights.len() != n {
        return Err(Error::InvalidArgument("targeting inputs have inconsistent sizes".into()));
    }
    let kind = fits[0].kind;
    let fit_of = |i: usize| &fits[plan.assignment[i]];
    let nt = T::of_usize(n);
    let fold_share: Vec<T> = plan.sizes().iter().map(|&s| T::of_usize(s) / nt).collect();

    let mut psi = [T::zero(); 3];
    let mut epsilons = [T::zero(); 3];
    let mut scores = [T::zero(); 3];
    let mut rows = vec![[T::zero(); 3]; n];
    let mut starred: Vec<[T; 3]> = vec![[T::zero(); 3]; n];
    for k in Component::ALL {
        let ki = k.index();
        let f = pseudo_outcomes(d, k, spec)?;
        let mut e = Vec::with_capacity(n);
        let mut g = Vec::with_capacity(n);
        let mut fw = Vec::with_capacity(n);
        for (i, o) in d.iter().enumerate() {
            let fit = fit_of(i);
            let gi = fit.treatment_prob(k.arm(), &o.w);
            if !(gi > T::zero() && gi.is_finite()) {
                return Err(Error::Positivity(format!("P(A={}|W) = {gi} at row {i}", k.arm() as u8)));
            }
            e.push(fit.conditional_mean(k, &o.w));
            g.push(gi);
            fw.push(if o.a == k.arm() { weights[i] / gi } else { T::zero() });
        }
        let update = match kind {
            RegressionKind::Discrete => {
                let offset: Vec<T> = e.iter().map(|&v| logit(v)).collect();
                Update::Logistic(solve_logistic_fluctuation(&f, &offset, &fw, ki)?.0)
            }
            RegressionKind::Kernel => Update::LogLinear(closed_form_log_fluctuation(&f, &e, &fw, ki)?),
        };

        // ψ_k: each fold's targeted fit averaged over its own training
        // sample (weighted), pooled by validation-fold share.
        let mut value = T::zero();
        for (v, share) in fold_share.iter().enumerate() {
            let (mut num, mut den) = (T::zero(), T::zero());
            for (j, o) in d.iter().enumerate() {
                if plan.v > 1 && plan.assignment[j] == v {
                    continue;
                }
                let wj = weights[j];
                if wj == T::zero() {
                    continue;
                }
                num += wj * update.apply(fits[v].conditional_mean(k, &o.w));
                den += wj;
            }
            if !(den > T::zero()) {
                return Err(Error::ZeroWeights);
            }
            value += *share * num / den;
        }
        psi[ki] = value;
        epsilons[ki] = update.epsilon();

        let mut score = T::zero();
        for (i, o) in d.iter().enumerate() {
            let star = update.apply(e[i]);
            starred[i][ki] = star;
            score += fw[i] * (f[i] - star);
            rows[i][ki] = weights[i] * eif_component(k, o.a, g[i], f[i], star, value);
        }
        scores[ki] = score / nt;
    }
    let compatible = starred.iter().all(|s| s[1] <= s[0]);
    let sigma = covariance(&rows);
    let mut sigma_arr = [[T::zero(); 3]; 3];
    for (a, row) in sigma_arr.iter_mut().enumerate() {
        for (b, v) in row.iter_mut().enumerate() {
            *v = sigma[(a, b)];
        }
    }
    Ok(PsiEstimate {
        psi,
        influence_rows: rows,
        sigma: sigma_arr,
        epsilons,
        mode,
        bandwidth_used: bandwidth,
        scores,
        compatible: Some(compatible),
    })
}
