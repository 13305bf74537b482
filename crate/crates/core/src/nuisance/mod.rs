//! Nuisance estimation: treatment mechanism and the regressions feeding
//! each targeted component.

pub mod folds;
pub mod learner;
pub mod linear;
pub mod logistic;
pub mod select;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{pseudo_outcomes, BiomarkerKind, Component, Dataset, TargetSpec};
use crate::scalar::{clamp, Real};

pub use folds::FoldPlan;
pub use learner::{fit_learner, Family, FittedLearner, Learner};
pub use linear::fit_weighted_linear;
pub use logistic::{fit_weighted_logistic, LogisticFit};
pub use select::{cv_select, Loss, Selection};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Truncation {
    /// Bounds for conditional probabilities.
    pub lower: f64,
    pub upper: f64,
    /// Treatment predictions are kept in `[treatment, 1 − treatment]`.
    pub treatment: f64,
    /// Floor for conditional density regressions.
    pub density_floor: f64,
}

impl Default for Truncation {
    fn default() -> Self {
        Self {
            lower: 0.005,
            upper: 0.995,
            treatment: 0.01,
            density_floor: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreatmentModel {
    /// Known randomization probability `P(A = 1 | W) = p`.
    Known(f64),
    /// Main-terms logistic regression.
    Logistic,
    /// Cross-validated choice between the arm share and main-terms logistic.
    Ensemble,
}

impl std::str::FromStr for TreatmentModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic" => Ok(Self::Logistic),
            "ensemble" => Ok(Self::Ensemble),
            other => match other.strip_prefix("known:").or_else(|| other.strip_prefix("known=")) {
                Some(p) => p
                    .parse::<f64>()
                    .map(Self::Known)
                    .map_err(|_| Error::Config(format!("bad known probability in `{other}`"))),
                None => Err(Error::Config(format!("unknown treatment model `{other}`"))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NuisanceConfig {
    pub library: Vec<Learner>,
    pub treatment: TreatmentModel,
    pub truncation: Truncation,
    /// Folds used by the learner selector inside each training set.
    pub selection_folds: usize,
    pub binary_loss: Loss,
    pub density_loss: Loss,
    pub seed: u64,
}

impl Default for NuisanceConfig {
    fn default() -> Self {
        Self {
            library: vec![Learner::Mean, Learner::MainTerms, Learner::Interactions],
            treatment: TreatmentModel::Logistic,
            truncation: Truncation::default(),
            selection_folds: 5,
            binary_loss: Loss::WeightedBernoulli,
            density_loss: Loss::WeightedSquaredError,
            seed: 0,
        }
    }
}

/// A fitted regression with its output bounds applied on prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictor<T> {
    pub learner: Learner,
    pub fitted: FittedLearner<T>,
    pub lower: T,
    pub upper: T,
}

impl<T: Real> Predictor<T> {
    pub fn constant(value: T, lower: T, upper: T) -> Self {
        Self {
            learner: Learner::Mean,
            fitted: FittedLearner::Constant(value),
            lower,
            upper,
        }
    }

    pub fn predict(&self, w: &[T]) -> T {
        clamp(self.fitted.predict(w), self.lower, self.upper)
    }
}

/// What the three component regressions estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressionKind {
    /// `q1 = P(S=s*|A=1,w)`, `q2 = P(Y=1|S=s*,A=1,w)`, `q3 = P(Y=0,S^c=s*|A=0,w)`.
    Discrete,
    /// `q_{k,h}(w) = E[f_{k,h}(O) | a_k, w]`.
    Kernel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceFit<T> {
    /// `w ↦ P̂(A=1|w)`.
    pub treatment: Predictor<T>,
    pub regressions: [Predictor<T>; 3],
    pub kind: RegressionKind,
}

impl<T: Real> NuisanceFit<T> {
    /// `P̂(A=a|w)`.
    pub fn treatment_prob(&self, a: bool, w: &[T]) -> T {
        let p = self.treatment.predict(w);
        if a {
            p
        } else {
            T::one() - p
        }
    }

    /// `Ê[f_k(O) | a_k, w]`.
    pub fn conditional_mean(&self, k: Component, w: &[T]) -> T {
        match (self.kind, k) {
            (RegressionKind::Discrete, Component::MarkerCase) => {
                self.regressions[0].predict(w) * self.regressions[1].predict(w)
            }
            _ => self.regressions[k.index()].predict(w),
        }
    }
}

/// Nuisance fits per training fold of a plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldFits<T> {
    pub plan: FoldPlan,
    pub fits: Vec<NuisanceFit<T>>,
}

impl<T: Real> FoldFits<T> {
    /// The fit whose training set excludes subject `i`'s fold.
    pub fn for_subject(&self, i: usize) -> &NuisanceFit<T> {
        &self.fits[self.plan.assignment[i]]
    }
}

/// Deterministic seed derivation for nested randomness.
pub(crate) fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Select a learner by inner cross-validation on the given rows, refit it on
/// all of them, and attach output bounds.
pub(crate) fn fit_predictor<T: Real>(
    cfg: &NuisanceConfig,
    library: &[Learner],
    family: Family,
    bounds: (T, T),
    x: &[&[T]],
    y: &[T],
    weights: &[T],
    seed: u64,
) -> Result<Predictor<T>> {
    let loss = match family {
        Family::Binomial => cfg.binary_loss,
        Family::Gaussian => cfg.density_loss,
    };
    let v = cfg.selection_folds.min(y.len());
    let learner = if library.len() > 1 && v >= 2 {
        let plan = FoldPlan::random(y.len(), v, seed)?;
        cv_select(library, family, loss, x, y, weights, &plan)?.learner
    } else {
        *library
            .first()
            .ok_or_else(|| Error::InvalidArgument("learner library is empty".into()))?
    };
    let fitted = fit_learner(&learner, family, x, y, weights)?;
    Ok(Predictor {
        learner,
        fitted,
        lower: bounds.0,
        upper: bounds.1,
    })
}

/// Fit `w ↦ P̂(A=1|w)` on the given subjects.
pub fn fit_treatment_mechanism<T: Real>(
    d: &Dataset<T>,
    rows: &[usize],
    cfg: &NuisanceConfig,
) -> Result<Predictor<T>> {
    let delta = T::of(cfg.truncation.treatment);
    let (lo, hi) = (delta, T::one() - delta);
    let treated = rows.iter().filter(|&&i| d.observations[i].a).count();
    if treated == 0 || treated == rows.len() {
        return Err(Error::Positivity(format!(
            "{treated} of {} training subjects are treated",
            rows.len()
        )));
    }
    let library: &[Learner] = match cfg.treatment {
        TreatmentModel::Known(p) => {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::Positivity(format!("known treatment probability {p}")));
            }
            return Ok(Predictor::constant(T::of(p), lo, hi));
        }
        TreatmentModel::Logistic => &[Learner::MainTerms],
        TreatmentModel::Ensemble => &[Learner::Mean, Learner::MainTerms],
    };
    let x: Vec<&[T]> = rows.iter().map(|&i| d.observations[i].w.as_slice()).collect();
    let y: Vec<T> = rows
        .iter()
        .map(|&i| if d.observations[i].a { T::one() } else { T::zero() })
        .collect();
    let w = vec![T::one(); rows.len()];
    let seed = mix_seed(cfg.seed, 0xA, rows.len() as u64);
    fit_predictor(cfg, library, Family::Binomial, (lo, hi), &x, &y, &w, seed)
}

/// Subjects (within `rows`) entering the regression for component `k`.
fn stratum<T: Real>(d: &Dataset<T>, rows: &[usize], weights: &[T], k: Component, spec: &TargetSpec<T>) -> Vec<usize> {
    rows.iter()
        .copied()
        .filter(|&i| {
            let o = &d.observations[i];
            o.delta && weights[i] > T::zero() && o.a == k.arm()
                && (d.biomarker_kind == BiomarkerKind::Continuous
                    || k != Component::MarkerCase
                    || o.s == Some(spec.s1_star))
        })
        .collect()
}

fn stratum_name(k: Component) -> &'static str {
    match k {
        Component::Marker => "treated phase-two subjects",
        Component::MarkerCase => "treated phase-two subjects at the biomarker value of interest",
        Component::CrossoverNonCase => "untreated phase-two subjects",
    }
}

/// Fit the treatment mechanism and the three component regressions on the
/// training subjects `rows`, with observation `weights` (length n).
pub fn fit_nuisance<T: Real>(
    d: &Dataset<T>,
    spec: &TargetSpec<T>,
    weights: &[T],
    rows: &[usize],
    cfg: &NuisanceConfig,
) -> Result<NuisanceFit<T>> {
    if weights.len() != d.len() {
        return Err(Error::InvalidArgument("weights must have one entry per subject".into()));
    }
    let treatment = fit_treatment_mechanism(d, rows, cfg)?;
    let kind = match d.biomarker_kind {
        BiomarkerKind::Discrete => RegressionKind::Discrete,
        BiomarkerKind::Continuous => RegressionKind::Kernel,
    };
    let tr = cfg.truncation;
    let targets: [Vec<T>; 3] = match kind {
        RegressionKind::Discrete => {
            let f1 = pseudo_outcomes(d, Component::Marker, spec)?;
            let y: Vec<T> = d.iter().map(|o| if o.y { T::one() } else { T::zero() }).collect();
            let f3 = pseudo_outcomes(d, Component::CrossoverNonCase, spec)?;
            [f1, y, f3]
        }
        RegressionKind::Kernel => [
            pseudo_outcomes(d, Component::Marker, spec)?,
            pseudo_outcomes(d, Component::MarkerCase, spec)?,
            pseudo_outcomes(d, Component::CrossoverNonCase, spec)?,
        ],
    };
    let (family, bounds) = match kind {
        RegressionKind::Discrete => (Family::Binomial, (T::of(tr.lower), T::of(tr.upper))),
        RegressionKind::Kernel => (Family::Gaussian, (T::of(tr.density_floor), T::infinity())),
    };
    let mut fitted = Vec::with_capacity(3);
    for k in Component::ALL {
        let idx = stratum(d, rows, weights, k, spec);
        if idx.is_empty() {
            return Err(Error::EmptyStratum(stratum_name(k).into()));
        }
        let x: Vec<&[T]> = idx.iter().map(|&i| d.observations[i].w.as_slice()).collect();
        let y: Vec<T> = idx.iter().map(|&i| targets[k.index()][i]).collect();
        let w: Vec<T> = idx.iter().map(|&i| weights[i]).collect();
        let seed = mix_seed(cfg.seed, 1 + k.index() as u64, rows.len() as u64);
        fitted.push(fit_predictor(cfg, &cfg.library, family, bounds, &x, &y, &w, seed)?);
    }
    let regressions: [Predictor<T>; 3] = fitted.try_into().expect("three regressions");
    Ok(NuisanceFit {
        treatment,
        regressions,
        kind,
    })
}

/// One [`fit_nuisance`] per training fold of `plan`, fitted in parallel.
pub fn fit_fold_nuisance<T: Real>(
    d: &Dataset<T>,
    spec: &TargetSpec<T>,
    weights: &[T],
    plan: &FoldPlan,
    cfg: &NuisanceConfig,
) -> Result<FoldFits<T>> {
    if plan.len() != d.len() {
        return Err(Error::InvalidArgument("fold plan does not match the dataset".into()));
    }
    let fits = (0..plan.v)
        .into_par_iter()
        .map(|v| {
            let mut fold_cfg = cfg.clone();
            if plan.v > 1 {
                fold_cfg.seed = mix_seed(cfg.seed, 0xF0, v as u64);
            }
            fit_nuisance(d, spec, weights, &plan.training(v), &fold_cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FoldFits {
        plan: plan.clone(),
        fits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Observation;
    use crate::testutil::saturated;
    use approx::assert_abs_diff_eq;

    fn stratum_mean(d: &Dataset<f64>, keep: impl Fn(&Observation<f64>) -> bool, f: impl Fn(&Observation<f64>) -> f64) -> f64 {
        let v: Vec<f64> = d.iter().filter(|o| keep(o)).map(f).collect();
        v.iter().sum::<f64>() / v.len() as f64
    }

    #[test]
    fn saturated_fits_equal_stratum_means() {
        let d = saturated();
        let spec = TargetSpec::discrete(1.0);
        let all: Vec<usize> = (0..d.len()).collect();
        let cfg = NuisanceConfig {
            library: vec![Learner::MainTerms],
            ..Default::default()
        };
        let fit = fit_nuisance(&d, &spec, &vec![1.0; d.len()], &all, &cfg).unwrap();
        for w in [0.0, 1.0] {
            let q1 = stratum_mean(&d, |o| o.a && o.w[0] == w, |o| (o.s == Some(1.0)) as u8 as f64);
            let q2 = stratum_mean(&d, |o| o.a && o.w[0] == w && o.s == Some(1.0), |o| o.y as u8 as f64);
            let q3 = stratum_mean(&d, |o| !o.a && o.w[0] == w, |o| (!o.y && o.s_c == Some(1.0)) as u8 as f64);
            let g = stratum_mean(&d, |o| o.w[0] == w, |o| o.a as u8 as f64);
            assert_abs_diff_eq!(fit.regressions[0].predict(&[w]), q1, epsilon = 1e-9);
            assert_abs_diff_eq!(fit.regressions[1].predict(&[w]), q2, epsilon = 1e-9);
            assert_abs_diff_eq!(fit.regressions[2].predict(&[w]), q3, epsilon = 1e-9);
            assert_abs_diff_eq!(fit.treatment.predict(&[w]), g, epsilon = 1e-9);
        }
    }

    #[test]
    fn unit_weights_match_unweighted_fit() {
        let d = saturated();
        let spec = TargetSpec::discrete(1.0);
        let all: Vec<usize> = (0..d.len()).collect();
        let cfg = NuisanceConfig::default();
        let a = fit_nuisance(&d, &spec, &vec![1.0; d.len()], &all, &cfg).unwrap();
        let b = fit_nuisance(&d, &spec, &vec![1.0; d.len()], &all, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_case_stratum_is_named() {
        let d = saturated();
        let spec = TargetSpec::discrete(5.0);
        let all: Vec<usize> = (0..d.len()).collect();
        match fit_nuisance(&d, &spec, &vec![1.0; d.len()], &all, &NuisanceConfig::default()) {
            Err(Error::EmptyStratum(name)) => assert!(name.contains("biomarker value")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn known_treatment_mechanism_is_constant() {
        let d = saturated();
        let cfg = NuisanceConfig {
            treatment: TreatmentModel::Known(0.5),
            ..Default::default()
        };
        let g = fit_treatment_mechanism(&d, &(0..d.len()).collect::<Vec<_>>(), &cfg).unwrap();
        assert_eq!(g.predict(&[0.0]), 0.5);
        assert_eq!(g.predict(&[1.0]), 0.5);
    }

    #[test]
    fn single_arm_training_set_is_a_positivity_error() {
        let d = saturated();
        let treated: Vec<usize> = (0..d.len()).filter(|&i| d.observations[i].a).collect();
        assert!(matches!(
            fit_treatment_mechanism(&d, &treated, &NuisanceConfig::default()),
            Err(Error::Positivity(_))
        ));
    }

    #[test]
    fn fold_fits_exclude_their_validation_fold() {
        let d = saturated();
        let spec = TargetSpec::discrete(1.0);
        let plan = FoldPlan::stratified(&d, 3, 4).unwrap();
        let cfg = NuisanceConfig {
            library: vec![Learner::Mean],
            treatment: TreatmentModel::Ensemble,
            ..Default::default()
        };
        let ff = fit_fold_nuisance(&d, &spec, &vec![1.0; d.len()], &plan, &cfg).unwrap();
        for v in 0..3 {
            let train = plan.training(v);
            let treated: Vec<usize> = train.iter().copied().filter(|&i| d.observations[i].a).collect();
            let q1 = treated.iter().filter(|&&i| d.observations[i].s == Some(1.0)).count() as f64
                / treated.len() as f64;
            assert_abs_diff_eq!(ff.fits[v].regressions[0].predict(&[0.0]), q1, epsilon = 1e-12);
        }
    }
}
