use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::nuisance::linear::fit_weighted_linear;
use crate::nuisance::logistic::{check_weights, clip_logit, fit_weighted_logistic};
use crate::quadrature::normal_pdf;
use crate::scalar::{expit, Real};

/// Built-in regression learners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Learner {
    /// Weighted sample mean.
    Mean,
    /// GLM in the raw covariates.
    MainTerms,
    /// GLM with all pairwise products, squares included for covariates
    /// taking more than two values.
    Interactions,
    /// Gaussian product-kernel regression on standardized covariates.
    /// Without a bandwidth, `n^{-1/(4+p)}` is used.
    NadarayaWatson { bandwidth: Option<f64> },
}

impl std::str::FromStr for Learner {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Self::Mean),
            "main_terms" | "glm" => Ok(Self::MainTerms),
            "interactions" | "glm_interactions" => Ok(Self::Interactions),
            "nadaraya_watson" => Ok(Self::NadarayaWatson { bandwidth: None }),
            other => Err(Error::Config(format!("unknown learner `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Outcomes in `[0, 1]`, logistic link, Bernoulli loss.
    Binomial,
    /// Real outcomes, identity link, squared-error loss.
    Gaussian,
}

/// Centering and scaling fitted on the training rows. Columns without
/// variation are dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer<T> {
    pub columns: Vec<usize>,
    pub mean: Vec<T>,
    pub scale: Vec<T>,
    /// Whether each kept column takes more than two values.
    pub rich: Vec<bool>,
}

impl<T: Real> Standardizer<T> {
    fn fit(x: &[&[T]], weights: &[T]) -> Self {
        let p = x.first().map_or(0, |r| r.len());
        let total: T = weights.iter().copied().sum();
        let mut out = Self {
            columns: Vec::new(),
            mean: Vec::new(),
            scale: Vec::new(),
            rich: Vec::new(),
        };
        for j in 0..p {
            let active = || x.iter().zip(weights).filter(|(_, w)| **w > T::zero());
            let m = active().map(|(r, w)| *w * r[j]).sum::<T>() / total;
            let v = active().map(|(r, w)| *w * (r[j] - m) * (r[j] - m)).sum::<T>() / total;
            if !(v > T::zero()) {
                continue;
            }
            let mut distinct: Vec<T> = Vec::new();
            for (r, _) in active() {
                if !distinct.contains(&r[j]) {
                    distinct.push(r[j]);
                    if distinct.len() > 2 {
                        break;
                    }
                }
            }
            out.columns.push(j);
            out.mean.push(m);
            out.scale.push(v.sqrt());
            out.rich.push(distinct.len() > 2);
        }
        out
    }

    fn apply(&self, w: &[T]) -> Vec<T> {
        self.columns
            .iter()
            .enumerate()
            .map(|(c, &j)| (w[j] - self.mean[c]) / self.scale[c])
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    MainTerms,
    Interactions,
}

fn expand<T: Real>(basis: Basis, z: &[T], rich: &[bool]) -> Vec<T> {
    let mut f = Vec::with_capacity(1 + z.len() * (z.len() + 3) / 2);
    f.push(T::one());
    f.extend_from_slice(z);
    if basis == Basis::Interactions {
        for a in 0..z.len() {
            for b in a..z.len() {
                if a != b || rich[a] {
                    f.push(z[a] * z[b]);
                }
            }
        }
    }
    f
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FittedLearner<T> {
    Constant(T),
    Glm {
        family: Family,
        basis: Basis,
        standardizer: Standardizer<T>,
        coefficients: Vec<T>,
    },
    Kernel {
        standardizer: Standardizer<T>,
        centers: Vec<Vec<T>>,
        weighted_y: Vec<T>,
        weights: Vec<T>,
        bandwidth: T,
        fallback: T,
    },
}

impl<T: Real> FittedLearner<T> {
    /// Prediction on the response scale (untruncated).
    pub fn predict(&self, w: &[T]) -> T {
        match self {
            FittedLearner::Constant(c) => *c,
            FittedLearner::Glm {
                family,
                basis,
                standardizer,
                coefficients,
            } => {
                let f = expand(*basis, &standardizer.apply(w), &standardizer.rich);
                match family {
                    Family::Gaussian => dot(&f, coefficients),
                    Family::Binomial => expit(clip_logit(dot(&f, coefficients))),
                }
            }
            FittedLearner::Kernel {
                standardizer,
                centers,
                weighted_y,
                weights,
                bandwidth,
                fallback,
            } => {
                let z = standardizer.apply(w);
                let (mut num, mut den) = (T::zero(), T::zero());
                for (i, c) in centers.iter().enumerate() {
                    let k = c
                        .iter()
                        .zip(&z)
                        .map(|(a, b)| normal_pdf(*a - *b, T::zero(), *bandwidth))
                        .fold(T::one(), |acc, v| acc * v);
                    num += k * weighted_y[i];
                    den += k * weights[i];
                }
                if den > T::min_positive_value() {
                    num / den
                } else {
                    *fallback
                }
            }
        }
    }
}

fn weighted_mean<T: Real>(y: &[T], weights: &[T]) -> Result<T> {
    let total = check_weights(weights)?;
    Ok(y.iter().zip(weights).map(|(y, w)| *y * *w).sum::<T>() / total)
}

/// Fit `learner` to `(x, y)` with observation weights.
pub fn fit_learner<T: Real>(
    learner: &Learner,
    family: Family,
    x: &[&[T]],
    y: &[T],
    weights: &[T],
) -> Result<FittedLearner<T>> {
    if x.len() != y.len() || y.len() != weights.len() {
        return Err(Error::InvalidArgument("learner inputs have mismatched lengths".into()));
    }
    let mean = weighted_mean(y, weights)?;
    let active = || y.iter().zip(weights).filter(|(_, w)| **w > T::zero()).map(|(y, _)| *y);
    let first = active().next().unwrap_or(mean);
    if active().all(|v| v == first) {
        return Ok(FittedLearner::Constant(first));
    }
    let basis = match learner {
        Learner::Mean => return Ok(FittedLearner::Constant(mean)),
        Learner::MainTerms => Basis::MainTerms,
        Learner::Interactions => Basis::Interactions,
        Learner::NadarayaWatson { bandwidth } => {
            let standardizer = Standardizer::fit(x, weights);
            let keep: Vec<usize> = (0..y.len()).filter(|&i| weights[i] > T::zero()).collect();
            let p = standardizer.columns.len().max(1);
            let h = match bandwidth {
                Some(h) if *h > 0.0 => T::of(*h),
                Some(h) => return Err(Error::InvalidBandwidth(*h)),
                None => T::of_usize(keep.len()).powf(-T::one() / T::of_usize(4 + p)),
            };
            return Ok(FittedLearner::Kernel {
                centers: keep.iter().map(|&i| standardizer.apply(x[i])).collect(),
                weighted_y: keep.iter().map(|&i| weights[i] * y[i]).collect(),
                weights: keep.iter().map(|&i| weights[i]).collect(),
                standardizer,
                bandwidth: h,
                fallback: mean,
            });
        }
    };
    let standardizer = Standardizer::fit(x, weights);
    let rows: Vec<Vec<T>> = x
        .iter()
        .map(|w| expand(basis, &standardizer.apply(w), &standardizer.rich))
        .collect();
    let design = Matrix::from_rows(&rows);
    let coefficients = match family {
        Family::Gaussian => fit_weighted_linear(&design, y, weights)?,
        Family::Binomial => {
            let fit = fit_weighted_logistic(&design, y, weights, None)?;
            if !fit.converged && !fit.separated {
                return Err(Error::InvalidArgument(format!(
                    "logistic fit did not converge (score {:e})",
                    fit.max_score.as_f64()
                )));
            }
            fit.coefficients
        }
    };
    Ok(FittedLearner::Glm {
        family,
        basis,
        standardizer,
        coefficients,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn rows(x: &[Vec<f64>]) -> Vec<&[f64]> {
        x.iter().map(|r| r.as_slice()).collect()
    }

    #[test]
    fn saturated_binary_covariate_reproduces_stratum_means() {
        let x: Vec<Vec<f64>> = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0].iter().map(|&v| vec![v]).collect();
        let y = [1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0];
        for learner in [Learner::MainTerms, Learner::Interactions] {
            let fit = fit_learner(&learner, Family::Binomial, &rows(&x), &y, &[1.0; 7]).unwrap();
            assert_abs_diff_eq!(fit.predict(&[0.0]), 1.0 / 3.0, epsilon = 1e-10);
            assert_abs_diff_eq!(fit.predict(&[1.0]), 0.75, epsilon = 1e-10);
        }
    }

    #[test]
    fn constant_outcome_gives_constant_predictor() {
        let x: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64]).collect();
        let fit = fit_learner(&Learner::MainTerms, Family::Binomial, &rows(&x), &[0.0; 5], &[1.0; 5]).unwrap();
        assert_eq!(fit, FittedLearner::Constant(0.0));
    }

    #[test]
    fn interactions_fit_a_quadratic_exactly() {
        let x: Vec<Vec<f64>> = (0..9).map(|i| vec![i as f64 / 4.0 - 1.0]).collect();
        let y: Vec<f64> = x.iter().map(|r| 1.0 + r[0] - 2.0 * r[0] * r[0]).collect();
        let fit = fit_learner(&Learner::Interactions, Family::Gaussian, &rows(&x), &y, &[1.0; 9]).unwrap();
        assert_abs_diff_eq!(fit.predict(&[0.3]), 1.0 + 0.3 - 2.0 * 0.09, epsilon = 1e-10);
    }

    #[test]
    fn constant_covariate_column_is_dropped() {
        let x: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, 2.0]).collect();
        let y: Vec<f64> = (0..6).map(|i| 0.5 * i as f64).collect();
        let fit = fit_learner(&Learner::MainTerms, Family::Gaussian, &rows(&x), &y, &[1.0; 6]).unwrap();
        assert_abs_diff_eq!(fit.predict(&[3.0, 2.0]), 1.5, epsilon = 1e-10);
    }

    #[test]
    fn kernel_regression_interpolates_smooth_signal() {
        let x: Vec<Vec<f64>> = (0..200).map(|i| vec![i as f64 / 100.0]).collect();
        let y: Vec<f64> = x.iter().map(|r| r[0] * r[0]).collect();
        let nw = Learner::NadarayaWatson { bandwidth: Some(0.05) };
        let fit = fit_learner(&nw, Family::Gaussian, &rows(&x), &y, &[1.0; 200]).unwrap();
        assert!((fit.predict(&[1.0]) - 1.0).abs() < 0.02);
    }

    #[test]
    fn learner_names_parse() {
        assert_eq!("glm".parse::<Learner>().unwrap(), Learner::MainTerms);
        assert!("neural_net".parse::<Learner>().is_err());
    }
}
