use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nuisance::folds::FoldPlan;
use crate::nuisance::learner::{fit_learner, Family, FittedLearner, Learner};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    WeightedBernoulli,
    WeightedSquaredError,
}

impl Loss {
    pub fn eval<T: Real>(self, y: T, prediction: T) -> T {
        match self {
            Loss::WeightedSquaredError => (y - prediction) * (y - prediction),
            Loss::WeightedBernoulli => {
                let tiny = T::of(1e-15);
                let p = prediction.max(tiny).min(T::one() - tiny);
                -(y * p.ln() + (T::one() - y) * (T::one() - p).ln())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection<T> {
    pub index: usize,
    pub learner: Learner,
    /// Cross-validated weighted risk per library entry; `None` when the
    /// learner failed on some fold or no cross-validation was needed.
    pub risks: Vec<Option<T>>,
}

/// Discrete cross-validated selector: the learner with the smallest
/// weighted validation risk, ties going to the earlier library entry.
pub fn cv_select<T: Real>(
    learners: &[Learner],
    family: Family,
    loss: Loss,
    x: &[&[T]],
    y: &[T],
    weights: &[T],
    folds: &FoldPlan,
) -> Result<Selection<T>> {
    if learners.is_empty() {
        return Err(Error::InvalidArgument("learner library is empty".into()));
    }
    if learners.len() == 1 {
        return Ok(Selection {
            index: 0,
            learner: learners[0],
            risks: vec![None],
        });
    }
    if folds.len() != y.len() {
        return Err(Error::InvalidArgument("fold plan does not match the data".into()));
    }
    let mut risks = Vec::with_capacity(learners.len());
    for learner in learners {
        risks.push(cv_risk(learner, family, loss, x, y, weights, folds).map_err(|e| {
            log::warn!("learner {learner:?} excluded from selection: {e}");
            e
        }).ok());
    }
    let mut best: Option<(usize, T)> = None;
    for (i, r) in risks.iter().enumerate() {
        if let Some(r) = *r {
            if best.is_none_or(|(_, b)| r < b) {
                best = Some((i, r));
            }
        }
    }
    let (index, _) = best.ok_or_else(|| Error::AllLearnersFailed(format!("{} learner(s) tried", learners.len())))?;
    Ok(Selection {
        index,
        learner: learners[index],
        risks,
    })
}

fn cv_risk<T: Real>(
    learner: &Learner,
    family: Family,
    loss: Loss,
    x: &[&[T]],
    y: &[T],
    weights: &[T],
    folds: &FoldPlan,
) -> Result<T> {
    let (mut total, mut mass) = (T::zero(), T::zero());
    for v in 0..folds.v {
        let train = folds.training(v);
        let valid = folds.validation(v);
        let fit = fit_learner(
            learner,
            family,
            &train.iter().map(|&i| x[i]).collect::<Vec<_>>(),
            &train.iter().map(|&i| y[i]).collect::<Vec<_>>(),
            &train.iter().map(|&i| weights[i]).collect::<Vec<_>>(),
        )?;
        for &i in &valid {
            total += weights[i] * loss.eval(y[i], fit.predict(x[i]));
            mass += weights[i];
        }
    }
    if !total.is_finite() {
        return Err(Error::InvalidArgument("non-finite validation loss".into()));
    }
    Ok(total / mass.max(T::min_positive_value()))
}

/// Select by cross-validation, then refit the winner on all rows.
pub fn select_and_fit<T: Real>(
    learners: &[Learner],
    family: Family,
    loss: Loss,
    x: &[&[T]],
    y: &[T],
    weights: &[T],
    folds: &FoldPlan,
) -> Result<(Learner, FittedLearner<T>)> {
    let chosen = cv_select(learners, family, loss, x, y, weights, folds)?;
    Ok((chosen.learner, fit_learner(&chosen.learner, family, x, y, weights)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::expit;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn logistic_data(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(-2.0..2.0)]).collect();
        let y = x
            .iter()
            .map(|r| if rng.random::<f64>() < expit(-0.3 + 1.0 * r[0]) { 1.0 } else { 0.0 })
            .collect();
        (x, y)
    }

    #[test]
    fn single_learner_is_returned_unchanged() {
        let (x, y) = logistic_data(20, 0);
        let rows: Vec<&[f64]> = x.iter().map(|r| r.as_slice()).collect();
        let s = cv_select(&[Learner::Interactions], Family::Binomial, Loss::WeightedBernoulli, &rows, &y, &[1.0; 20], &FoldPlan::single(20)).unwrap();
        assert_eq!(s.learner, Learner::Interactions);
    }

    #[test]
    fn duplicate_learners_tie_to_first() {
        let (x, y) = logistic_data(100, 1);
        let rows: Vec<&[f64]> = x.iter().map(|r| r.as_slice()).collect();
        let folds = FoldPlan::random(100, 5, 3).unwrap();
        let s = cv_select(
            &[Learner::MainTerms, Learner::MainTerms],
            Family::Binomial,
            Loss::WeightedBernoulli,
            &rows,
            &y,
            &[1.0; 100],
            &folds,
        )
        .unwrap();
        assert_eq!(s.index, 0);
        assert_eq!(s.risks[0], s.risks[1]);
    }

    #[test]
    fn failing_learner_is_excluded() {
        let (x, y) = logistic_data(50, 2);
        let rows: Vec<&[f64]> = x.iter().map(|r| r.as_slice()).collect();
        let folds = FoldPlan::random(50, 5, 3).unwrap();
        let bad = Learner::NadarayaWatson { bandwidth: Some(-1.0) };
        let s = cv_select(&[bad, Learner::Mean], Family::Binomial, Loss::WeightedBernoulli, &rows, &y, &[1.0; 50], &folds).unwrap();
        assert_eq!(s.index, 1);
        assert!(s.risks[0].is_none());
        assert!(matches!(
            cv_select(&[bad, bad], Family::Binomial, Loss::WeightedBernoulli, &rows, &y, &[1.0; 50], &folds),
            Err(Error::AllLearnersFailed(_))
        ));
    }

    #[test]
    fn logistic_beats_mean_on_linear_logistic_truth() {
        // Repeated-seed experiment: the informative learner should win almost always.
        let reps = 100;
        let mut wins = 0;
        for seed in 0..reps {
            let (x, y) = logistic_data(2000, 100 + seed);
            let rows: Vec<&[f64]> = x.iter().map(|r| r.as_slice()).collect();
            let folds = FoldPlan::random(2000, 10, seed).unwrap();
            let s = cv_select(&[Learner::Mean, Learner::MainTerms], Family::Binomial, Loss::WeightedBernoulli, &rows, &y, &vec![1.0; 2000], &folds).unwrap();
            wins += (s.learner == Learner::MainTerms) as usize;
        }
        assert!(wins as f64 / reps as f64 > 0.95, "wins {wins}/{reps}");
    }
}
