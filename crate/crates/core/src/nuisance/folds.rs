use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::scalar::Real;

/// Partition of subjects into `v` folds. Fold ids are 0-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub v: usize,
    pub assignment: Vec<usize>,
}

impl FoldPlan {
    /// One fold whose training set is the full sample.
    pub fn single(n: usize) -> Self {
        Self {
            v: 1,
            assignment: vec![0; n],
        }
    }

    pub fn from_assignment(assignment: Vec<usize>, v: usize) -> Result<Self> {
        if v == 0 || assignment.iter().any(|&f| f >= v) {
            return Err(Error::InvalidArgument(format!("fold ids must lie in 0..{v}")));
        }
        Ok(Self { v, assignment })
    }

    /// Seeded assignment stratified by `(A, Y)`: each stratum is shuffled,
    /// the strata are concatenated and dealt to folds in turn, so fold sizes
    /// differ by at most one and every fold mixes arms and outcomes.
    pub fn stratified<T: Real>(d: &Dataset<T>, v: usize, seed: u64) -> Result<Self> {
        let keys: Vec<usize> = d.iter().map(|o| 2 * o.a as usize + o.y as usize).collect();
        Self::by_strata(&keys, 4, v, seed)
    }

    /// Seeded balanced assignment without stratification.
    pub fn random(n: usize, v: usize, seed: u64) -> Result<Self> {
        Self::by_strata(&vec![0; n], 1, v, seed)
    }

    fn by_strata(keys: &[usize], strata: usize, v: usize, seed: u64) -> Result<Self> {
        let n = keys.len();
        if v == 0 || v > n {
            return Err(Error::InvalidArgument(format!("cannot split {n} subjects into {v} folds")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order = Vec::with_capacity(n);
        for s in 0..strata {
            let mut members: Vec<usize> = (0..n).filter(|&i| keys[i] == s).collect();
            members.shuffle(&mut rng);
            order.extend(members);
        }
        let mut assignment = vec![0; n];
        for (pos, &i) in order.iter().enumerate() {
            assignment[i] = pos % v;
        }
        Ok(Self { v, assignment })
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn validation(&self, fold: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.assignment[i] == fold).collect()
    }

    /// Training indices for `fold`; with a single fold, the full sample.
    pub fn training(&self, fold: usize) -> Vec<usize> {
        if self.v == 1 {
            return (0..self.len()).collect();
        }
        (0..self.len()).filter(|&i| self.assignment[i] != fold).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.v];
        for &f in &self.assignment {
            s[f] += 1;
        }
        s
    }
}
