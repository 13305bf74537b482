use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingDesign {
    /// Every case is sampled; non-cases with probability `p`.
    CaseCohort(f64),
    /// Probability `p[a][y]`; untreated cases are always sampled.
    Stratified([[f64; 2]; 2]),
}

impl SamplingDesign {
    fn check(p: f64) -> Result<()> {
        if p > 0.0 && p <= 1.0 {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("sampling probability {p} is outside (0, 1]")))
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::CaseCohort(p) => Self::check(*p),
            Self::Stratified(p) => p.iter().flatten().try_for_each(|&v| Self::check(v)),
        }
    }

    /// Inclusion probability for a subject with arm `a` and outcome `y`.
    pub fn probability(&self, a: bool, y: bool) -> f64 {
        if !a && y {
            return 1.0;
        }
        match self {
            Self::CaseCohort(p) => {
                if y {
                    1.0
                } else {
                    *p
                }
            }
            Self::Stratified(p) => p[a as usize][y as usize],
        }
    }
}

/// Draw phase-two indicators independently given phase-one data. Unsampled
/// subjects lose their biomarker values.
pub fn two_phase_subsample(d: &Dataset<f64>, design: SamplingDesign, seed: u64) -> Result<Dataset<f64>> {
    design.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = d.clone();
    for o in out.observations.iter_mut() {
        let pi = design.probability(o.a, o.y);
        let delta = pi >= 1.0 || rng.random::<f64>() < pi;
        o.delta = delta;
        o.pi = pi;
        if !delta {
            o.s = None;
            o.s_c = None;
        }
    }
    Ok(out)
}
