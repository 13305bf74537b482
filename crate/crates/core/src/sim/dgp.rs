use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BiomarkerKind, Dataset, Observation};
use crate::scalar::expit;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossoverRule {
    /// `S₀^c = S₁`.
    Exact,
    /// Independent `N(0, sd²)` measurement error on both the treated-arm
    /// biomarker and the crossover biomarker.
    Noisy(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArmAssignment {
    /// `A ~ Bernoulli(arm_prob)` independently.
    Bernoulli,
    /// Exactly `round(n · arm_prob)` treated, in random order.
    FixedMargins,
}

/// Gaussian-logistic trial: `(W, S₁)` bivariate normal and
/// `P(Y_a = 1 | W, S₁) = expit(β₀ + β₁a + β₂W + β₃S₁ + β₄aS₁)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub n: usize,
    pub betas: [f64; 5],
    /// Means of `(W, S₁)`.
    pub mu: [f64; 2],
    pub cov: [[f64; 2]; 2],
    pub arm_prob: f64,
    pub crossover_rule: CrossoverRule,
    pub assignment: ArmAssignment,
    pub seed: u64,
    pub reps: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        let var = 0.55 * 0.55;
        Self {
            n: 5000,
            betas: [-1.25, -0.6, -0.5, -0.1, -0.9],
            mu: [0.41, 0.41],
            cov: [[var, 0.5 * var], [0.5 * var, var]],
            arm_prob: 0.5,
            crossover_rule: CrossoverRule::Exact,
            assignment: ArmAssignment::Bernoulli,
            seed: 20_240_601,
            reps: 1,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let c = &self.cov;
        if c[0][1] != c[1][0] {
            return Err(Error::Config("covariance must be symmetric".into()));
        }
        if !(c[0][0] > 0.0 && c[0][0] * c[1][1] - c[0][1] * c[1][0] > 0.0) {
            return Err(Error::Config("covariance must be positive definite".into()));
        }
        if !(self.arm_prob > 0.0 && self.arm_prob < 1.0) {
            return Err(Error::Config(format!("arm_prob {} is outside (0, 1)", self.arm_prob)));
        }
        if self.n == 0 {
            return Err(Error::Config("n must be positive".into()));
        }
        if let CrossoverRule::Noisy(sd) = self.crossover_rule {
            if !(sd >= 0.0 && sd.is_finite()) {
                return Err(Error::Config(format!("crossover noise sd {sd} is invalid")));
            }
        }
        Ok(())
    }

    /// `P(Y_a = 1 | W = w, S₁ = s)`.
    pub fn risk(&self, a: bool, w: f64, s: f64) -> f64 {
        let b = &self.betas;
        let a = if a { 1.0 } else { 0.0 };
        expit(b[0] + b[1] * a + b[2] * w + b[3] * s + b[4] * a * s)
    }

    /// `(sd_W, sd_S, correlation)`.
    pub fn moments(&self) -> (f64, f64, f64) {
        let sw = self.cov[0][0].sqrt();
        let ss = self.cov[1][1].sqrt();
        (sw, ss, self.cov[0][1] / (sw * ss))
    }

    pub fn rng_for(&self, rep: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(rep);
        rng
    }
}

/// One trial from the configured seed (stream 0).
pub fn simulate_trial(cfg: &SimConfig) -> Result<Dataset<f64>> {
    simulate_rep(cfg, 0)
}

/// Trial number `rep`, drawn from its own RNG stream.
pub fn simulate_rep(cfg: &SimConfig, rep: u64) -> Result<Dataset<f64>> {
    cfg.validate()?;
    let mut rng = cfg.rng_for(rep);
    let n = cfg.n;
    let (sw, ss, rho) = cfg.moments();
    let arms: Vec<bool> = match cfg.assignment {
        ArmAssignment::Bernoulli => (0..n).map(|_| rng.random_bool(cfg.arm_prob)).collect(),
        ArmAssignment::FixedMargins => {
            let treated = (n as f64 * cfg.arm_prob).round() as usize;
            let mut v: Vec<bool> = (0..n).map(|i| i < treated).collect();
            v.shuffle(&mut rng);
            v
        }
    };
    let noise = match cfg.crossover_rule {
        CrossoverRule::Exact => None,
        CrossoverRule::Noisy(sd) => Some(Normal::new(0.0, sd).map_err(|e| Error::Config(e.to_string()))?),
    };
    let mut obs = Vec::with_capacity(n);
    for &a in &arms {
        let z1: f64 = StandardNormal.sample(&mut rng);
        let z2: f64 = StandardNormal.sample(&mut rng);
        let s1 = cfg.mu[1] + ss * z1;
        let w = cfg.mu[0] + sw * (rho * z1 + (1.0 - rho * rho).sqrt() * z2);
        let y1 = rng.random::<f64>() < cfg.risk(true, w, s1);
        let y0 = rng.random::<f64>() < cfg.risk(false, w, s1);
        let (e1, e2) = match &noise {
            Some(d) => (d.sample(&mut rng), d.sample(&mut rng)),
            None => (0.0, 0.0),
        };
        let o = if a {
            Observation::new(vec![w], true, Some(s1 + e1), y1, Some(0.0))
        } else {
            let sc = if y0 { 0.0 } else { s1 + e2 };
            Observation::new(vec![w], false, Some(0.0), y0, Some(sc))
        };
        obs.push(o);
    }
    Ok(Dataset::new(obs, BiomarkerKind::Continuous))
}

/// Threshold the biomarker: `S ↦ 1{S > threshold}`, likewise for `S^c`.
/// Sentinel entries stay at code 0.
pub fn discretize(d: &Dataset<f64>, threshold: f64) -> Dataset<f64> {
    let code = |v: Option<f64>| v.map(|x| if x > threshold { 1.0 } else { 0.0 });
    let obs = d
        .iter()
        .map(|o| {
            let mut q = o.clone();
            if o.a {
                q.s = code(o.s);
            }
            if !o.a && !o.y {
                q.s_c = code(o.s_c);
            }
            q
        })
        .collect();
    Dataset::new(obs, BiomarkerKind::Discrete)
}
