//! Plug-in estimate of the crossover discrepancy
//! `Ψ₄ = E_W Σ_s (P(S^c=s, Y=0 | A=0, W) − P(S=s | A=1, W))⁺ · P(S=s | A=1, W)`.

use crate::error::{Error, Result};
use crate::model::{BiomarkerKind, Dataset};
use crate::nuisance::{fit_predictor, mix_seed, Family, NuisanceConfig, Predictor};
use crate::scalar::Real;

/// Fitted conditional laws of the biomarker over its observed support.
#[derive(Debug, Clone, PartialEq)]
pub struct BiomarkerLaws<T> {
    pub support: Vec<T>,
    /// `w ↦ P̂(S = s | A = 1, w)` for each support point, before normalization.
    pub marker: Vec<Predictor<T>>,
    /// `w ↦ P̂(S^c = s, Y = 0 | A = 0, w)` for each support point.
    pub crossover: Vec<Predictor<T>>,
}

impl<T: Real> BiomarkerLaws<T> {
    /// Marker probabilities at `w`, normalized to sum to one.
    pub fn marker_probs(&self, w: &[T]) -> Vec<T> {
        let raw: Vec<T> = self.marker.iter().map(|p| p.predict(w)).collect();
        let total: T = raw.iter().copied().sum();
        if total > T::zero() {
            raw.into_iter().map(|p| p / total).collect()
        } else {
            raw
        }
    }

    pub fn crossover_probs(&self, w: &[T]) -> Vec<T> {
        self.crossover.iter().map(|p| p.predict(w)).collect()
    }
}

/// `Σ_s (c_s − m_s)⁺ m_s` for one covariate value.
pub fn psi4_term<T: Real>(marker: &[T], crossover: &[T]) -> T {
    marker
        .iter()
        .zip(crossover)
        .map(|(&m, &c)| (c - m).max(T::zero()) * m)
        .sum()
}

/// Fit the marker and crossover laws for every support value, using
/// observation `weights` among phase-two subjects.
pub fn fit_biomarker_laws<T: Real>(d: &Dataset<T>, weights: &[T], cfg: &NuisanceConfig) -> Result<BiomarkerLaws<T>> {
    if d.biomarker_kind != BiomarkerKind::Discrete {
        return Err(Error::UnsupportedMode("Ψ₄ is defined for discrete biomarkers".into()));
    }
    if weights.len() != d.len() {
        return Err(Error::InvalidArgument("weights must have one entry per subject".into()));
    }
    let keep = |i: usize, arm: bool| {
        let o = &d.observations[i];
        o.delta && o.a == arm && weights[i] > T::zero()
    };
    let mut support: Vec<T> = Vec::new();
    for (i, o) in d.iter().enumerate() {
        let v = if keep(i, true) {
            o.s
        } else if keep(i, false) && !o.y {
            o.s_c
        } else {
            None
        };
        if let Some(v) = v {
            if !support.contains(&v) {
                support.push(v);
            }
        }
    }
    support.sort_by(|a, b| a.partial_cmp(b).expect("finite biomarker values"));
    let treated: Vec<usize> = (0..d.len()).filter(|&i| keep(i, true)).collect();
    let untreated: Vec<usize> = (0..d.len()).filter(|&i| keep(i, false)).collect();
    if treated.is_empty() {
        return Err(Error::EmptyStratum("treated phase-two subjects".into()));
    }
    if untreated.is_empty() {
        return Err(Error::EmptyStratum("untreated phase-two subjects".into()));
    }
    let fit = |rows: &[usize], target: &dyn Fn(usize) -> bool, tag: u64| -> Result<Predictor<T>> {
        let x: Vec<&[T]> = rows.iter().map(|&i| d.observations[i].w.as_slice()).collect();
        let y: Vec<T> = rows.iter().map(|&i| if target(i) { T::one() } else { T::zero() }).collect();
        let w: Vec<T> = rows.iter().map(|&i| weights[i]).collect();
        fit_predictor(cfg, &cfg.library, Family::Binomial, (T::zero(), T::one()), &x, &y, &w, mix_seed(cfg.seed, 0x54, tag))
    };
    let mut marker = Vec::with_capacity(support.len());
    let mut crossover = Vec::with_capacity(support.len());
    for (j, &s) in support.iter().enumerate() {
        marker.push(fit(&treated, &|i| d.observations[i].s == Some(s), 2 * j as u64)?);
        crossover.push(fit(
            &untreated,
            &|i| {
                let o = &d.observations[i];
                !o.y && o.s_c == Some(s)
            },
            2 * j as u64 + 1,
        )?);
    }
    Ok(BiomarkerLaws {
        support,
        marker,
        crossover,
    })
}

/// Empirical-W plug-in `Ψ̂₄ = (1/n) Σᵢ Σ_s (ĉ_s(Wᵢ) − m̂_s(Wᵢ))⁺ m̂_s(Wᵢ)`.
pub fn estimate_psi4<T: Real>(d: &Dataset<T>, laws: &BiomarkerLaws<T>) -> Result<T> {
    if d.biomarker_kind != BiomarkerKind::Discrete {
        return Err(Error::UnsupportedMode("Ψ₄ is defined for discrete biomarkers".into()));
    }
    if d.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    let total: T = d
        .iter()
        .map(|o| psi4_term(&laws.marker_probs(&o.w), &laws.crossover_probs(&o.w)))
        .sum();
    Ok(total / T::of_usize(d.len()))
}
