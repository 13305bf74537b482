//! Shared data model: observations, datasets, estimands and estimate
//! containers.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::continuous::kernel::{check_bandwidth, KernelSpec};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// One subject's record from a crossover trial.
///
/// `s` is the post-treatment biomarker (treated subjects), `s_c` the
/// post-crossover biomarker (untreated non-cases). For subjects where a
/// biomarker is structurally undefined the conventional value is `Some(0)`
/// or `None`; neither is ever read by the estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation<T> {
    pub w: Vec<T>,
    pub a: bool,
    pub s: Option<T>,
    pub y: bool,
    pub s_c: Option<T>,
    /// Phase-two membership.
    pub delta: bool,
    /// Phase-two sampling probability.
    pub pi: T,
}

impl<T: Real> Observation<T> {
    /// Fully observed (single-phase) record.
    pub fn new(w: Vec<T>, a: bool, s: Option<T>, y: bool, s_c: Option<T>) -> Self {
        Self {
            w,
            a,
            s,
            y,
            s_c,
            delta: true,
            pi: T::one(),
        }
    }

    pub fn with_phase_two(mut self, delta: bool, pi: T) -> Self {
        self.delta = delta;
        self.pi = pi;
        self
    }

    /// Untreated case: the crossover biomarker is never measured and
    /// phase-two membership is forced.
    pub fn is_untreated_case(&self) -> bool {
        !self.a && self.y
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiomarkerKind {
    Discrete,
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset<T> {
    pub observations: Vec<Observation<T>>,
    pub covariate_dim: usize,
    pub biomarker_kind: BiomarkerKind,
    /// Category labels when discrete biomarker values were ingested as text;
    /// value `c` stands for `labels[c]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

impl<T: Real> Dataset<T> {
    /// Takes the covariate dimension from the first observation. Coherence
    /// is checked by [`validate_dataset`], not here.
    pub fn new(observations: Vec<Observation<T>>, biomarker_kind: BiomarkerKind) -> Self {
        let covariate_dim = observations.first().map_or(0, |o| o.w.len());
        Self {
            observations,
            covariate_dim,
            biomarker_kind,
            labels: None,
        }
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Observation<T>> {
        self.observations.iter()
    }

    /// True if every subject is in phase two with probability one.
    pub fn is_single_phase(&self) -> bool {
        self.observations.iter().all(|o| o.delta && o.pi == T::one())
    }

    pub fn covariates(&self) -> Vec<&[T]> {
        self.observations.iter().map(|o| o.w.as_slice()).collect()
    }

    pub fn count_arm(&self, arm: bool) -> usize {
        self.observations.iter().filter(|o| o.a == arm).count()
    }
}

/// One of the three identified functionals.
///
/// `Marker` is the treated-arm probability (density) of the stratum,
/// `MarkerCase` the treated-arm joint probability with the endpoint, and
/// `CrossoverNonCase` the untreated-arm joint probability of no endpoint
/// and a crossover biomarker in the stratum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    Marker,
    MarkerCase,
    CrossoverNonCase,
}

impl Component {
    pub const ALL: [Component; 3] = [Component::Marker, Component::MarkerCase, Component::CrossoverNonCase];

    /// Zero-based position in the 3-vector.
    pub fn index(self) -> usize {
        match self {
            Component::Marker => 0,
            Component::MarkerCase => 1,
            Component::CrossoverNonCase => 2,
        }
    }

    /// Treatment arm whose regression identifies this component.
    pub fn arm(self) -> bool {
        !matches!(self, Component::CrossoverNonCase)
    }
}

/// Arm associated with component `k` (1-based, as in the usual notation).
pub fn arm_of(k: usize) -> Result<bool> {
    match k {
        1 | 2 => Ok(true),
        3 => Ok(false),
        _ => Err(Error::InvalidArgument(format!("component index {k} not in 1..=3"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContrastKind {
    LogRelativeRisk,
    VaccineEfficacy,
    RiskDifference,
    /// A single component of ψ (0-based index).
    RawPsi(usize),
}

impl std::str::FromStr for ContrastKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "log_relative_risk" | "log_rr" => Ok(Self::LogRelativeRisk),
            "vaccine_efficacy" | "ve" => Ok(Self::VaccineEfficacy),
            "risk_difference" | "rd" => Ok(Self::RiskDifference),
            other => match other.strip_prefix("raw_psi") {
                Some(k) => k
                    .trim_start_matches(['_', ':'])
                    .parse::<usize>()
                    .ok()
                    .filter(|k| (1..=3).contains(k))
                    .map(|k| Self::RawPsi(k - 1))
                    .ok_or_else(|| Error::Config(format!("bad raw_psi component in `{other}`"))),
                None => Err(Error::Config(format!("unknown contrast `{other}`"))),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth<T> {
    Fixed(T),
    /// Least-squares cross-validation for the treated-arm biomarker density.
    Lscv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec<T> {
    pub s1_star: T,
    pub contrast: ContrastKind,
    pub kernel: Option<KernelSpec>,
    pub bandwidth: Option<Bandwidth<T>>,
}

impl<T: Real> TargetSpec<T> {
    pub fn discrete(s1_star: T) -> Self {
        Self {
            s1_star,
            contrast: ContrastKind::LogRelativeRisk,
            kernel: None,
            bandwidth: None,
        }
    }

    pub fn continuous(s1_star: T, kernel: KernelSpec, h: T) -> Self {
        Self {
            s1_star,
            contrast: ContrastKind::LogRelativeRisk,
            kernel: Some(kernel),
            bandwidth: Some(Bandwidth::Fixed(h)),
        }
    }

    pub fn with_contrast(mut self, contrast: ContrastKind) -> Self {
        self.contrast = contrast;
        self
    }

    /// Kernel and fixed bandwidth, or an error if either is not set.
    pub fn smoothing(&self) -> Result<(KernelSpec, T)> {
        let kernel = self
            .kernel
            .ok_or_else(|| Error::InvalidArgument("continuous mode requires a kernel".into()))?;
        match self.bandwidth {
            Some(Bandwidth::Fixed(h)) => {
                check_bandwidth(h)?;
                Ok((kernel, h))
            }
            Some(Bandwidth::Lscv) => Err(Error::InvalidArgument(
                "bandwidth selector has not been resolved to a value".into(),
            )),
            None => Err(Error::InvalidArgument("continuous mode requires a bandwidth".into())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorMode {
    Tmle,
    CvTmle,
    IpwTmle,
    OneStep,
    ContinuousCvTmle,
}

impl std::str::FromStr for EstimatorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tmle" => Ok(Self::Tmle),
            "cv_tmle" => Ok(Self::CvTmle),
            "ipw_tmle" => Ok(Self::IpwTmle),
            "one_step" => Ok(Self::OneStep),
            "continuous_cv_tmle" => Ok(Self::ContinuousCvTmle),
            other => Err(Error::Config(format!("unknown estimator mode `{other}`"))),
        }
    }
}

/// Estimate of the 3-vector ψ together with its influence-function rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsiEstimate<T> {
    pub psi: [T; 3],
    /// Per-subject influence-function evaluations. In two-phase modes these
    /// already carry the inverse sampling weights.
    pub influence_rows: Vec<[T; 3]>,
    /// Empirical covariance of `influence_rows` (divisor n).
    pub sigma: [[T; 3]; 3],
    pub epsilons: [T; 3],
    pub mode: EstimatorMode,
    pub bandwidth_used: Option<T>,
    /// Weighted empirical score of each targeting step, divided by n.
    pub scores: [T; 3],
    /// False when the targeted case regression exceeds the targeted marker
    /// regression somewhere, so no single distribution reproduces ψ̂.
    pub compatible: Option<bool>,
}

impl<T: Real> PsiEstimate<T> {
    pub fn n(&self) -> usize {
        self.influence_rows.len()
    }

    pub fn sigma_matrix(&self) -> crate::linalg::Matrix<T> {
        crate::linalg::Matrix::from_rows(&self.sigma.iter().map(|r| r.to_vec()).collect::<Vec<_>>())
    }

    /// Mean of the influence rows per component.
    pub fn influence_means(&self) -> [T; 3] {
        let n = T::of_usize(self.n().max(1));
        let mut m = [T::zero(); 3];
        for r in &self.influence_rows {
            for k in 0..3 {
                m[k] += r[k];
            }
        }
        m.map(|v| v / n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics<T> {
    pub eif_mean_max_abs: T,
    pub psi4_hat: Option<T>,
    pub min_eigenvalue_sigma: T,
    /// ψ̂₁ − ψ̂₃.
    pub denominator: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastReport<T> {
    pub kind: ContrastKind,
    pub estimate: T,
    pub std_error: T,
    pub ci_lower: T,
    pub ci_upper: T,
    pub gradient: [T; 3],
    pub diagnostics: Diagnostics<T>,
}

impl<T: Real> ContrastReport<T> {
    pub fn covers(&self, truth: T) -> bool {
        self.ci_lower <= truth && truth <= self.ci_upper
    }
}

/// A dataset invariant that does not hold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub row: Option<usize>,
    pub field: String,
    pub message: String,
}

impl Violation {
    fn at(row: usize, field: &str, message: impl Into<String>) -> Self {
        Self {
            row: Some(row),
            field: field.into(),
            message: message.into(),
        }
    }

    fn global(field: &str, message: impl Into<String>) -> Self {
        Self {
            row: None,
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.row {
            Some(r) => write!(f, "row {r}, `{}`: {}", self.field, self.message),
            None => write!(f, "`{}`: {}", self.field, self.message),
        }
    }
}

/// Every invariant violation in `d`, with row indices. Empty means valid.
pub fn validate_dataset<T: Real>(d: &Dataset<T>) -> Vec<Violation> {
    let mut out = Vec::new();
    if d.is_empty() {
        out.push(Violation::global("observations", "dataset is empty"));
        return out;
    }
    if d.covariate_dim == 0 {
        out.push(Violation::global("w", "covariate dimension must be positive"));
    }
    let mut arms = [false; 2];
    for (i, o) in d.iter().enumerate() {
        arms[o.a as usize] = true;
        if o.w.len() != d.covariate_dim {
            out.push(Violation::at(
                i,
                "w",
                format!("has {} covariates, expected {}", o.w.len(), d.covariate_dim),
            ));
        }
        if o.w.iter().any(|x| !x.is_finite()) {
            out.push(Violation::at(i, "w", "non-finite covariate"));
        }
        if !(o.pi > T::zero() && o.pi <= T::one()) {
            out.push(Violation::at(i, "pi", format!("{} is outside (0, 1]", o.pi)));
        }
        if o.is_untreated_case() {
            if !o.delta {
                out.push(Violation::at(i, "delta", "untreated cases are always in phase two"));
            }
            if o.pi != T::one() {
                out.push(Violation::at(i, "pi", "untreated cases have sampling probability 1"));
            }
        }
        if o.delta {
            if o.a && o.s.is_none() {
                out.push(Violation::at(i, "s", "missing for a treated phase-two subject"));
            }
            if !o.a && !o.y && o.s_c.is_none() {
                out.push(Violation::at(i, "s_c", "missing for an untreated phase-two non-case"));
            }
        }
        for (field, v) in [("s", o.s), ("s_c", o.s_c)] {
            if let Some(v) = v {
                if !v.is_finite() {
                    out.push(Violation::at(i, field, "non-finite biomarker"));
                } else if d.biomarker_kind == BiomarkerKind::Discrete && v.fract() != T::zero() {
                    out.push(Violation::at(
                        i,
                        field,
                        format!("{v} is not a category code; discrete biomarkers must be labels or integers"),
                    ));
                }
            }
        }
    }
    if !arms[1] {
        out.push(Violation::global("a", "no treated subjects"));
    }
    if !arms[0] {
        out.push(Violation::global("a", "no untreated subjects"));
    }
    out
}

pub(crate) fn ensure_valid<T: Real>(d: &Dataset<T>) -> Result<()> {
    let v = validate_dataset(d);
    if v.is_empty() {
        Ok(())
    } else {
        Err(Error::Validation(v))
    }
}

/// Pseudo-outcome `f_k(o)` (discrete) or `f_{k,h}(o)` (continuous).
///
/// Subjects outside the arm of `k` contribute zero. Requesting the
/// pseudo-outcome of a subject outside phase two is an error.
pub fn pseudo_outcome<T: Real>(
    o: &Observation<T>,
    k: Component,
    spec: &TargetSpec<T>,
    kind: BiomarkerKind,
) -> Result<T> {
    if !o.delta {
        return Err(Error::InvalidArgument(
            "pseudo-outcome is undefined outside phase two".into(),
        ));
    }
    if o.a != k.arm() {
        return Ok(T::zero());
    }
    let (marker, column) = match k {
        Component::Marker => (Some(o.s), "s"),
        Component::MarkerCase => (o.y.then_some(o.s), "s"),
        Component::CrossoverNonCase => ((!o.y).then_some(o.s_c), "s_c"),
    };
    let Some(value) = marker else {
        return Ok(T::zero());
    };
    let value = value.ok_or_else(|| Error::Data {
        row: None,
        column: column.into(),
        message: "biomarker missing for a phase-two subject".into(),
    })?;
    match kind {
        BiomarkerKind::Discrete => Ok(if value == spec.s1_star { T::one() } else { T::zero() }),
        BiomarkerKind::Continuous => {
            let (kernel, h) = spec.smoothing()?;
            Ok(kernel.unit((value - spec.s1_star) / h) / h)
        }
    }
}

/// Pseudo-outcomes for every subject; zero outside phase two (those rows
/// always carry zero weight).
pub(crate) fn pseudo_outcomes<T: Real>(d: &Dataset<T>, k: Component, spec: &TargetSpec<T>) -> Result<Vec<T>> {
    d.iter()
        .enumerate()
        .map(|(i, o)| {
            if !o.delta {
                return Ok(T::zero());
            }
            pseudo_outcome(o, k, spec, d.biomarker_kind).map_err(|e| match e {
                Error::Data { column, message, .. } => Error::Data {
                    row: Some(i),
                    column,
                    message,
                },
                other => other,
            })
        })
        .collect()
}
