use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::continuous::{cv_tmle_continuous, KernelSpec};
use crate::error::{Error, Result};
use crate::io::config::RunConfig;
use crate::model::{Bandwidth, BiomarkerKind, ContrastKind, Dataset, EstimatorMode, PsiEstimate, TargetSpec};
use crate::nuisance::FoldPlan;
use crate::sim::{
    construct_compatible_counterfactual, coverage_experiment, discretize, empirical_toy, pathwise_derivative_check,
    random_direction, simulate_trial, two_phase_subsample, ArmAssignment, Construction, ContinuousCvTmle,
    CoverageDesign, CoverageRow, CrossoverRule,
};
use crate::tmle::{
    contrast, cv_tmle_estimate, eif_diagnostics, estimate_psi4, fit_and_tmle, fit_biomarker_laws, smoothed_contrast,
};
use crate::two_phase::{ipw_tmle, one_step_estimate};

const DIAGNOSE_BOOTSTRAPS: usize = 20;
const MAX_COVARIATE_CELLS: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDiagnostics {
    pub eif_mean_max_abs: f64,
    pub min_eigenvalue_sigma: f64,
    pub eigenvalues: [f64; 3],
    pub degenerate: bool,
    /// `ψ̂₁ − ψ̂₃`.
    pub denominator: f64,
    pub scores: [f64; 3],
    pub compatible: Option<bool>,
    pub psi4_hat: Option<f64>,
}

/// JSON report of the `estimate` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub contrast: ContrastKind,
    pub estimate: f64,
    pub se: f64,
    pub ci: [f64; 2],
    pub psi: [f64; 3],
    pub sigma: [[f64; 3]; 3],
    pub epsilons: [f64; 3],
    pub diagnostics: ReportDiagnostics,
    pub bandwidth: Option<f64>,
    pub mode: EstimatorMode,
    pub seed: u64,
    pub n: usize,
}

fn target_spec(cfg: &RunConfig) -> TargetSpec<f64> {
    let e = &cfg.estimator;
    let mut spec = TargetSpec::discrete(e.s1_star).with_contrast(e.contrast);
    if e.mode == EstimatorMode::ContinuousCvTmle {
        spec.kernel = Some(KernelSpec::new(e.kernel));
        spec.bandwidth = Some(e.bandwidth.map_or(Bandwidth::Lscv, Bandwidth::Fixed));
    }
    spec
}

fn phase_two_weights(d: &Dataset<f64>) -> Vec<f64> {
    d.iter().map(|o| if o.delta { 1.0 / o.pi } else { 0.0 }).collect()
}

fn psi4_hat(d: &Dataset<f64>, cfg: &RunConfig) -> Option<f64> {
    if d.biomarker_kind != BiomarkerKind::Discrete {
        return None;
    }
    let r = fit_biomarker_laws(d, &phase_two_weights(d), &cfg.nuisance).and_then(|laws| estimate_psi4(d, &laws));
    match r {
        Ok(v) => Some(v),
        Err(e) => {
            log::warn!("crossover discrepancy could not be estimated: {e}");
            None
        }
    }
}

/// Estimate the configured contrast on `d`.
pub fn run_estimate(d: &Dataset<f64>, cfg: &RunConfig) -> Result<(PsiEstimate<f64>, EstimateReport)> {
    let cfg = cfg.resolved();
    cfg.validate()?;
    let spec = target_spec(&cfg);
    let nuis = &cfg.nuisance;
    let folds = || FoldPlan::stratified(d, cfg.estimator.folds, cfg.seed);
    let est = match cfg.estimator.mode {
        EstimatorMode::Tmle => fit_and_tmle(d, &spec, nuis)?.1,
        EstimatorMode::CvTmle => cv_tmle_estimate(d, &spec, &folds()?, nuis)?,
        EstimatorMode::IpwTmle => ipw_tmle(d, &spec, nuis)?,
        EstimatorMode::OneStep => one_step_estimate(d, &spec, nuis)?,
        EstimatorMode::ContinuousCvTmle => cv_tmle_continuous(d, &spec, &folds()?, nuis)?,
    };
    let rep = if est.mode == EstimatorMode::ContinuousCvTmle {
        smoothed_contrast(&est, spec.contrast)?
    } else {
        contrast(&est, spec.contrast)?
    };
    let diag = eif_diagnostics(&est);
    let report = EstimateReport {
        contrast: rep.kind,
        estimate: rep.estimate,
        se: rep.std_error,
        ci: [rep.ci_lower, rep.ci_upper],
        psi: est.psi,
        sigma: est.sigma,
        epsilons: est.epsilons,
        diagnostics: ReportDiagnostics {
            eif_mean_max_abs: diag.eif_mean_max_abs,
            min_eigenvalue_sigma: diag.min_eigenvalue_sigma,
            eigenvalues: diag.eigenvalues,
            degenerate: diag.degenerate,
            denominator: rep.diagnostics.denominator,
            scores: est.scores,
            compatible: est.compatible,
            psi4_hat: psi4_hat(d, &cfg),
        },
        bandwidth: est.bandwidth_used,
        mode: est.mode,
        seed: cfg.seed,
        n: d.len(),
    };
    Ok((est, report))
}

/// Falsifiability and pathwise checks on bootstrap replicates of the
/// empirical law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyDiagnostics {
    pub bootstraps: usize,
    /// Replicates for which a compatible counterfactual law was built.
    pub compatible: usize,
    /// Replicates with an infeasibility certificate.
    pub infeasible: usize,
    /// `(covariate cell, biomarker value, count)` over certificate witnesses.
    pub witnesses: Vec<(usize, f64, usize)>,
    /// Largest construction check error among compatible replicates.
    pub max_construction_error: f64,
    pub pathwise_checked: usize,
    /// Largest ratio of `defect(ε)/ε²` across the ε grid.
    pub max_pathwise_spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnoseReport {
    pub mode: EstimatorMode,
    pub n: usize,
    pub psi4_hat: Option<f64>,
    pub eif_mean_max_abs: f64,
    pub eigenvalues: [f64; 3],
    pub min_eigenvalue_sigma: f64,
    pub degenerate: bool,
    pub compatible: Option<bool>,
    pub toys: Option<ToyDiagnostics>,
    pub notes: Vec<String>,
}

fn toy_diagnostics(d: &Dataset<f64>, s1_star: f64, seed: u64) -> Result<ToyDiagnostics> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = ToyDiagnostics {
        bootstraps: DIAGNOSE_BOOTSTRAPS,
        compatible: 0,
        infeasible: 0,
        witnesses: Vec::new(),
        max_construction_error: 0.0,
        pathwise_checked: 0,
        max_pathwise_spread: 0.0,
    };
    for _ in 0..DIAGNOSE_BOOTSTRAPS {
        let obs: Vec<_> = (0..d.len())
            .map(|_| d.observations.choose(&mut rng).expect("nonempty").clone())
            .collect();
        let boot = Dataset::new(obs, d.biomarker_kind);
        let toy = empirical_toy(&boot, MAX_COVARIATE_CELLS)?;
        match construct_compatible_counterfactual(&toy)? {
            Construction::Compatible { checks, .. } => {
                out.compatible += 1;
                let err = [
                    -checks.min_density,
                    checks.max_normalization_error,
                    checks.max_margin_error,
                    checks.max_ignorability_error,
                    checks.max_crossover_error,
                ]
                .into_iter()
                .fold(0.0, f64::max);
                out.max_construction_error = out.max_construction_error.max(err);
            }
            Construction::Infeasible(cert) => {
                out.infeasible += 1;
                let (w, s) = cert.witness;
                let value = toy.s_values[s];
                match out.witnesses.iter_mut().find(|x| x.0 == w && x.1 == value) {
                    Some(x) => x.2 += 1,
                    None => out.witnesses.push((w, value, 1)),
                }
            }
        }
        let both_arms = (0..toy.nw()).all(|w| toy.p_aw(true, w) > 0.0 && toy.p_aw(false, w) > 0.0);
        if let (true, Some(j)) = (both_arms, toy.s_values.iter().position(|&v| v == s1_star)) {
            let h = random_direction(&toy, &mut rng);
            let r = pathwise_derivative_check(&toy, j, &h, &[1e-1, 1e-2, 1e-3])?;
            if r.ratios.iter().all(|&x| x > 0.0) {
                out.pathwise_checked += 1;
                out.max_pathwise_spread = out.max_pathwise_spread.max(r.ratio_spread());
            }
        }
    }
    out.witnesses.sort_by(|a, b| b.2.cmp(&a.2).then(a.0.cmp(&b.0)));
    Ok(out)
}

/// Identification and numerical diagnostics for `d`.
pub fn run_diagnose(d: &Dataset<f64>, cfg: &RunConfig) -> Result<DiagnoseReport> {
    let cfg = cfg.resolved();
    let (_, rep) = run_estimate(d, &cfg)?;
    let mut notes = Vec::new();
    let toys = if d.biomarker_kind == BiomarkerKind::Discrete {
        match toy_diagnostics(d, cfg.estimator.s1_star, cfg.seed) {
            Ok(t) => Some(t),
            Err(Error::UnsupportedMode(m)) => {
                notes.push(format!("bootstrap toy checks skipped: {m}"));
                None
            }
            Err(e) => return Err(e),
        }
    } else {
        notes.push("bootstrap toy checks need a discrete biomarker".into());
        None
    };
    let dg = rep.diagnostics;
    Ok(DiagnoseReport {
        mode: rep.mode,
        n: rep.n,
        psi4_hat: dg.psi4_hat,
        eif_mean_max_abs: dg.eif_mean_max_abs,
        eigenvalues: dg.eigenvalues,
        min_eigenvalue_sigma: dg.min_eigenvalue_sigma,
        degenerate: dg.degenerate,
        compatible: dg.compatible,
        toys,
        notes,
    })
}

/// Simulate one trial, optionally discretized and subsampled.
pub fn run_simulate(cfg: &RunConfig) -> Result<Dataset<f64>> {
    let cfg = cfg.resolved();
    cfg.validate()?;
    let mut d = simulate_trial(&cfg.simulation)?;
    if let Some(t) = cfg.simulate.discretize {
        d = discretize(&d, t);
    }
    if let Some(design) = cfg.simulate.design {
        d = two_phase_subsample(&d, design, cfg.seed.wrapping_add(1))?;
    }
    Ok(d)
}

/// Coverage study of the continuous-biomarker CV-TMLE over the configured
/// grid, on `workers` threads when set.
pub fn run_coverage(cfg: &RunConfig) -> Result<Vec<CoverageRow>> {
    let cfg = cfg.resolved();
    cfg.validate()?;
    let estimator = ContinuousCvTmle {
        folds: cfg.estimator.folds,
        nuisance: cfg.nuisance.clone(),
    };
    let design = CoverageDesign {
        s1_grid: cfg.coverage.s1_grid.clone(),
        bandwidths: cfg.coverage.bandwidths.clone(),
        kernel: KernelSpec::new(cfg.estimator.kernel),
    };
    let run = || coverage_experiment(&cfg.simulation, &estimator, &design);
    match cfg.workers {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(run),
        None => run(),
    }
}

/// Provenance written next to simulation and coverage outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub package: String,
    pub version: String,
    pub seed: u64,
    pub reps: usize,
    pub arm_assignment: ArmAssignment,
    pub crossover_rule: CrossoverRule,
    pub config: RunConfig,
}

impl Manifest {
    pub fn new(command: &str, cfg: &RunConfig) -> Self {
        let cfg = cfg.resolved();
        Self {
            command: command.into(),
            package: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed: cfg.seed,
            reps: cfg.simulation.reps,
            arm_assignment: cfg.simulation.assignment,
            crossover_rule: cfg.simulation.crossover_rule,
            config: cfg,
        }
    }
}
