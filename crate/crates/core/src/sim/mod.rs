//! Simulation studies and numerical checks of the estimators.

pub mod coverage;
pub mod dgp;
pub mod stats;
pub mod subsample;
pub mod toy;
pub mod truth;

pub use coverage::{coverage_experiment, ContinuousCvTmle, CoverageDesign, CoverageEstimator, CoverageRow};
pub use dgp::{discretize, simulate_rep, simulate_trial, ArmAssignment, CrossoverRule, SimConfig};
pub use stats::{ks_standard_normal, mean_sd, whiten, KsResult};
pub use subsample::{two_phase_subsample, SamplingDesign};
pub use toy::{
    construct_compatible_counterfactual, empirical_toy, pathwise_derivative_check, random_counterfactual, random_direction,
    random_feasible_toy, random_infeasible_toy, treatment_score_direction, Cell, Construction, ConstructionChecks,
    CounterfactualToy, DiscreteToy, InfeasibilityCertificate, PathwiseReport,
};
pub use truth::{arm_risk, psi_curve, true_psi, true_psi_discretized, true_psi_smoothed, true_psi_smoothed_by_covariate};
