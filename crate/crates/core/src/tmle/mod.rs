//! Targeted estimation of ψ for discrete biomarkers, influence-function
//! covariance, and delta-method contrasts.

pub mod contrast;
pub mod diagnostics;
pub mod discrete;
pub mod eif;
pub mod fluctuation;
pub mod psi4;
pub(crate) mod target;

pub use contrast::{contrast, gamma, gamma_gradient, smoothed_contrast, smoothed_se_bandwidth_scaled};
pub use diagnostics::{eif_diagnostics, EifDiagnostics};
pub use discrete::{cv_tmle_estimate, cv_tmle_from_fits, fit_and_tmle, tmle_estimate};
pub use eif::{eif_component, eif_row};
pub use fluctuation::{closed_form_log_fluctuation, solve_logistic_fluctuation};
pub use psi4::{estimate_psi4, fit_biomarker_laws, psi4_term, BiomarkerLaws};
