//! Kernel-smoothed parameters for continuous biomarkers.

pub mod bandwidth;
pub mod bias;
pub mod estimator;
pub mod kernel;

pub use bandwidth::{lscv_criterion, lscv_grid, select_bandwidth};
pub use bias::{bias_decay_probe, smoothed_truth, BiasProbe, PsiCurve};
pub use estimator::{continuous_from_fits, cv_tmle_continuous, resolve_bandwidth};
pub use kernel::{kernel_eval, KernelFamily, KernelSpec};
