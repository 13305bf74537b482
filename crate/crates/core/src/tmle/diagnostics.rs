use serde::{Deserialize, Serialize};

use crate::linalg::symmetric_eigen;
use crate::model::PsiEstimate;
use crate::scalar::Real;

const DEGENERATE_RELATIVE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EifDiagnostics<T> {
    /// `max_k |(1/n) Σᵢ D̂ₖ(Oᵢ)|`.
    pub eif_mean_max_abs: T,
    pub min_eigenvalue_sigma: T,
    /// Eigenvalues of Σ̂ in ascending order.
    pub eigenvalues: [T; 3],
    /// Σ̂ is numerically singular relative to its largest eigenvalue.
    pub degenerate: bool,
}

pub fn eif_diagnostics<T: Real>(est: &PsiEstimate<T>) -> EifDiagnostics<T> {
    let eif_mean_max_abs = est
        .influence_means()
        .iter()
        .fold(T::zero(), |m, v| m.max(v.abs()));
    let (vals, _) = symmetric_eigen(&est.sigma_matrix());
    let eigenvalues = [vals[0], vals[1], vals[2]];
    let scale = eigenvalues[2].abs().max(T::one());
    EifDiagnostics {
        eif_mean_max_abs,
        min_eigenvalue_sigma: eigenvalues[0],
        eigenvalues,
        degenerate: eigenvalues[0] <= T::of(DEGENERATE_RELATIVE) * scale,
    }
}
