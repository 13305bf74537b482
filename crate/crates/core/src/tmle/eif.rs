use crate::model::Component;
use crate::scalar::Real;

/// One component of the efficient influence function,
/// `1{a=a_k}/P(a|w)·(f_k − E_k(w)) + E_k(w) − ψ_k`.
///
/// `prob_arm` is `P(A=a_k|w)`; it is only read when `a = a_k`.
#[inline]
pub fn eif_component<T: Real>(k: Component, a: bool, prob_arm: T, f: T, cond_mean: T, psi: T) -> T {
    let residual = if a == k.arm() {
        (f - cond_mean) / prob_arm
    } else {
        T::zero()
    };
    residual + cond_mean - psi
}

/// Full 3-vector of influence-function values at one observation.
pub fn eif_row<T: Real>(a: bool, prob_treated: T, f: [T; 3], cond_mean: [T; 3], psi: [T; 3]) -> [T; 3] {
    let mut out = [T::zero(); 3];
    for k in Component::ALL {
        let p = if k.arm() { prob_treated } else { T::one() - prob_treated };
        let i = k.index();
        out[i] = eif_component(k, a, p, f[i], cond_mean[i], psi[i]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn residual_enters_only_in_the_matching_arm() {
        let d = eif_row(true, 0.25, [1.0, 0.0, 1.0], [0.5, 0.2, 0.3], [0.4, 0.1, 0.2]);
        for (got, want) in d.iter().zip([2.1f64, -0.7, 0.1]) {
            assert!((got - want).abs() < 1e-15);
        }
    }
}
