//! Numerical integration used by the kernel machinery and the simulation
//! ground truths.

use std::num::NonZeroUsize;
use std::sync::OnceLock;

use gauss_quad::GaussHermite;

use crate::scalar::Real;

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<T: Real, F: Fn(T) -> T>(f: F, a: T, b: T, tol: T) -> T {
    let two = T::of(2.0);
    // Seed with a few panels so narrow features inside wide intervals are seen.
    let panels = 16;
    let width = (b - a) / T::of_usize(panels);
    let mut total = T::zero();
    let local_tol = tol / T::of_usize(panels);
    for p in 0..panels {
        let lo = a + width * T::of_usize(p);
        let hi = if p + 1 == panels { b } else { lo + width };
        let mid = (lo + hi) / two;
        let (flo, fmid, fhi) = (f(lo), f(mid), f(hi));
        let s = simpson(lo, hi, flo, fmid, fhi);
        total += recurse(&f, lo, hi, flo, fmid, fhi, s, local_tol, 50);
    }
    total
}

#[inline]
fn simpson<T: Real>(a: T, b: T, fa: T, fm: T, fb: T) -> T {
    (b - a) / T::of(6.0) * (fa + T::of(4.0) * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn recurse<T: Real, F: Fn(T) -> T>(
    f: &F,
    a: T,
    b: T,
    fa: T,
    fm: T,
    fb: T,
    whole: T,
    tol: T,
    depth: u32,
) -> T {
    let two = T::of(2.0);
    let m = (a + b) / two;
    let lm = (a + m) / two;
    let rm = (m + b) / two;
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= T::of(15.0) * tol {
        return left + right + delta / T::of(15.0);
    }
    recurse(f, a, m, fa, flm, fm, left, tol / two, depth - 1)
        + recurse(f, m, b, fm, frm, fb, right, tol / two, depth - 1)
}

/// Default Gauss–Hermite rule size for Gaussian-covariate expectations.
pub const HERMITE_NODES: usize = 64;

fn hermite64() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| hermite_rule(HERMITE_NODES))
}

/// Nodes and weights for `∫ e^{-x²} g(x) dx`.
pub fn hermite_rule(nodes: usize) -> Vec<(f64, f64)> {
    let deg = NonZeroUsize::new(nodes).expect("at least one node");
    GaussHermite::new(deg).iter().map(|(x, w)| (*x, *w)).collect()
}

/// `E[g(X)]` for `X ~ N(mean, sd²)` by 64-node Gauss–Hermite quadrature.
pub fn normal_expectation<T: Real, F: Fn(T) -> T>(g: F, mean: T, sd: T) -> T {
    let root2 = T::SQRT_2();
    let norm = T::one() / T::PI().sqrt();
    hermite64()
        .iter()
        .map(|&(x, w)| T::of(w) * g(mean + root2 * sd * T::of(x)))
        .sum::<T>()
        * norm
}

/// Normal density.
#[inline]
pub fn normal_pdf<T: Real>(x: T, mean: T, sd: T) -> T {
    let z = (x - mean) / sd;
    (-(z * z) / T::of(2.0)).exp() / (sd * (T::of(2.0) * T::PI()).sqrt())
}
