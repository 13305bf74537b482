use rayon::prelude::*;

use crate::continuous::kernel::{check_bandwidth, KernelSpec};
use crate::error::{Error, Result};
use crate::model::{Bandwidth, Dataset};
use crate::scalar::Real;

pub const LSCV_GRID_SIZE: usize = 30;
pub const LSCV_MIN_TREATED: usize = 20;

/// Treated phase-two biomarker values.
fn treated_markers<T: Real>(d: &Dataset<T>) -> Vec<T> {
    d.iter().filter(|o| o.a && o.delta).filter_map(|o| o.s).collect()
}

/// Least-squares cross-validation criterion
/// `∫ f̂² − (2/m) Σᵢ f̂₋ᵢ(xᵢ)` for a kernel density estimate.
pub fn lscv_criterion<T: Real>(x: &[T], kernel: &KernelSpec, h: T) -> T {
    let m = x.len();
    let mt = T::of_usize(m);
    let (mut conv, mut loo) = (T::zero(), T::zero());
    for i in 0..m {
        for j in (i + 1)..m {
            let u = (x[i] - x[j]) / h;
            conv += kernel.self_convolution(u);
            loo += kernel.unit(u);
        }
    }
    let two = T::of(2.0);
    let integral = (mt * kernel.self_convolution(T::zero()) + two * conv) / (mt * mt * h);
    let loo_mean = two * loo / (mt * (mt - T::one()) * h);
    integral - two * loo_mean
}

/// Candidate bandwidths `[0.05, 5] · σ̂ · m^{-1/5}`, log-spaced, with their
/// criterion values.
pub fn lscv_grid<T: Real>(d: &Dataset<T>, kernel: &KernelSpec) -> Result<Vec<(T, T)>> {
    let x = treated_markers(d);
    let m = x.len();
    if m < LSCV_MIN_TREATED {
        return Err(Error::InvalidArgument(format!(
            "bandwidth selection needs at least {LSCV_MIN_TREATED} treated subjects with observed S, found {m}"
        )));
    }
    let mt = T::of_usize(m);
    let mean = x.iter().copied().sum::<T>() / mt;
    let sd = (x.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / (mt - T::one())).sqrt();
    if !(sd > T::zero()) {
        return Err(Error::DegenerateBiomarker("treated biomarker has zero variance".into()));
    }
    let base = sd * mt.powf(T::of(-0.2));
    let (lo, hi) = ((T::of(0.05) * base).ln(), (T::of(5.0) * base).ln());
    let step = (hi - lo) / T::of_usize(LSCV_GRID_SIZE - 1);
    Ok((0..LSCV_GRID_SIZE)
        .into_par_iter()
        .map(|g| {
            let h = (lo + step * T::of_usize(g)).exp();
            (h, lscv_criterion(&x, kernel, h))
        })
        .collect())
}

/// Resolve a bandwidth rule to a value.
pub fn select_bandwidth<T: Real>(d: &Dataset<T>, rule: Bandwidth<T>, kernel: &KernelSpec) -> Result<T> {
    match rule {
        Bandwidth::Fixed(h) => {
            check_bandwidth(h)?;
            Ok(h)
        }
        Bandwidth::Lscv => {
            let grid = lscv_grid(d, kernel)?;
            let best = grid
                .iter()
                .filter(|(_, c)| c.is_finite())
                .min_by(|a, b| a.1.partial_cmp(&b.1).expect("finite criterion"))
                .ok_or_else(|| Error::DegenerateBiomarker("no finite LSCV criterion value".into()))?;
            Ok(best.0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BiomarkerKind, Observation};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn treated_sample(values: &[f64]) -> Dataset<f64> {
        let mut obs: Vec<_> = values
            .iter()
            .map(|&s| Observation::new(vec![0.0], true, Some(s), false, Some(0.0)))
            .collect();
        obs.push(Observation::new(vec![0.0], false, Some(0.0), false, Some(0.0)));
        Dataset::new(obs, BiomarkerKind::Continuous)
    }

    fn normal_dataset(n: usize, seed: u64) -> Dataset<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        treated_sample(&x)
    }

    #[test]
    fn fixed_rule_is_passed_through() {
        let d = normal_dataset(30, 1);
        assert_eq!(select_bandwidth(&d, Bandwidth::Fixed(0.2), &KernelSpec::GAUSSIAN).unwrap(), 0.2);
        assert!(select_bandwidth(&d, Bandwidth::Fixed(-1.0), &KernelSpec::GAUSSIAN).is_err());
    }

    #[test]
    fn normal_sample_lands_near_silverman() {
        let d = normal_dataset(1000, 11);
        let h = select_bandwidth(&d, Bandwidth::Lscv, &KernelSpec::GAUSSIAN).unwrap();
        let silverman = 1.06 * 1000f64.powf(-0.2);
        assert!(h >= 0.5 * silverman && h <= 2.0 * silverman, "h = {h}");
    }

    #[test]
    fn selected_bandwidth_is_a_grid_minimum() {
        let d = normal_dataset(200, 4);
        let grid = lscv_grid(&d, &KernelSpec::GAUSSIAN).unwrap();
        let h = select_bandwidth(&d, Bandwidth::Lscv, &KernelSpec::GAUSSIAN).unwrap();
        let at = grid.iter().position(|(g, _)| *g == h).unwrap();
        for nb in [at.wrapping_sub(1), at + 1] {
            if let Some((_, c)) = grid.get(nb) {
                assert!(grid[at].1 <= *c);
            }
        }
    }

    #[test]
    fn criterion_matches_numerical_integration() {
        let x = [0.1, -0.4, 0.7, 1.2, 0.0];
        let k = KernelSpec::GAUSSIAN;
        let h = 0.3;
        let fhat = |t: f64| x.iter().map(|&xi| k.unit((t - xi) / h) / h).sum::<f64>() / x.len() as f64;
        let int = crate::quadrature::adaptive_simpson(|t| fhat(t).powi(2), -5.0, 6.0, 1e-13);
        let m = x.len() as f64;
        let loo: f64 = (0..x.len())
            .map(|i| {
                (0..x.len())
                    .filter(|&j| j != i)
                    .map(|j| k.unit((x[i] - x[j]) / h) / h)
                    .sum::<f64>()
                    / (m - 1.0)
            })
            .sum::<f64>()
            / m;
        assert!((lscv_criterion(&x, &k, h) - (int - 2.0 * loo)).abs() < 1e-10);
    }

    #[test]
    fn constant_biomarker_is_degenerate() {
        let d = treated_sample(&[0.5; 25]);
        assert!(matches!(
            select_bandwidth(&d, Bandwidth::Lscv, &KernelSpec::GAUSSIAN),
            Err(Error::DegenerateBiomarker(_))
        ));
    }

    #[test]
    fn too_few_treated_is_rejected() {
        let d = treated_sample(&[0.1, 0.2, 0.3]);
        assert!(select_bandwidth(&d, Bandwidth::Lscv, &KernelSpec::GAUSSIAN).is_err());
    }
}
