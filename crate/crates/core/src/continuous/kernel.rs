use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::normal_pdf;
use crate::scalar::Real;

/// Kernel family. All kernels are normalized to integrate to one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    /// `1{-1/2 <= u <= 1/2}`.
    Uniform,
    /// Standard normal density.
    Gaussian,
    /// Fourth-order Gaussian, `(3 - u²) φ(u) / 2`.
    Gaussian4,
}

impl std::str::FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "gaussian" => Ok(Self::Gaussian),
            "gaussian4" => Ok(Self::Gaussian4),
            other => Err(Error::Config(format!("unknown kernel `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
}

impl KernelSpec {
    pub const UNIFORM: Self = Self { family: KernelFamily::Uniform };
    pub const GAUSSIAN: Self = Self { family: KernelFamily::Gaussian };
    pub const GAUSSIAN4: Self = Self { family: KernelFamily::Gaussian4 };

    pub fn new(family: KernelFamily) -> Self {
        Self { family }
    }

    /// Order r: the first nonvanishing moment beyond the zeroth.
    pub fn order(&self) -> u32 {
        match self.family {
            KernelFamily::Uniform | KernelFamily::Gaussian => 2,
            KernelFamily::Gaussian4 => 4,
        }
    }

    /// Half-width (in units of h) outside which the kernel is zero or
    /// numerically negligible.
    pub fn support_radius<T: Real>(&self) -> T {
        match self.family {
            KernelFamily::Uniform => T::of(0.5),
            KernelFamily::Gaussian | KernelFamily::Gaussian4 => T::of(8.0),
        }
    }

    /// Unscaled kernel K(u).
    pub fn unit<T: Real>(&self, u: T) -> T {
        match self.family {
            KernelFamily::Uniform => {
                if u.abs() <= T::of(0.5) {
                    T::one()
                } else {
                    T::zero()
                }
            }
            KernelFamily::Gaussian => normal_pdf(u, T::zero(), T::one()),
            KernelFamily::Gaussian4 => {
                (T::of(3.0) - u * u) * normal_pdf(u, T::zero(), T::one()) / T::of(2.0)
            }
        }
    }

    /// Self-convolution `(K * K)(u) = ∫ K(t) K(u - t) dt`, in closed form.
    pub fn self_convolution<T: Real>(&self, u: T) -> T {
        match self.family {
            KernelFamily::Uniform => (T::one() - u.abs()).max(T::zero()),
            KernelFamily::Gaussian => normal_pdf(u, T::zero(), T::SQRT_2()),
            KernelFamily::Gaussian4 => {
                // φ(t)φ(u-t) = φ_{√2}(u)·N(t; u/2, 1/2); take moments of that normal.
                let m = u / T::of(2.0);
                let v = T::of(0.5);
                let m2 = m * m;
                let poly = T::of(9.0) / T::of(4.0) - T::of(1.5) * (m2 + v)
                    + (m2 * m2 - T::of(2.0) * m2 * v + T::of(3.0) * v * v) / T::of(4.0);
                normal_pdf(u, T::zero(), T::SQRT_2()) * poly
            }
        }
    }
}

/// `K_h(x) = h⁻¹ K(x / h)`.
pub fn kernel_eval<T: Real>(spec: &KernelSpec, h: T, x: T) -> Result<T> {
    check_bandwidth(h)?;
    Ok(spec.unit(x / h) / h)
}

pub(crate) fn check_bandwidth<T: Real>(h: T) -> Result<()> {
    if h > T::zero() && h.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidBandwidth(h.as_f64()))
    }
}
