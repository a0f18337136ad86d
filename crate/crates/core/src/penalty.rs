//! Group penalties on outlier vectors and their closed-form thresholding
//! operators.
//!
//! Every operator here acts on a vector `z` only through its Euclidean norm
//! and direction: `threshold(z) = c(‖z‖)·z` for a radial factor `c ∈ [0, 1]`.
//! The implied robust loss `ρ` is the Moreau envelope of the penalty and its
//! gradient is `psi(z) = z - threshold(z)`.

use ndarray::{Array1, ArrayView1, ArrayViewMut1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::norm2;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyFamily {
    GroupLasso,
    GroupScad,
    GroupMcp,
    MultiTukey,
}

impl PenaltyFamily {
    /// Short code used on the command line and in result tables.
    pub fn code(self) -> &'static str {
        match self {
            PenaltyFamily::GroupLasso => "gl",
            PenaltyFamily::GroupScad => "gs",
            PenaltyFamily::GroupMcp => "gm",
            PenaltyFamily::MultiTukey => "tukey",
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        match code {
            "gl" => Some(PenaltyFamily::GroupLasso),
            "gs" => Some(PenaltyFamily::GroupScad),
            "gm" => Some(PenaltyFamily::GroupMcp),
            "tukey" => Some(PenaltyFamily::MultiTukey),
            _ => None,
        }
    }

    /// Conventional shape parameter: 3.7 for SCAD, 3 for MCP.
    pub fn default_gamma(self) -> f64 {
        match self {
            PenaltyFamily::GroupScad => 3.7,
            PenaltyFamily::GroupMcp => 3.0,
            PenaltyFamily::GroupLasso | PenaltyFamily::MultiTukey => 0.0,
        }
    }

    pub fn is_convex(self) -> bool {
        matches!(self, PenaltyFamily::GroupLasso)
    }
}

/// Penalty family with threshold scale `lambda` and shape `gamma`.
///
/// `lambda` may be `+∞`, in which case every thresholding operator maps to
/// the zero vector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PenaltySpec<T> {
    pub family: PenaltyFamily,
    pub lambda: T,
    pub gamma: T,
}

impl<T: Real> PenaltySpec<T> {
    pub fn new(family: PenaltyFamily, lambda: T, gamma: T) -> Result<Self> {
        let spec = PenaltySpec {
            family,
            lambda,
            gamma,
        };
        spec.validate()?;
        if family == PenaltyFamily::MultiTukey && gamma != T::zero() && !gamma.is_nan() {
            log::warn!("gamma = {gamma} is ignored by the multivariate Tukey penalty");
        }
        Ok(spec)
    }

    pub fn group_lasso(lambda: T) -> Result<Self> {
        Self::new(PenaltyFamily::GroupLasso, lambda, T::zero())
    }

    pub fn group_scad(lambda: T, gamma: T) -> Result<Self> {
        Self::new(PenaltyFamily::GroupScad, lambda, gamma)
    }

    pub fn group_mcp(lambda: T, gamma: T) -> Result<Self> {
        Self::new(PenaltyFamily::GroupMcp, lambda, gamma)
    }

    pub fn multi_tukey(lambda: T) -> Result<Self> {
        Self::new(PenaltyFamily::MultiTukey, lambda, T::zero())
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda.is_nan() || self.lambda < T::zero() {
            return Err(Error::invalid(format!(
                "penalty lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        match self.family {
            PenaltyFamily::GroupScad if !(self.gamma > T::lit(2.0)) => Err(Error::invalid(
                format!("group SCAD requires gamma > 2, got {}", self.gamma),
            )),
            PenaltyFamily::GroupMcp if !(self.gamma > T::one()) => Err(Error::invalid(format!(
                "group MCP requires gamma > 1, got {}",
                self.gamma
            ))),
            _ => Ok(()),
        }
    }

    /// Same family and shape with a different threshold scale. The caller
    /// guarantees `lambda >= 0`.
    pub fn with_lambda(&self, lambda: T) -> Self {
        PenaltySpec { lambda, ..*self }
    }

    /// Radial factor `c(t)` with `threshold(z) = c(‖z‖)·z`.
    pub fn shrink_factor(&self, t: T) -> T {
        let zero = T::zero();
        let one = T::one();
        if t <= zero {
            return zero;
        }
        let lam = self.lambda;
        let soft = |level: T| {
            if t <= level {
                zero
            } else {
                one - level / t
            }
        };
        match self.family {
            PenaltyFamily::GroupLasso => soft(lam),
            PenaltyFamily::GroupScad => {
                let g = self.gamma;
                if t <= T::lit(2.0) * lam {
                    soft(lam)
                } else if t <= g * lam {
                    (g - one) / (g - T::lit(2.0)) * soft(g * lam / (g - one))
                } else {
                    one
                }
            }
            PenaltyFamily::GroupMcp => {
                let g = self.gamma;
                if t <= g * lam {
                    g / (g - one) * soft(lam)
                } else {
                    one
                }
            }
            PenaltyFamily::MultiTukey => {
                if t <= lam {
                    let r = one - (t / lam) * (t / lam);
                    one - r * r
                } else {
                    one
                }
            }
        }
    }

    /// Robust loss `ρ(t)` as a function of the radius `t = ‖z‖`.
    pub fn robust_loss_radial(&self, t: T) -> T {
        let half = T::lit(0.5);
        let one = T::one();
        let two = T::lit(2.0);
        let lam = self.lambda;
        match self.family {
            PenaltyFamily::GroupLasso => {
                if t <= lam {
                    half * t * t
                } else {
                    lam * t - half * lam * lam
                }
            }
            PenaltyFamily::GroupScad => {
                let g = self.gamma;
                if t <= lam {
                    half * t * t
                } else if t < two * lam {
                    lam * t - half * lam * lam
                } else if t <= g * lam {
                    g * lam / (g - two) * t
                        - t * t / (two * (g - two))
                        - (g + two) / (two * (g - two)) * lam * lam
                } else {
                    (g + one) * half * lam * lam
                }
            }
            PenaltyFamily::GroupMcp => {
                let g = self.gamma;
                if t <= lam {
                    half * t * t
                } else if t <= g * lam {
                    g * lam / (g - one) * t
                        - t * t / (two * (g - one))
                        - g * lam * lam / (two * (g - one))
                } else {
                    g * lam * lam * half
                }
            }
            PenaltyFamily::MultiTukey => {
                if t <= lam {
                    let r = one - (t / lam) * (t / lam);
                    one - r * r * r
                } else {
                    one
                }
            }
        }
    }

    /// Penalty `P(o)` as a function of the radius `θ = ‖o‖`.
    ///
    /// For the multivariate Tukey family the penalty has no elementary
    /// closed form; it is recovered from the radial thresholding map
    /// `f(t) = c(t)·t` through `P(f(t)) = E(t) - (t - f(t))²/2`, where
    /// `E(t) = λ²/6·(1 - (1 - t²/λ²)³)` is the envelope whose gradient is
    /// `psi`.
    pub fn penalty_radial(&self, theta: T) -> T {
        if theta <= T::zero() {
            return T::zero();
        }
        let half = T::lit(0.5);
        let one = T::one();
        let two = T::lit(2.0);
        let lam = self.lambda;
        match self.family {
            PenaltyFamily::GroupLasso => lam * theta,
            PenaltyFamily::GroupScad => {
                let g = self.gamma;
                if theta <= lam {
                    lam * theta
                } else if theta <= g * lam {
                    (two * g * lam * theta - theta * theta - lam * lam) / (two * (g - one))
                } else {
                    (g + one) * lam * lam * half
                }
            }
            PenaltyFamily::GroupMcp => {
                let g = self.gamma;
                if theta <= g * lam {
                    lam * theta - theta * theta / (two * g)
                } else {
                    g * lam * lam * half
                }
            }
            PenaltyFamily::MultiTukey => {
                let sixth = lam * lam / T::lit(6.0);
                if theta >= lam {
                    return sixth;
                }
                let t = self.tukey_radial_inverse(theta);
                let r = one - (t / lam) * (t / lam);
                sixth * (one - r * r * r) - half * (t - theta) * (t - theta)
            }
        }
    }

    /// Inverse of the strictly increasing map `t ↦ c(t)·t` on `[0, λ]`.
    fn tukey_radial_inverse(&self, theta: T) -> T {
        let lam = self.lambda;
        let (mut lo, mut hi) = (T::zero(), lam);
        for _ in 0..200 {
            let mid = (lo + hi) * T::lit(0.5);
            if self.shrink_factor(mid) * mid < theta {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= T::epsilon() * lam {
                break;
            }
        }
        (lo + hi) * T::lit(0.5)
    }

    /// Applies the thresholding operator to `z` in place without input
    /// validation.
    pub fn threshold_in_place(&self, mut z: ArrayViewMut1<'_, T>) {
        let c = self.shrink_factor(norm2(z.view()));
        z.mapv_inplace(|v| v * c);
    }
}

fn check_finite<T: Real>(z: ArrayView1<'_, T>) -> Result<()> {
    if z.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::invalid("group vector has non-finite entries"))
    }
}

/// `max(0, 1 - λ/‖z‖)·z`, with `S(0) = 0`.
pub fn group_soft_threshold<T: Real>(z: ArrayView1<'_, T>, lambda: T) -> Result<Array1<T>> {
    check_finite(z)?;
    let spec = PenaltySpec::group_lasso(lambda)?;
    let c = spec.shrink_factor(norm2(z));
    Ok(z.mapv(|v| v * c))
}

/// Group-thresholding operator `Θ(z; λ, γ)` of the penalty family.
pub fn threshold<T: Real>(z: ArrayView1<'_, T>, spec: &PenaltySpec<T>) -> Result<Array1<T>> {
    check_finite(z)?;
    spec.validate()?;
    let c = spec.shrink_factor(norm2(z));
    Ok(z.mapv(|v| v * c))
}

/// Multivariate score `ψ(z) = z - Θ(z)`.
pub fn psi<T: Real>(z: ArrayView1<'_, T>, spec: &PenaltySpec<T>) -> Result<Array1<T>> {
    let theta = threshold(z, spec)?;
    Ok(&z - &theta)
}

/// Multivariate robust loss `ρ(z)`; multivariate Huber for the group lasso.
pub fn robust_loss<T: Real>(z: ArrayView1<'_, T>, spec: &PenaltySpec<T>) -> Result<T> {
    check_finite(z)?;
    spec.validate()?;
    Ok(spec.robust_loss_radial(norm2(z)))
}

/// Penalty value `P(o; λ, γ)`.
pub fn penalty_value<T: Real>(o: ArrayView1<'_, T>, spec: &PenaltySpec<T>) -> Result<T> {
    check_finite(o)?;
    spec.validate()?;
    Ok(spec.penalty_radial(norm2(o)))
}

/// Euclidean projection onto the ball of radius `radius`:
/// `min(‖z‖, radius)·z/‖z‖`, extended by continuity to `0` at `z = 0`.
pub fn project_ball<T: Real>(mut z: ArrayViewMut1<'_, T>, radius: T) {
    let n = norm2(z.view());
    if n > radius {
        let c = if n > T::zero() { radius / n } else { T::zero() };
        z.mapv_inplace(|v| v * c);
    }
}
