//! Bounded Gaussian noise and the two-state OU-type filter that smooths it.
//!
//! The pipeline is `v → w → y`: `v` is drawn from a Gaussian truncated to
//! `[alpha, beta]`, `w` is a mean-reverting integrator of `v`, and `y` is a
//! fast first-order lag of `w`. Only `y` is ever added to a funnel boundary.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::num::{lit, std_normal_cdf, std_normal_pdf, to_f64, Real};

/// Retry cap for the rejection sampler.
pub const MAX_REJECTIONS: u64 = 1_000_000;

/// Gaussian `N(mu, sigma²)` restricted and renormalised to `[alpha, beta]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncatedGaussianParams<T> {
    pub mu: T,
    pub sigma: T,
    pub alpha: T,
    pub beta: T,
}

impl<T: Real> TruncatedGaussianParams<T> {
    pub fn new(mu: T, sigma: T, alpha: T, beta: T) -> Result<Self> {
        let p = Self { mu, sigma, alpha, beta };
        p.validate()?;
        Ok(p)
    }

    /// Zero-mean symmetric bounds `[-bound, bound]`.
    pub fn symmetric(sigma: T, bound: T) -> Result<Self> {
        Self::new(T::zero(), sigma, -bound, bound)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mu.is_finite() {
            return Err(invalid("noise mu must be finite"));
        }
        if !(self.sigma > T::zero()) || !self.sigma.is_finite() {
            return Err(invalid(format!("noise sigma must be > 0, got {}", self.sigma)));
        }
        if !self.alpha.is_finite() || !self.beta.is_finite() {
            return Err(invalid("noise bounds must be finite"));
        }
        if !(self.alpha < self.beta) {
            return Err(invalid(format!(
                "noise bounds need alpha < beta, got [{}, {}]",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }

    /// Standardised bounds `(α′, β′)`.
    pub fn standardized_bounds(&self) -> (T, T) {
        ((self.alpha - self.mu) / self.sigma, (self.beta - self.mu) / self.sigma)
    }

    /// Probability mass of the untruncated Gaussian inside `[alpha, beta]`;
    /// also the acceptance rate of the rejection sampler.
    pub fn mass(&self) -> T {
        let (a, b) = self.standardized_bounds();
        std_normal_cdf(b) - std_normal_cdf(a)
    }

    pub fn pdf(&self, v: T) -> T {
        trunc_pdf(self, v)
    }

    pub fn cdf(&self, v: T) -> T {
        if v <= self.alpha {
            return T::zero();
        }
        if v >= self.beta {
            return T::one();
        }
        let (a, _) = self.standardized_bounds();
        (std_normal_cdf((v - self.mu) / self.sigma) - std_normal_cdf(a)) / self.mass()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<T> {
        trunc_sample(self, rng)
    }

    pub fn moments(&self) -> (T, T) {
        trunc_moments(self)
    }
}

/// Density of the bounded Gaussian; zero outside `[alpha, beta]`.
pub fn trunc_pdf<T: Real>(p: &TruncatedGaussianParams<T>, v: T) -> T {
    if v < p.alpha || v > p.beta {
        return T::zero();
    }
    std_normal_pdf((v - p.mu) / p.sigma) / (p.sigma * p.mass())
}

/// Rejection sampling against the untruncated Gaussian.
pub fn trunc_sample<T: Real, R: Rng + ?Sized>(
    p: &TruncatedGaussianParams<T>,
    rng: &mut R,
) -> Result<T> {
    let (mu, sigma) = (to_f64(p.mu), to_f64(p.sigma));
    let (lo, hi) = (to_f64(p.alpha), to_f64(p.beta));
    for _ in 0..MAX_REJECTIONS {
        let z: f64 = rng.sample(StandardNormal);
        let v = mu + sigma * z;
        if v >= lo && v <= hi {
            // rounding into a narrower type can step just past a bound
            return Ok(lit::<T>(v).max(p.alpha).min(p.beta));
        }
    }
    Err(Error::PathologicalParams(MAX_REJECTIONS))
}

/// Mean and variance of the bounded Gaussian (standard truncated-normal forms).
pub fn trunc_moments<T: Real>(p: &TruncatedGaussianParams<T>) -> (T, T) {
    let (a, b) = p.standardized_bounds();
    let z = p.mass();
    let (pa, pb) = (std_normal_pdf(a), std_normal_pdf(b));
    let shift = (pa - pb) / z;
    let mean = p.mu + p.sigma * shift;
    let var = p.sigma * p.sigma * (T::one() + (a * pa - b * pb) / z - shift * shift);
    (mean, var)
}

/// Fast time constant `theta` and mean-reversion rate `vartheta` of the
/// continuous filter `θ·ẏ = −y + w`, `ẇ = −ϑ·w + v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuousOuParams<T> {
    pub theta: T,
    pub vartheta: T,
}

impl<T: Real> ContinuousOuParams<T> {
    pub fn new(theta: T, vartheta: T) -> Result<Self> {
        let p = Self { theta, vartheta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta > T::zero() && self.theta < T::one()) {
            return Err(invalid(format!("ou theta must lie in (0, 1), got {}", self.theta)));
        }
        if !(self.vartheta > T::zero()) || !self.vartheta.is_finite() {
            return Err(invalid(format!("ou vartheta must be > 0, got {}", self.vartheta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ContinuousOuState<T> {
    pub y: T,
    pub w: T,
}

/// Right-hand side of the continuous filter for a given input `v`.
pub fn ou_cont_deriv<T: Real>(s: ContinuousOuState<T>, p: &ContinuousOuParams<T>, v: T) -> (T, T) {
    ((s.w - s.y) / p.theta, -p.vartheta * s.w + v)
}

/// Coefficients of `y⁺ = a_y·y + b_y·w`, `w⁺ = a_w·w + b_w·v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscreteOuParams<T> {
    pub a_y: T,
    pub b_y: T,
    pub a_w: T,
    pub b_w: T,
}

impl<T: Real> DiscreteOuParams<T> {
    pub fn new(a_y: T, b_y: T, a_w: T, b_w: T) -> Result<Self> {
        let p = Self { a_y, b_y, a_w, b_w };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if [self.a_y, self.b_y, self.a_w, self.b_w].iter().any(|x| !x.is_finite()) {
            return Err(invalid("discrete ou coefficients must be finite"));
        }
        if !(self.a_y.abs() < T::one() && self.a_w.abs() < T::one()) {
            return Err(invalid(format!(
                "discrete ou is not stationary: |a_y| = {}, |a_w| = {} (both must be < 1)",
                self.a_y.abs(),
                self.a_w.abs()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DiscreteOuState<T> {
    pub y: T,
    pub w: T,
}

/// One step of the discrete recursion. `y⁺` reads the pre-update `w`.
pub fn ou_disc_step<T: Real>(s: DiscreteOuState<T>, p: &DiscreteOuParams<T>, v: T) -> DiscreteOuState<T> {
    DiscreteOuState {
        y: p.a_y * s.y + p.b_y * s.w,
        w: p.a_w * s.w + p.b_w * v,
    }
}

/// Stationary covariance `P = A·P·Aᵀ + B·q·Bᵀ` of the discrete recursion,
/// ordered `[[Var y, Cov yw], [Cov yw, Var w]]`.
///
/// `A = [[a_y, b_y], [0, a_w]]` is upper triangular, so the Lyapunov equation
/// decouples and is solved back to front.
pub fn ou_disc_stationary_cov<T: Real>(p: &DiscreteOuParams<T>, input_variance: T) -> Result<[[T; 2]; 2]> {
    p.validate()?;
    if !(input_variance >= T::zero()) {
        return Err(invalid(format!("input variance must be >= 0, got {input_variance}")));
    }
    let one = T::one();
    let two = lit::<T>(2.0);
    let var_w = p.b_w * p.b_w * input_variance / (one - p.a_w * p.a_w);
    let cov_yw = p.b_y * p.a_w * var_w / (one - p.a_y * p.a_w);
    let var_y = (two * p.a_y * p.b_y * cov_yw + p.b_y * p.b_y * var_w) / (one - p.a_y * p.a_y);
    Ok([[var_y, cov_yw], [cov_yw, var_w]])
}

/// Envelope `[(α/ϑ)(1 − e^{−ϑt}), (β/ϑ)(1 − e^{−ϑt})]` that confines `w(t)`
/// started from `w(0) = 0` under any input in `[alpha, beta]`.
pub fn w_envelope<T: Real>(p: &ContinuousOuParams<T>, t: T, alpha: T, beta: T) -> Result<(T, T)> {
    if !(t >= T::zero()) {
        return Err(invalid(format!("envelope time must be >= 0, got {t}")));
    }
    let rise = (T::one() - (-p.vartheta * t).exp()) / p.vartheta;
    Ok((alpha * rise, beta * rise))
}
