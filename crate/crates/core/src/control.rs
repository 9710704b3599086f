//! Plant in normal form, the scaled error coordinates, and the state- and
//! output-feedback funnel controllers with their high-gain observer.
//!
//! With `ωᵢ = ϱ^{i−1}(ξᵢ − r^{(i−1)})` the virtual output
//! `s = ω₁ + k₂ω₂ + … + k_ρω_ρ` has relative degree one, and the funnel gain
//! `1/(ψ − |s|)` keeps it (and with it `e = ω₁`) inside the boundary.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::num::{lit, saturate, to_f64, Real};

/// SISO plant `ξ̇ᵢ = ξᵢ₊₁`, `ξ̇_ρ = a(t, ξ) + b(ξ)·u` with `b(ξ) ≥ b₀ > 0`.
pub trait Plant<T: Real> {
    fn rho(&self) -> usize;
    fn drift(&self, t: T, xi: &[T]) -> T;
    fn gain(&self, xi: &[T]) -> T;
    fn b0(&self) -> T;

    /// `b(ξ)`, rejecting values below the known lower bound.
    fn checked_gain(&self, xi: &[T]) -> Result<T> {
        let b = self.gain(xi);
        if b >= self.b0() {
            Ok(b)
        } else {
            Err(Error::GainBelowBound { gain: to_f64(b), b0: to_f64(self.b0()) })
        }
    }
}

/// Chain-of-integrators vector field of a normal-form plant.
pub fn plant_deriv<T: Real, P: Plant<T> + ?Sized>(plant: &P, t: T, xi: &[T], u: T, out: &mut [T]) -> Result<()> {
    let rho = plant.rho();
    if xi.len() != rho || out.len() != rho {
        return Err(Error::DimensionMismatch { expected: rho, got: xi.len().min(out.len()) });
    }
    out[..rho - 1].copy_from_slice(&xi[1..]);
    out[rho - 1] = plant.drift(t, xi) + plant.checked_gain(xi)? * u;
    Ok(())
}

/// `ξ̇₁ = ξ₂`, `ξ̇₂ = −ξ₁ + ξ₁³ + u`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CubicOscillator;

impl<T: Real> Plant<T> for CubicOscillator {
    fn rho(&self) -> usize {
        2
    }

    fn drift(&self, _t: T, xi: &[T]) -> T {
        -xi[0] + xi[0] * xi[0] * xi[0]
    }

    fn gain(&self, _xi: &[T]) -> T {
        T::one()
    }

    fn b0(&self) -> T {
        T::one()
    }
}

pub fn plant_deriv_example<T: Real>(xi: [T; 2], u: T, t: T) -> [T; 2] {
    [xi[1], <CubicOscillator as Plant<T>>::drift(&CubicOscillator, t, &xi) + u]
}

/// Van der Pol exosystem `ξ̇_r1 = ξ_r2`, `ξ̇_r2 = μ(1 − ξ_r1²)ξ_r2 − ξ_r1`
/// with output `r = ξ_r1`.
///
/// `unstable_first_equation` swaps the first equation for `ξ̇_r1 = ξ_r1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VanDerPolExosystem<T> {
    pub mu: T,
    pub unstable_first_equation: bool,
}

impl<T: Real> Default for VanDerPolExosystem<T> {
    fn default() -> Self {
        Self { mu: lit(2.0), unstable_first_equation: false }
    }
}

impl<T: Real> VanDerPolExosystem<T> {
    pub fn deriv(&self, x: [T; 2]) -> [T; 2] {
        let d1 = if self.unstable_first_equation { x[0] } else { x[1] };
        [d1, self.mu * (T::one() - x[0] * x[0]) * x[1] - x[0]]
    }

    /// `(r, ṙ, r̈)` from the vector field, without numerical differentiation.
    pub fn reference(&self, x: [T; 2]) -> (T, T, T) {
        let d = self.deriv(x);
        let r_ddot = if self.unstable_first_equation { d[0] } else { d[1] };
        (x[0], d[0], r_ddot)
    }

    /// `R = (r, ṙ, …, r^{(ρ−1)})`; at most second order is available.
    pub fn reference_vector(&self, x: [T; 2], rho: usize) -> Result<Vec<T>> {
        let (r, rd, rdd) = self.reference(x);
        match rho {
            1 => Ok(vec![r]),
            2 => Ok(vec![r, rd]),
            3 => Ok(vec![r, rd, rdd]),
            _ => Err(invalid(format!("exosystem provides derivatives up to order 2, relative degree {rho} needs more"))),
        }
    }
}

/// Virtual-output gains `k₂..k_ρ` and the scaling `ϱ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerGains<T> {
    pub k: Vec<T>,
    pub varrho: T,
}

impl<T: Real> ControllerGains<T> {
    pub fn new(k: Vec<T>, varrho: T) -> Result<Self> {
        let g = Self { k, varrho };
        g.validate()?;
        Ok(g)
    }

    pub fn rho(&self) -> usize {
        self.k.len() + 1
    }

    /// Weight of `ωᵢ` in `s` (1-based `i`), with `k₁ = 1`.
    fn weight(&self, i: usize) -> T {
        if i == 1 {
            T::one()
        } else {
            self.k[i - 2]
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.varrho > T::zero()) || !self.varrho.is_finite() {
            return Err(invalid(format!("varrho must be > 0, got {}", self.varrho)));
        }
        if self.k.iter().any(|&k| !(k > T::zero()) || !k.is_finite()) {
            return Err(invalid("gains k2..k_rho must be positive"));
        }
        if !companion_f_h(self).hurwitz {
            return Err(invalid("companion matrix of k2..k_rho is not Hurwitz"));
        }
        Ok(())
    }
}

fn check_dim<T>(v: &[T], rho: usize) -> Result<()> {
    if v.len() == rho {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected: rho, got: v.len() })
    }
}

/// `ωᵢ = ϱ^{i−1}(ξᵢ − r^{(i−1)})`.
pub fn scale_to_omega<T: Real>(xi: &[T], reference: &[T], g: &ControllerGains<T>) -> Result<Vec<T>> {
    let rho = g.rho();
    check_dim(xi, rho)?;
    check_dim(reference, rho)?;
    let mut scale = T::one();
    Ok(xi
        .iter()
        .zip(reference)
        .map(|(&x, &r)| {
            let w = scale * (x - r);
            scale = scale * g.varrho;
            w
        })
        .collect())
}

/// Inverse of [`scale_to_omega`]: `ξ = L⁻¹(ϱ)ω + R`.
pub fn scale_to_xi<T: Real>(omega: &[T], reference: &[T], g: &ControllerGains<T>) -> Result<Vec<T>> {
    let rho = g.rho();
    check_dim(omega, rho)?;
    check_dim(reference, rho)?;
    let mut scale = T::one();
    Ok(omega
        .iter()
        .zip(reference)
        .map(|(&w, &r)| {
            let x = w / scale + r;
            scale = scale * g.varrho;
            x
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Companion<T> {
    /// Row-major `(ρ−1)×(ρ−1)`.
    pub f: Vec<Vec<T>>,
    pub h: Vec<T>,
    pub hurwitz: bool,
}

/// Fast-subsystem matrices: superdiagonal ones, last row
/// `(−1/k_ρ, −k₂/k_ρ, …, −k_{ρ−1}/k_ρ)`, `H = (0, …, 0, 1/k_ρ)ᵀ`.
/// Relative degree one gives empty matrices, Hurwitz vacuously.
pub fn companion_f_h<T: Real>(g: &ControllerGains<T>) -> Companion<T> {
    let n = g.rho() - 1;
    if n == 0 {
        return Companion { f: Vec::new(), h: Vec::new(), hurwitz: true };
    }
    let k_rho = g.weight(n + 1);
    let mut f = vec![vec![T::zero(); n]; n];
    for (i, row) in f.iter_mut().enumerate().take(n - 1) {
        row[i + 1] = T::one();
    }
    for j in 0..n {
        f[n - 1][j] = -g.weight(j + 1) / k_rho;
    }
    let mut h = vec![T::zero(); n];
    h[n - 1] = T::one() / k_rho;
    let hurwitz = matrix_is_hurwitz(&f);
    Companion { f, h, hurwitz }
}

/// All eigenvalues strictly in the open left half plane.
pub fn matrix_is_hurwitz<T: Real>(rows: &[Vec<T>]) -> bool {
    let n = rows.len();
    if n == 0 {
        return true;
    }
    let data: Vec<f64> = rows.iter().flat_map(|r| r.iter().map(|&x| to_f64(x))).collect();
    if data.len() != n * n || data.iter().any(|x| !x.is_finite()) {
        return false;
    }
    DMatrix::from_row_slice(n, n, &data)
        .complex_eigenvalues()
        .iter()
        .all(|z| z.re < 0.0)
}

/// Hurwitz test of the monic polynomial `t^ρ + c₁t^{ρ−1} + … + c_ρ`
/// through its companion matrix.
pub fn monic_poly_is_hurwitz<T: Real>(coeffs: &[T]) -> bool {
    let n = coeffs.len();
    let mut rows = vec![vec![T::zero(); n]; n];
    for (i, row) in rows.iter_mut().enumerate().take(n.saturating_sub(1)) {
        row[i + 1] = T::one();
    }
    if n > 0 {
        for j in 0..n {
            rows[n - 1][j] = -coeffs[n - 1 - j];
        }
    }
    n > 0 && matrix_is_hurwitz(&rows)
}

/// `s = ω₁ + k₂ω₂ + … + k_ρω_ρ`.
pub fn virtual_output<T: Real>(omega: &[T], g: &ControllerGains<T>) -> Result<T> {
    check_dim(omega, g.rho())?;
    Ok(omega.iter().enumerate().fold(T::zero(), |acc, (i, &w)| acc + g.weight(i + 1) * w))
}

/// `1/(ψ − |s|)`; the signal must be strictly inside the funnel.
///
/// The violation error carries `t = NaN`; callers tag it with [`Error::at_time`].
pub fn funnel_gain<T: Real>(psi_t: T, s_abs: T) -> Result<T> {
    if !(psi_t > T::zero()) {
        return Err(Error::MechanismInvalid { t: f64::NAN, value: to_f64(psi_t) });
    }
    if !(s_abs < psi_t) {
        return Err(Error::FunnelViolation { t: f64::NAN, s_abs: to_f64(s_abs), psi: to_f64(psi_t) });
    }
    Ok(T::one() / (psi_t - s_abs))
}

impl Error {
    /// Fill in the time of a funnel or mechanism error raised by a pure function.
    pub fn at_time(self, t: f64) -> Self {
        match self {
            Error::FunnelViolation { s_abs, psi, .. } => Error::FunnelViolation { t, s_abs, psi },
            Error::MechanismInvalid { value, .. } => Error::MechanismInvalid { t, value },
            other => other,
        }
    }
}

/// `−ω₂ − k₂ω₃ − … − k_{ρ−1}ω_ρ`, the part of the control that cancels the
/// fast dynamics.
fn fast_cancellation<T: Real>(omega: &[T], g: &ControllerGains<T>) -> T {
    (2..=g.rho()).fold(T::zero(), |acc, i| acc - g.weight(i - 1) * omega[i - 1])
}

fn scaled_input<T: Real>(bracket: T, g: &ControllerGains<T>, b: T) -> T {
    let rho = g.rho();
    bracket / (g.varrho.powi(rho as i32) * g.weight(rho) * b)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateFeedback<T> {
    pub u: T,
    pub s: T,
    pub v_f: T,
}

/// `u = [−ω₂ − k₂ω₃ − … − k_{ρ−1}ω_ρ + ϱ·v_f] / (ϱ^ρ k_ρ b(ξ))`,
/// `v_f = −s/(ψ − |s|)`.
pub fn state_feedback_u<T: Real, P: Plant<T> + ?Sized>(
    xi: &[T],
    reference: &[T],
    psi_t: T,
    g: &ControllerGains<T>,
    plant: &P,
) -> Result<StateFeedback<T>> {
    let omega = scale_to_omega(xi, reference, g)?;
    let s = virtual_output(&omega, g)?;
    let v_f = -funnel_gain(psi_t, s.abs())? * s;
    let b = plant.checked_gain(xi)?;
    let u = scaled_input(fast_cancellation(&omega, g) + g.varrho * v_f, g, b);
    Ok(StateFeedback { u, s, v_f })
}

/// Nominal model `a₀(ξ̂)` used by the observer's last equation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NominalDrift {
    #[default]
    Zero,
    /// Reuse the plant drift `a(t, ξ̂)`.
    Plant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObserverParams<T> {
    pub gamma: Vec<T>,
    pub varsigma: T,
    pub nominal_drift: NominalDrift,
    pub include_input_term: bool,
}

impl<T: Real> ObserverParams<T> {
    pub fn new(gamma: Vec<T>, varsigma: T) -> Result<Self> {
        let o = Self { gamma, varsigma, nominal_drift: NominalDrift::Zero, include_input_term: false };
        o.validate()?;
        Ok(o)
    }

    pub fn rho(&self) -> usize {
        self.gamma.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.varsigma > T::zero()) || !self.varsigma.is_finite() {
            return Err(invalid(format!("observer varsigma must be > 0, got {}", self.varsigma)));
        }
        if self.gamma.is_empty() || self.gamma.iter().any(|&g| !(g > T::zero())) {
            return Err(invalid("observer gains gamma must be positive"));
        }
        if !monic_poly_is_hurwitz(&self.gamma) {
            return Err(invalid("observer polynomial is not Hurwitz"));
        }
        Ok(())
    }
}

/// High-gain observer vector field driven by the measured error `e`.
#[allow(clippy::too_many_arguments)]
pub fn hgo_deriv<T: Real, P: Plant<T> + ?Sized>(
    e_hat: &[T],
    e_meas: T,
    obs: &ObserverParams<T>,
    plant: &P,
    u_hat: T,
    reference: &[T],
    t: T,
    out: &mut [T],
) -> Result<()> {
    let rho = obs.rho();
    check_dim(e_hat, rho)?;
    check_dim(out, rho)?;
    let innovation = e_meas - e_hat[0];
    let mut scale = T::one();
    for i in 0..rho {
        scale = scale * obs.varsigma;
        let correction = obs.gamma[i] / scale * innovation;
        out[i] = if i + 1 < rho { e_hat[i + 1] + correction } else { correction };
    }
    if obs.nominal_drift == NominalDrift::Plant || obs.include_input_term {
        check_dim(reference, rho)?;
        let xi_hat: Vec<T> = e_hat.iter().zip(reference).map(|(&e, &r)| e + r).collect();
        if obs.nominal_drift == NominalDrift::Plant {
            out[rho - 1] = out[rho - 1] + plant.drift(t, &xi_hat);
        }
        if obs.include_input_term {
            out[rho - 1] = out[rho - 1] + plant.checked_gain(&xi_hat)? * u_hat;
        }
    }
    Ok(())
}

/// Saturation levels `M̄₁..M̄_ρ` for the scaled estimates and `M̄_k` for the gain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaturationLevels<T> {
    pub m_bar: Vec<T>,
    pub m_bar_k: T,
}

impl<T: Real> SaturationLevels<T> {
    pub fn new(m_bar: Vec<T>, m_bar_k: T) -> Result<Self> {
        let s = Self { m_bar, m_bar_k };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m_bar.iter().chain(std::iter::once(&self.m_bar_k)).any(|&m| !(m > T::zero())) {
            return Err(invalid("saturation levels must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutputFeedback<T> {
    pub u_hat_s: T,
    pub s_hat_s: T,
    pub k_hat_s: T,
    pub v_hat_fs: T,
}

/// Output-feedback funnel control from saturated scaled estimates.
pub fn output_feedback_u<T: Real, P: Plant<T> + ?Sized>(
    e_hat: &[T],
    reference: &[T],
    psi_t: T,
    g: &ControllerGains<T>,
    sat: &SaturationLevels<T>,
    plant: &P,
) -> Result<OutputFeedback<T>> {
    let rho = g.rho();
    check_dim(e_hat, rho)?;
    check_dim(&sat.m_bar, rho)?;
    let mut scale = T::one();
    let omega_s: Vec<T> = e_hat
        .iter()
        .zip(&sat.m_bar)
        .map(|(&e, &m)| {
            let w = scale * e;
            scale = scale * g.varrho;
            saturate(w, m)
        })
        .collect();
    let s_hat_s = virtual_output(&omega_s, g)?;
    let k_hat = funnel_gain(psi_t, s_hat_s.abs())?;
    let k_hat_s = saturate(k_hat, sat.m_bar_k);
    let v_hat_fs = -k_hat_s * s_hat_s;
    check_dim(reference, rho)?;
    let xi_hat: Vec<T> = e_hat.iter().zip(reference).map(|(&e, &r)| e + r).collect();
    let b = plant.checked_gain(&xi_hat)?;
    let u_hat_s = scaled_input(fast_cancellation(&omega_s, g) + g.varrho * v_hat_fs, g, b);
    Ok(OutputFeedback { u_hat_s, s_hat_s, k_hat_s, v_hat_fs })
}
