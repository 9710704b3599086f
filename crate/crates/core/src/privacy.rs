//! Empirical privacy accounting for the noisy boundary and the tracking error.
//!
//! The filtered noise has no closed-form density, so its steady-state pdf is
//! estimated by a histogram and the `(ε, δ)` bounds are read off that
//! estimate: `ε_U = ln c_b` from a density ratio over `[−M, M]`, and `δ_U`
//! from the tail mass outside it.

use serde::{Serialize, Serializer};

use crate::error::{invalid, Error, Result};
use crate::funnel::{adjacency_check, FunnelBoundary};
use crate::num::{gaussian_tail_inv, lit, std_normal_pdf, to_f64, Real};
use crate::sim::Trajectory;

/// Fewest samples allowed in a bin that overlaps `[−M, M]`.
pub const MIN_BIN_COUNT: u64 = 50;

/// Equal-width histogram density.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalPdf<T> {
    pub edges: Vec<T>,
    pub density: Vec<T>,
    /// Per-bin counts; empty for a tabulated (exact) density.
    pub counts: Vec<u64>,
    pub n_samples: usize,
}

/// Histogram with `n_bins` equal bins spanning `[min, max]` of the samples.
pub fn estimate_pdf<T: Real>(samples: &[T], n_bins: usize) -> Result<EmpiricalPdf<T>> {
    if samples.is_empty() {
        return Err(invalid("density estimate needs at least one sample"));
    }
    if n_bins < 2 {
        return Err(invalid(format!("density estimate needs >= 2 bins, got {n_bins}")));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(invalid("density estimate got a non-finite sample"));
    }
    let lo = samples.iter().copied().fold(T::infinity(), T::min);
    let hi = samples.iter().copied().fold(T::neg_infinity(), T::max);
    if !(hi > lo) {
        return Err(Error::PrivacyDegenerate("all samples are equal; histogram has zero width".into()));
    }
    let nb = lit::<T>(n_bins as f64);
    let width = (hi - lo) / nb;
    let mut counts = vec![0u64; n_bins];
    for &x in samples {
        let idx = ((x - lo) / width).floor().to_usize().unwrap_or(0).min(n_bins - 1);
        counts[idx] += 1;
    }
    let edges: Vec<T> = (0..=n_bins).map(|i| lo + (hi - lo) * lit(i as f64) / nb).collect();
    let norm = lit::<T>(samples.len() as f64) * width;
    let density = counts.iter().map(|&c| lit::<T>(c as f64) / norm).collect();
    Ok(EmpiricalPdf { edges, density, counts, n_samples: samples.len() })
}

impl<T: Real> EmpiricalPdf<T> {
    /// Exact density tabulated on bins, renormalised to unit mass.
    pub fn from_density(edges: Vec<T>, density: Vec<T>) -> Result<Self> {
        if edges.len() < 3 || edges.len() != density.len() + 1 {
            return Err(invalid("tabulated density needs >= 2 bins and one more edge than bins"));
        }
        if edges.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(invalid("bin edges must be strictly increasing"));
        }
        if density.iter().any(|&d| !(d >= T::zero()) || !d.is_finite()) {
            return Err(invalid("tabulated density must be finite and >= 0"));
        }
        let mass = density.iter().zip(edges.windows(2)).fold(T::zero(), |a, (&d, w)| a + d * (w[1] - w[0]));
        if !(mass > T::zero()) {
            return Err(Error::PrivacyDegenerate("tabulated density has zero mass".into()));
        }
        let density = density.into_iter().map(|d| d / mass).collect();
        Ok(Self { edges, density, counts: Vec::new(), n_samples: 0 })
    }

    /// Tabulate `f` at the bin midpoints of `n_bins` equal bins on `[lo, hi]`.
    pub fn tabulate(f: impl Fn(T) -> T, lo: T, hi: T, n_bins: usize) -> Result<Self> {
        let nb = lit::<T>(n_bins as f64);
        let edges: Vec<T> = (0..=n_bins).map(|i| lo + (hi - lo) * lit(i as f64) / nb).collect();
        let density = edges.windows(2).map(|w| f((w[0] + w[1]) / lit(2.0))).collect();
        Self::from_density(edges, density)
    }

    pub fn n_bins(&self) -> usize {
        self.density.len()
    }

    pub fn support(&self) -> (T, T) {
        (self.edges[0], self.edges[self.edges.len() - 1])
    }

    pub fn centers(&self) -> Vec<T> {
        self.edges.windows(2).map(|w| (w[0] + w[1]) / lit(2.0)).collect()
    }

    /// `Σ density·width`.
    pub fn total_mass(&self) -> T {
        self.density.iter().zip(self.edges.windows(2)).fold(T::zero(), |a, (&d, w)| a + d * (w[1] - w[0]))
    }

    /// Density at `x` by linear interpolation between bin centers; flat in the
    /// outer half bins and zero outside the support.
    pub fn eval(&self, x: T) -> T {
        let (lo, hi) = self.support();
        if x < lo || x > hi {
            return T::zero();
        }
        let centers = self.centers();
        let n = centers.len();
        if x <= centers[0] {
            return self.density[0];
        }
        if x >= centers[n - 1] {
            return self.density[n - 1];
        }
        let i = centers.partition_point(|&c| c <= x);
        let f = (x - centers[i - 1]) / (centers[i] - centers[i - 1]);
        self.density[i - 1] + f * (self.density[i] - self.density[i - 1])
    }

    /// Histogram mass in `(−∞, x]`.
    pub fn mass_below(&self, x: T) -> T {
        let mut acc = T::zero();
        for (i, w) in self.edges.windows(2).enumerate() {
            if x <= w[0] {
                break;
            }
            acc = acc + self.density[i] * (x.min(w[1]) - w[0]);
        }
        acc
    }

    /// Bins whose interval meets `[a, b]`.
    fn bins_touching(&self, a: T, b: T) -> impl Iterator<Item = usize> + '_ {
        self.edges.windows(2).enumerate().filter(move |(_, w)| w[1] >= a && w[0] <= b).map(|(i, _)| i)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundCase {
    /// `δψ′ < M`: `c_b = p(M − δψ′)/p(M)`.
    I,
    /// `δψ′ ≥ M`: `c_b = p(0)/p(M)`.
    II,
}

impl Serialize for BoundCase {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(match self {
            BoundCase::I => "I",
            BoundCase::II => "II",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpsilonBound<T> {
    pub epsilon_u: T,
    pub c_b: T,
    pub case: BoundCase,
}

/// `ε_U = ln c_b` with [`MIN_BIN_COUNT`] enforced on sample-based estimates.
pub fn epsilon_bound<T: Real>(pdf: &EmpiricalPdf<T>, m: T, delta_psi_prime: T) -> Result<EpsilonBound<T>> {
    epsilon_bound_with(pdf, m, delta_psi_prime, MIN_BIN_COUNT)
}

pub fn epsilon_bound_with<T: Real>(
    pdf: &EmpiricalPdf<T>,
    m: T,
    delta_psi_prime: T,
    min_bin_count: u64,
) -> Result<EpsilonBound<T>> {
    if !(m > T::zero()) || !(delta_psi_prime > T::zero()) {
        return Err(invalid("M and delta_psi_prime must be > 0"));
    }
    let (lo, hi) = pdf.support();
    if -m < lo || m > hi {
        return Err(Error::PrivacyDegenerate(format!(
            "[-M, M] = [{}, {}] is not inside the density support [{lo}, {hi}]",
            -m, m
        )));
    }
    if !pdf.counts.is_empty() {
        if let Some(i) = pdf.bins_touching(-m, m).find(|&i| pdf.counts[i] < min_bin_count) {
            return Err(Error::PrivacyDegenerate(format!(
                "bin [{}, {}] holds {} samples, fewer than {min_bin_count}",
                pdf.edges[i],
                pdf.edges[i + 1],
                pdf.counts[i]
            )));
        }
    }
    let (case, numerator_at) = if delta_psi_prime < m {
        (BoundCase::I, m - delta_psi_prime)
    } else {
        (BoundCase::II, T::zero())
    };
    let denominator = pdf.eval(m);
    let numerator = pdf.eval(numerator_at);
    for (at, value) in [(m, denominator), (numerator_at, numerator)] {
        if !(value > T::zero()) {
            return Err(Error::PrivacyDegenerate(format!("zero density at y = {at}; epsilon is unbounded")));
        }
    }
    // δ = 0 is admissible in the supremum, so the ratio never drops below 1
    let c_b = (numerator / denominator).max(T::one());
    Ok(EpsilonBound { epsilon_u: c_b.ln(), c_b, case })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeltaBound<T> {
    pub delta_u: T,
    #[serde(rename = "S1")]
    pub s1: T,
    #[serde(rename = "S2")]
    pub s2: T,
}

/// `S1 = 2·P(y ≤ −M)`, `S2 = 2·P(y ≥ M)`, `δ_U = S1 + S2`.
pub fn delta_bound<T: Real>(pdf: &EmpiricalPdf<T>, m: T) -> Result<DeltaBound<T>> {
    if !(m > T::zero()) {
        return Err(invalid("M must be > 0"));
    }
    let two = lit::<T>(2.0);
    let left = pdf.mass_below(-m);
    let right = (pdf.total_mass() - pdf.mass_below(m)).max(T::zero());
    let (s1, s2) = (two * left, two * right);
    Ok(DeltaBound { delta_u: s1 + s2, s1, s2 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrivacyBoundReport<T> {
    #[serde(rename = "M")]
    pub m: T,
    pub delta_psi_prime: T,
    pub case: BoundCase,
    pub c_b: T,
    #[serde(rename = "epsilon_U")]
    pub epsilon_u: T,
    #[serde(rename = "S1")]
    pub s1: T,
    #[serde(rename = "S2")]
    pub s2: T,
    #[serde(rename = "delta_U")]
    pub delta_u: T,
}

pub fn privacy_bounds<T: Real>(pdf: &EmpiricalPdf<T>, m: T, delta_psi_prime: T, min_bin_count: u64) -> Result<PrivacyBoundReport<T>> {
    let eps = epsilon_bound_with(pdf, m, delta_psi_prime, min_bin_count)?;
    let del = delta_bound(pdf, m)?;
    Ok(PrivacyBoundReport {
        m,
        delta_psi_prime,
        case: eps.case,
        c_b: eps.c_b,
        epsilon_u: eps.epsilon_u,
        s1: del.s1,
        s2: del.s2,
        delta_u: del.delta_u,
    })
}

/// `(κ, K_δ)` with `K_δ = Q⁻¹(δ)` and `κ = (K_δ + √(K_δ² + 2ε)) / (2ε)`.
pub fn gaussian_kappa<T: Real>(epsilon_g: T, delta_g: T) -> Result<(T, T)> {
    if !(epsilon_g > T::zero()) || !epsilon_g.is_finite() {
        return Err(invalid(format!("epsilon_G must be > 0, got {epsilon_g}")));
    }
    if !(delta_g > T::zero() && delta_g < lit(0.5)) {
        return Err(invalid(format!("delta_G must lie in (0, 0.5), got {delta_g}")));
    }
    let k = gaussian_tail_inv(delta_g);
    let two_eps = lit::<T>(2.0) * epsilon_g;
    Ok(((k + (k * k + two_eps).sqrt()) / two_eps, k))
}

/// Smallest stationary spread `σ′_G = ΔQ·δψ·κ` that meets the target.
pub fn required_sigma_prime<T: Real>(delta_q: T, delta_psi: T, kappa: T) -> T {
    delta_q * delta_psi * kappa
}

/// Gaussian-input baseline: white noise of spread `σ_G` through the filter
/// gives a stationary output spread `σ′_G = σ_G/√(2ϑ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaussianMechanismParams<T> {
    pub sigma_g: T,
    pub vartheta: T,
    pub sigma_g_prime: T,
    pub epsilon_g: T,
    pub delta_g: T,
    pub k_delta: T,
    pub kappa: T,
}

impl<T: Real> GaussianMechanismParams<T> {
    pub fn new(sigma_g: T, vartheta: T, epsilon_g: T, delta_g: T) -> Result<Self> {
        if !(sigma_g > T::zero()) || !(vartheta > T::zero()) {
            return Err(invalid("sigma_G and vartheta must be > 0"));
        }
        let (kappa, k_delta) = gaussian_kappa(epsilon_g, delta_g)?;
        let sigma_g_prime = sigma_g / (lit::<T>(2.0) * vartheta).sqrt();
        Ok(Self { sigma_g, vartheta, sigma_g_prime, epsilon_g, delta_g, k_delta, kappa })
    }

    pub fn is_sufficient(&self, delta_q: T, delta_psi: T) -> bool {
        self.sigma_g_prime >= required_sigma_prime(delta_q, delta_psi, self.kappa)
    }

    /// Stationary output density `p_ss(y)`.
    pub fn stationary_pdf(&self, y: T) -> T {
        std_normal_pdf(y / self.sigma_g_prime) / self.sigma_g_prime
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DpVerificationReport<T> {
    pub max_error_gap: T,
    pub delta_psi: T,
    pub adjacent: bool,
    pub both_contained: bool,
    pub window: [T; 2],
    /// Whether `max_error_gap ≤ delta_psi`; reported, not guaranteed.
    pub gap_within_delta_psi: bool,
    pub window_points: usize,
}

/// Compare two tracking runs driven by adjacent boundaries on `window`.
pub fn verify_error_dp<T: Real>(
    traj_a: &Trajectory<T>,
    traj_b: &Trajectory<T>,
    base_a: &FunnelBoundary<T>,
    base_b: &FunnelBoundary<T>,
    delta_psi: T,
    window: [T; 2],
) -> Result<DpVerificationReport<T>> {
    if traj_a.times != traj_b.times {
        return Err(invalid("trajectories are recorded on different grids"));
    }
    if traj_a.is_empty() {
        return Err(invalid("empty trajectories"));
    }
    let end = traj_a.times[traj_a.len() - 1];
    let tol = lit::<T>(1e-9) * end.abs().max(T::one());
    if !(window[0] <= window[1]) || window[0] < T::zero() || window[1] > end + tol {
        return Err(invalid(format!(
            "window [{}, {}] not inside the horizon [0, {}]",
            to_f64(window[0]),
            to_f64(window[1]),
            to_f64(end)
        )));
    }
    let adjacent = adjacency_check(base_a, base_b, &traj_a.times, delta_psi)?;
    let mut max_error_gap = T::zero();
    let mut both_contained = true;
    let mut window_points = 0;
    for i in 0..traj_a.len() {
        let t = traj_a.times[i];
        if t < window[0] || t > window[1] + tol {
            continue;
        }
        window_points += 1;
        max_error_gap = max_error_gap.max((traj_a.e[i] - traj_b.e[i]).abs());
        both_contained &= traj_a.e[i].abs() < traj_a.psi_noisy[i] && traj_b.e[i].abs() < traj_b.psi_noisy[i];
    }
    Ok(DpVerificationReport {
        max_error_gap,
        delta_psi,
        adjacent,
        both_contained,
        window,
        gap_within_delta_psi: max_error_gap <= delta_psi,
        window_points,
    })
}
