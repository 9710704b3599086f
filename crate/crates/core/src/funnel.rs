//! Funnel boundaries, the additive noise mechanism on them, and the boundary
//! database used for adjacency and sensitivity.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::num::{to_f64, Real};

/// A boundary curve `ψ(t) > 0` that can be sampled at any `t ≥ 0`.
pub trait BoundaryCurve<T: Real> {
    /// Value at `t`; callers guarantee `t ≥ 0`.
    fn psi(&self, t: T) -> T;
}

/// `ψ(t) = (psi0 − psi_ss)·e^{−λt} + psi_ss`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunnelBoundary<T> {
    pub psi0: T,
    pub psi_ss: T,
    pub lambda: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryViolation {
    Psi0NonPositive,
    PsiSsNonPositive,
    LambdaNonPositive,
}

impl BoundaryViolation {
    pub fn name(&self) -> &'static str {
        match self {
            BoundaryViolation::Psi0NonPositive => "psi0 <= 0",
            BoundaryViolation::PsiSsNonPositive => "psi_ss <= 0",
            BoundaryViolation::LambdaNonPositive => "lambda <= 0",
        }
    }
}

impl<T: Real> FunnelBoundary<T> {
    pub fn new(psi0: T, psi_ss: T, lambda: T) -> Result<Self> {
        let b = Self { psi0, psi_ss, lambda };
        b.check()?;
        Ok(b)
    }

    /// Every violated condition, empty when the boundary is admissible.
    pub fn validate(&self) -> Vec<BoundaryViolation> {
        let mut out = Vec::new();
        if !(self.psi0 > T::zero() && self.psi0.is_finite()) {
            out.push(BoundaryViolation::Psi0NonPositive);
        }
        if !(self.psi_ss > T::zero() && self.psi_ss.is_finite()) {
            out.push(BoundaryViolation::PsiSsNonPositive);
        }
        if !(self.lambda > T::zero() && self.lambda.is_finite()) {
            out.push(BoundaryViolation::LambdaNonPositive);
        }
        out
    }

    pub fn check(&self) -> Result<()> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            let names: Vec<_> = v.iter().map(|x| x.name()).collect();
            Err(invalid(format!("funnel boundary: {}", names.join(", "))))
        }
    }

    pub fn eval(&self, t: T) -> Result<T> {
        if !(t >= T::zero()) {
            return Err(invalid(format!("boundary evaluated at negative time {t}")));
        }
        Ok(self.psi(t))
    }

    /// `inf_t ψ(t)`.
    pub fn psi_min(&self) -> T {
        self.psi0.min(self.psi_ss)
    }

    /// `sup_t ψ(t)`.
    pub fn psi_max(&self) -> T {
        self.psi0.max(self.psi_ss)
    }
}

impl<T: Real> BoundaryCurve<T> for FunnelBoundary<T> {
    fn psi(&self, t: T) -> T {
        (self.psi0 - self.psi_ss) * (-self.lambda * t).exp() + self.psi_ss
    }
}

/// Boundary known only at sample times, linearly interpolated between them
/// and held constant outside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedBoundary<T> {
    times: Vec<T>,
    values: Vec<T>,
}

impl<T: Real> TabulatedBoundary<T> {
    pub fn new(times: Vec<T>, values: Vec<T>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(invalid("tabulated boundary needs equal, non-empty time and value lists"));
        }
        check_increasing(&times)?;
        if values.iter().any(|v| !(*v > T::zero()) || !v.is_finite()) {
            return Err(invalid("tabulated boundary values must be finite and > 0"));
        }
        Ok(Self { times, values })
    }

    pub fn sample<B: BoundaryCurve<T>>(curve: &B, times: Vec<T>) -> Result<Self> {
        let values = times.iter().map(|&t| curve.psi(t)).collect();
        Self::new(times, values)
    }
}

impl<T: Real> BoundaryCurve<T> for TabulatedBoundary<T> {
    fn psi(&self, t: T) -> T {
        let n = self.times.len();
        if t <= self.times[0] {
            return self.values[0];
        }
        if t >= self.times[n - 1] {
            return self.values[n - 1];
        }
        let i = self.times.partition_point(|&x| x <= t);
        let (t0, t1) = (self.times[i - 1], self.times[i]);
        let f = (t - t0) / (t1 - t0);
        self.values[i - 1] + f * (self.values[i] - self.values[i - 1])
    }
}

/// Boundary with a noise trace added on a time grid, `ψ(tᵢ) + y(tᵢ)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoisyBoundary<T> {
    pub base: FunnelBoundary<T>,
    pub times: Vec<T>,
    pub noise_trace: Vec<T>,
    pub values: Vec<T>,
}

/// Noise support `[alpha, beta]` from the boundary: `alpha = −c1·ψ_min`,
/// `beta = −alpha`, or `beta = c2·ψ_max` when `c2` is given.
pub fn noise_bounds<T: Real>(b: &FunnelBoundary<T>, c1: T, c2: Option<T>) -> Result<(T, T)> {
    if !(c1 > T::zero() && c1 < T::one()) {
        return Err(invalid(format!("c1 must lie in (0, 1), got {c1}")));
    }
    let alpha = -c1 * b.psi_min();
    let beta = match c2 {
        None => -alpha,
        Some(c2) if c2 >= T::one() => c2 * b.psi_max(),
        Some(c2) => return Err(invalid(format!("c2 must be >= 1, got {c2}"))),
    };
    Ok((alpha, beta))
}

/// Adds `y_trace` to the boundary pointwise and rejects any non-positive value.
pub fn mechanism_apply<T: Real>(b: &FunnelBoundary<T>, times: &[T], y_trace: &[T]) -> Result<NoisyBoundary<T>> {
    if times.len() != y_trace.len() {
        return Err(Error::DimensionMismatch { expected: times.len(), got: y_trace.len() });
    }
    let mut values = Vec::with_capacity(times.len());
    for (&t, &y) in times.iter().zip(y_trace) {
        let value = b.eval(t)? + y;
        if !(value > T::zero()) {
            return Err(Error::MechanismInvalid { t: to_f64(t), value: to_f64(value) });
        }
        values.push(value);
    }
    Ok(NoisyBoundary { base: *b, times: times.to_vec(), noise_trace: y_trace.to_vec(), values })
}

/// `max_i |ψA(tᵢ) − ψB(tᵢ)|` over the grid.
pub fn max_gap<T: Real, A: BoundaryCurve<T>, B: BoundaryCurve<T>>(a: &A, b: &B, grid: &[T]) -> Result<T> {
    if grid.is_empty() {
        return Err(invalid("adjacency grid is empty"));
    }
    Ok(grid.iter().fold(T::zero(), |m, &t| m.max((a.psi(t) - b.psi(t)).abs())))
}

/// Adjacency: pointwise distance at most `delta_psi` on every grid point.
pub fn adjacency_check<T: Real, A: BoundaryCurve<T>, B: BoundaryCurve<T>>(
    a: &A,
    b: &B,
    grid: &[T],
    delta_psi: T,
) -> Result<bool> {
    Ok(max_gap(a, b, grid)? <= delta_psi)
}

fn check_increasing<T: Real>(grid: &[T]) -> Result<()> {
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(invalid("time grid must be strictly increasing"));
    }
    Ok(())
}

/// The boundary database with its sample grid and adjacency radius.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryDataset<T, B = FunnelBoundary<T>> {
    boundaries: Vec<B>,
    grid: Vec<T>,
    delta_psi: T,
    horizon: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sensitivity<T> {
    pub delta_q: T,
    pub adjacent_pairs: usize,
    /// Set when no two entries are adjacent; `delta_q` is then zero.
    pub no_adjacent_pair: bool,
}

impl<T: Real, B: BoundaryCurve<T>> BoundaryDataset<T, B> {
    pub fn new(boundaries: Vec<B>, grid: Vec<T>, delta_psi: T, horizon: T) -> Result<Self> {
        if !(horizon > T::zero()) {
            return Err(invalid(format!("dataset horizon must be > 0, got {horizon}")));
        }
        if !(delta_psi > T::zero()) {
            return Err(invalid(format!("delta_psi must be > 0, got {delta_psi}")));
        }
        if grid.is_empty() {
            return Err(invalid("dataset grid is empty"));
        }
        check_increasing(&grid)?;
        if grid[0] < T::zero() || grid[grid.len() - 1] > horizon {
            return Err(invalid("dataset grid must lie inside [0, horizon]"));
        }
        Ok(Self { boundaries, grid, delta_psi, horizon })
    }

    pub fn len(&self) -> usize {
        self.boundaries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boundaries.is_empty()
    }

    pub fn grid(&self) -> &[T] {
        &self.grid
    }

    pub fn delta_psi(&self) -> T {
        self.delta_psi
    }

    pub fn horizon(&self) -> T {
        self.horizon
    }

    pub fn query(&self, idx: usize) -> Result<&B> {
        self.boundaries
            .get(idx)
            .ok_or(Error::IndexOutOfBounds { index: idx, len: self.boundaries.len() })
    }

    pub fn adjacent(&self, i: usize, j: usize) -> Result<bool> {
        adjacency_check(self.query(i)?, self.query(j)?, &self.grid, self.delta_psi)
    }

    /// Largest grid distance over all adjacent pairs, by exhaustive enumeration.
    pub fn query_sensitivity(&self) -> Result<Sensitivity<T>> {
        if self.boundaries.is_empty() {
            return Err(invalid("sensitivity of an empty dataset"));
        }
        let mut delta_q = T::zero();
        let mut adjacent_pairs = 0;
        for i in 0..self.boundaries.len() {
            for j in i + 1..self.boundaries.len() {
                let gap = max_gap(&self.boundaries[i], &self.boundaries[j], &self.grid)?;
                if gap <= self.delta_psi {
                    adjacent_pairs += 1;
                    delta_q = delta_q.max(gap);
                }
            }
        }
        Ok(Sensitivity { delta_q, adjacent_pairs, no_adjacent_pair: adjacent_pairs == 0 })
    }

    /// Same database restricted to grid points in `[t_start, t_end]` with a
    /// window-specific adjacency radius.
    pub fn restrict(&self, t_start: T, t_end: T, delta_psi_window: T) -> Result<Self>
    where
        B: Clone,
    {
        let grid: Vec<T> = self.grid.iter().copied().filter(|&t| t >= t_start && t <= t_end).collect();
        Self::new(self.boundaries.clone(), grid, delta_psi_window, self.horizon)
    }
}
