//! Fixed-step simulation of the closed loop and of the noise filters.
//!
//! Everything here is deterministic for a given seed: RK4 with a constant
//! step, noise drawn from a ChaCha stream at fixed step indices, and
//! ensembles merged in member order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::control::{
    hgo_deriv, output_feedback_u, plant_deriv, state_feedback_u, ControllerGains, ObserverParams, Plant,
    SaturationLevels, VanDerPolExosystem,
};
use crate::error::{invalid, Error, Result};
use crate::funnel::{BoundaryCurve, FunnelBoundary};
use crate::num::{lit, to_f64, Real};
use crate::stoch::{
    ou_cont_deriv, ou_disc_step, w_envelope, ContinuousOuParams, ContinuousOuState, DiscreteOuParams,
    DiscreteOuState, TruncatedGaussianParams,
};

/// Random stream for ensemble member `index` of a run seeded with `base_seed`.
pub fn member_rng(base_seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(base_seed.wrapping_add(index))
}

/// Reusable RK4 stage buffers.
#[derive(Debug, Clone)]
pub struct Rk4<T> {
    k1: Vec<T>,
    k2: Vec<T>,
    k3: Vec<T>,
    k4: Vec<T>,
    tmp: Vec<T>,
}

impl<T: Real> Rk4<T> {
    pub fn new(n: usize) -> Self {
        let z = vec![T::zero(); n];
        Self { k1: z.clone(), k2: z.clone(), k3: z.clone(), k4: z.clone(), tmp: z }
    }

    /// Advance `x` in place from `t` to `t + dt`.
    pub fn step<F>(&mut self, mut f: F, t: T, x: &mut [T], dt: T) -> Result<()>
    where
        F: FnMut(T, &[T], &mut [T]) -> Result<()>,
    {
        let n = x.len();
        if self.k1.len() != n {
            *self = Self::new(n);
        }
        let half = dt / lit(2.0);
        let diverged = |v: &[T]| v.iter().any(|x| !x.is_finite());

        f(t, x, &mut self.k1)?;
        for i in 0..n {
            self.tmp[i] = x[i] + half * self.k1[i];
        }
        f(t + half, &self.tmp, &mut self.k2)?;
        for i in 0..n {
            self.tmp[i] = x[i] + half * self.k2[i];
        }
        f(t + half, &self.tmp, &mut self.k3)?;
        for i in 0..n {
            self.tmp[i] = x[i] + dt * self.k3[i];
        }
        f(t + dt, &self.tmp, &mut self.k4)?;
        if diverged(&self.k1) || diverged(&self.k2) || diverged(&self.k3) || diverged(&self.k4) {
            return Err(Error::IntegrationDiverged(to_f64(t)));
        }
        let sixth = dt / lit(6.0);
        let two = lit::<T>(2.0);
        for i in 0..n {
            x[i] = x[i] + sixth * (self.k1[i] + two * self.k2[i] + two * self.k3[i] + self.k4[i]);
        }
        if diverged(x) {
            return Err(Error::IntegrationDiverged(to_f64(t + dt)));
        }
        Ok(())
    }
}

/// Single classical RK4 step.
pub fn rk4_step<T: Real, F>(f: F, x: &[T], t: T, dt: T) -> Result<Vec<T>>
where
    F: FnMut(T, &[T], &mut [T]) -> Result<()>,
{
    let mut out = x.to_vec();
    Rk4::new(x.len()).step(f, t, &mut out, dt)?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimConfig<T> {
    pub dt: T,
    pub t_final: T,
    pub seed: u64,
    /// Sample-and-hold interval of the raw noise `v`.
    pub noise_hold: T,
    /// Start of the steady-state window used for statistics.
    pub burn_in: T,
    pub record_stride: usize,
}

impl<T: Real> SimConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > T::zero()) || !self.dt.is_finite() {
            return Err(invalid(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.t_final > T::zero()) || !self.t_final.is_finite() {
            return Err(invalid(format!("t_final must be > 0, got {}", self.t_final)));
        }
        if !(self.noise_hold >= self.dt) {
            return Err(invalid("noise_hold must be >= dt"));
        }
        let ratio = to_f64(self.noise_hold / self.dt);
        if (ratio - ratio.round()).abs() > 1e-6 * ratio {
            return Err(invalid("noise_hold must be an integer multiple of dt"));
        }
        if !(self.burn_in >= T::zero()) {
            return Err(invalid("burn_in must be >= 0"));
        }
        if self.record_stride == 0 {
            return Err(invalid("record_stride must be >= 1"));
        }
        Ok(())
    }

    /// Observer step-size check: `dt < ς` is required, `dt > ς/2` is flagged.
    pub fn observer_warning(&self, varsigma: T) -> Result<Option<String>> {
        if !(self.dt < varsigma) {
            return Err(invalid(format!("dt = {} must be below observer varsigma = {varsigma}", self.dt)));
        }
        if self.dt > varsigma / lit(2.0) {
            return Ok(Some(format!("dt = {} exceeds varsigma/2; observer integration is marginal", self.dt)));
        }
        Ok(None)
    }

    pub fn n_steps(&self) -> usize {
        to_f64(self.t_final / self.dt).round() as usize
    }

    pub fn hold_steps(&self) -> usize {
        (to_f64(self.noise_hold / self.dt).round() as usize).max(1)
    }
}

/// How the bounded noise reaches the boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoisePath<T> {
    /// Continuous filter integrated jointly with the loop.
    Continuous,
    /// Discrete recursion advanced once per hold interval, output held.
    Discrete(DiscreteOuParams<T>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel<T> {
    /// `None` disables the privacy noise entirely.
    pub input: Option<TruncatedGaussianParams<T>>,
    pub ou: ContinuousOuParams<T>,
    pub path: NoisePath<T>,
}

impl<T: Real> NoiseModel<T> {
    /// Reject noise whose worst-case filtered value can make `ψ + y ≤ 0`.
    pub fn check_admissible(&self, boundary: &FunnelBoundary<T>) -> Result<()> {
        let Some(input) = &self.input else { return Ok(()) };
        input.validate()?;
        self.ou.validate()?;
        let worst = match self.path {
            NoisePath::Continuous => input.alpha.min(T::zero()) / self.ou.vartheta,
            NoisePath::Discrete(p) => {
                p.validate()?;
                // |y| ≤ |b_y|·|b_w|·max|v| / ((1−|a_y|)(1−|a_w|))
                let amp = input.alpha.abs().max(input.beta.abs());
                -(p.b_y * p.b_w).abs() * amp / ((T::one() - p.a_y.abs()) * (T::one() - p.a_w.abs()))
            }
        };
        if !(boundary.psi_min() + worst > T::zero()) {
            return Err(Error::MechanismInvalid { t: f64::NAN, value: to_f64(boundary.psi_min() + worst) });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControlMode {
    StateFeedback,
    OutputFeedback,
}

/// Everything `run_tracking` needs besides the step configuration.
#[derive(Debug, Clone)]
pub struct TrackingSetup<T, P> {
    pub plant: P,
    pub xi0: Vec<T>,
    pub exosystem: VanDerPolExosystem<T>,
    pub exo0: [T; 2],
    /// Runtime bound on the exosystem state.
    pub reference_bound: T,
    pub gains: ControllerGains<T>,
    pub observer: ObserverParams<T>,
    /// Observer initial estimate; `None` starts from `(e(0), 0, …, 0)`.
    pub e_hat0: Option<Vec<T>>,
    pub saturation: SaturationLevels<T>,
    pub boundary: FunnelBoundary<T>,
    pub noise: NoiseModel<T>,
    pub mode: ControlMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectorySummary<T> {
    /// `min_t (ψ_noisy(t) − |e(t)|)` over recorded steps.
    pub min_margin: T,
    pub containment_ok: bool,
    pub max_abs_u: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory<T> {
    pub times: Vec<T>,
    pub e: Vec<T>,
    pub psi_noisy: Vec<T>,
    /// `s` under state feedback, `ŝ_s` under output feedback.
    pub s: Vec<T>,
    pub u: Vec<T>,
    pub y_noise: Vec<T>,
    pub summary: TrajectorySummary<T>,
    #[serde(skip)]
    pub warnings: Vec<String>,
}

impl<T: Real> Trajectory<T> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

struct Layout {
    exo: usize,
    ou: usize,
    obs: usize,
    len: usize,
}

impl Layout {
    fn new(rho: usize, with_observer: bool) -> Self {
        let exo = rho;
        let ou = exo + 2;
        let obs = ou + 2;
        let len = if with_observer { obs + rho } else { obs };
        Self { exo, ou, obs, len }
    }
}

struct Outputs<T> {
    e: T,
    psi_noisy: T,
    s: T,
    u: T,
    y: T,
}

/// Closed-loop integration of plant, exosystem, noise filter and (under
/// output feedback) observer, with the noisy boundary fed to the controller.
pub fn run_tracking<T: Real, P: Plant<T>>(cfg: &SimConfig<T>, setup: &TrackingSetup<T, P>) -> Result<Trajectory<T>> {
    cfg.validate()?;
    let rho = setup.plant.rho();
    let mut warnings = Vec::new();
    if setup.xi0.len() != rho {
        return Err(Error::DimensionMismatch { expected: rho, got: setup.xi0.len() });
    }
    setup.gains.validate()?;
    if setup.gains.rho() != rho {
        return Err(Error::DimensionMismatch { expected: rho, got: setup.gains.rho() });
    }
    setup.boundary.check()?;
    setup.noise.check_admissible(&setup.boundary)?;
    let with_observer = setup.mode == ControlMode::OutputFeedback;
    if with_observer {
        setup.observer.validate()?;
        setup.saturation.validate()?;
        if setup.observer.rho() != rho {
            return Err(Error::DimensionMismatch { expected: rho, got: setup.observer.rho() });
        }
        if setup.saturation.m_bar.len() != rho {
            return Err(Error::DimensionMismatch { expected: rho, got: setup.saturation.m_bar.len() });
        }
        warnings.extend(cfg.observer_warning(setup.observer.varsigma)?);
    }
    let layout = Layout::new(rho, with_observer);

    let mut x = vec![T::zero(); layout.len];
    x[..rho].copy_from_slice(&setup.xi0);
    x[layout.exo] = setup.exo0[0];
    x[layout.exo + 1] = setup.exo0[1];
    if with_observer {
        let reference = setup.exosystem.reference_vector(setup.exo0, rho)?;
        match &setup.e_hat0 {
            Some(e0) if e0.len() == rho => x[layout.obs..].copy_from_slice(e0),
            Some(e0) => return Err(Error::DimensionMismatch { expected: rho, got: e0.len() }),
            None => x[layout.obs] = setup.xi0[0] - reference[0],
        }
    }

    let mut rng = member_rng(cfg.seed, 0);
    let mut v_held = T::zero();
    let mut disc = DiscreteOuState::default();

    // y added to the boundary: filter state, or the held discrete output
    let noise_y = |x: &[T], disc: &DiscreteOuState<T>| match setup.noise.path {
        NoisePath::Continuous => x[layout.ou],
        NoisePath::Discrete(_) => disc.y,
    };

    let evaluate = |t: T, x: &[T], y: T, dx: Option<&mut [T]>, v: T| -> Result<Outputs<T>> {
        let exo = [x[layout.exo], x[layout.exo + 1]];
        let reference = setup.exosystem.reference_vector(exo, rho)?;
        let xi = &x[..rho];
        let e = xi[0] - reference[0];
        let psi_noisy = setup.boundary.psi(t) + y;
        if !(psi_noisy > T::zero()) {
            return Err(Error::MechanismInvalid { t: to_f64(t), value: to_f64(psi_noisy) });
        }
        let (u, s) = match setup.mode {
            ControlMode::StateFeedback => {
                let out = state_feedback_u(xi, &reference, psi_noisy, &setup.gains, &setup.plant)
                    .map_err(|err| err.at_time(to_f64(t)))?;
                (out.u, out.s)
            }
            ControlMode::OutputFeedback => {
                let e_hat = &x[layout.obs..layout.obs + rho];
                let out = output_feedback_u(e_hat, &reference, psi_noisy, &setup.gains, &setup.saturation, &setup.plant)
                    .map_err(|err| err.at_time(to_f64(t)))?;
                (out.u_hat_s, out.s_hat_s)
            }
        };
        if let Some(dx) = dx {
            plant_deriv(&setup.plant, t, xi, u, &mut dx[..rho])?;
            let d_exo = setup.exosystem.deriv(exo);
            dx[layout.exo] = d_exo[0];
            dx[layout.exo + 1] = d_exo[1];
            let ou = ContinuousOuState { y: x[layout.ou], w: x[layout.ou + 1] };
            let (dy, dw) = match (setup.noise.input, setup.noise.path) {
                (Some(_), NoisePath::Continuous) => ou_cont_deriv(ou, &setup.noise.ou, v),
                _ => (T::zero(), T::zero()),
            };
            dx[layout.ou] = dy;
            dx[layout.ou + 1] = dw;
            if with_observer {
                let e_hat = &x[layout.obs..layout.obs + rho];
                hgo_deriv(e_hat, e, &setup.observer, &setup.plant, u, &reference, t, &mut dx[layout.obs..])?;
            }
        }
        Ok(Outputs { e, psi_noisy, s, u, y })
    };

    let n_steps = cfg.n_steps();
    let hold = cfg.hold_steps();
    let cap = n_steps / cfg.record_stride + 2;
    let mut traj = Trajectory {
        times: Vec::with_capacity(cap),
        e: Vec::with_capacity(cap),
        psi_noisy: Vec::with_capacity(cap),
        s: Vec::with_capacity(cap),
        u: Vec::with_capacity(cap),
        y_noise: Vec::with_capacity(cap),
        summary: TrajectorySummary { min_margin: T::infinity(), containment_ok: true, max_abs_u: T::zero() },
        warnings,
    };
    let record = |traj: &mut Trajectory<T>, t: T, o: Outputs<T>| {
        let margin = o.psi_noisy - o.e.abs();
        traj.summary.min_margin = traj.summary.min_margin.min(margin);
        traj.summary.containment_ok &= margin > T::zero();
        traj.summary.max_abs_u = traj.summary.max_abs_u.max(o.u.abs());
        traj.times.push(t);
        traj.e.push(o.e);
        traj.psi_noisy.push(o.psi_noisy);
        traj.s.push(o.s);
        traj.u.push(o.u);
        traj.y_noise.push(o.y);
    };

    let mut rk4 = Rk4::new(layout.len);
    let bound = setup.reference_bound;
    for k in 0..n_steps {
        let t = lit::<T>(k as f64) * cfg.dt;
        if k % hold == 0 {
            if let Some(input) = &setup.noise.input {
                v_held = input.sample(&mut rng)?;
                if let NoisePath::Discrete(p) = setup.noise.path {
                    disc = ou_disc_step(disc, &p, v_held);
                }
            }
        }
        let y = noise_y(&x, &disc);
        if k % cfg.record_stride == 0 {
            let o = evaluate(t, &x, y, None, v_held)?;
            record(&mut traj, t, o);
        }
        let v = v_held;
        let disc_now = disc;
        rk4.step(
            |ts, xs, dx| {
                let y = noise_y(xs, &disc_now);
                evaluate(ts, xs, y, Some(dx), v).map(|_| ())
            },
            t,
            &mut x,
            cfg.dt,
        )?;
        if x[layout.exo].abs() > bound || x[layout.exo + 1].abs() > bound {
            return Err(invalid(format!(
                "reference exceeded its bound {bound} at t = {}",
                to_f64(t + cfg.dt)
            )));
        }
    }
    let t_end = lit::<T>(n_steps as f64) * cfg.dt;
    let y = noise_y(&x, &disc);
    let o = evaluate(t_end, &x, y, None, v_held)?;
    record(&mut traj, t_end, o);
    Ok(traj)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteOuRun<T> {
    #[serde(skip)]
    pub samples_y: Vec<T>,
    #[serde(skip)]
    pub samples_w: Vec<T>,
    pub mean_y: T,
    pub mean_w: T,
    pub var_y: T,
    pub var_w: T,
}

/// Sample mean and unbiased variance.
pub fn mean_var<T: Real>(xs: &[T]) -> (T, T) {
    let n = lit::<T>(xs.len() as f64);
    let mean = xs.iter().fold(T::zero(), |a, &x| a + x) / n;
    let ss = xs.iter().fold(T::zero(), |a, &x| a + (x - mean) * (x - mean));
    (mean, ss / (n - T::one()))
}

/// Iterate the discrete recursion from `y = w = 0` with fresh bounded noise,
/// keeping the states after the first `burn_in_steps`.
pub fn run_discrete_ou<T: Real>(
    seed: u64,
    p: &DiscreteOuParams<T>,
    noise: &TruncatedGaussianParams<T>,
    n_steps: usize,
    burn_in_steps: usize,
) -> Result<DiscreteOuRun<T>> {
    p.validate()?;
    noise.validate()?;
    if n_steps < burn_in_steps + 2 {
        return Err(invalid("discrete ou run needs at least two steps after burn-in"));
    }
    let mut rng = member_rng(seed, 0);
    let mut s = DiscreteOuState::default();
    let keep = n_steps - burn_in_steps;
    let mut samples_y = Vec::with_capacity(keep);
    let mut samples_w = Vec::with_capacity(keep);
    for k in 0..n_steps {
        s = ou_disc_step(s, p, noise.sample(&mut rng)?);
        if k >= burn_in_steps {
            samples_y.push(s.y);
            samples_w.push(s.w);
        }
    }
    let (mean_y, var_y) = mean_var(&samples_y);
    let (mean_w, var_w) = mean_var(&samples_w);
    Ok(DiscreteOuRun { samples_y, samples_w, mean_y, mean_w, var_y, var_w })
}

/// Recorded continuous filter path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OuPath<T> {
    pub times: Vec<T>,
    pub y: Vec<T>,
    pub w: Vec<T>,
    /// Values of `y` at hold boundaries `k·noise_hold ≥ burn_in`, taken just
    /// before the next draw.
    #[serde(skip)]
    pub steady_samples: Vec<T>,
}

/// Integrate the continuous filter alone from `y = w = 0` with held
/// bounded noise. The stream is `member_rng(cfg.seed, member)`.
pub fn simulate_ou_path<T: Real>(
    cfg: &SimConfig<T>,
    ou: &ContinuousOuParams<T>,
    noise: Option<&TruncatedGaussianParams<T>>,
    member: u64,
    record: bool,
) -> Result<OuPath<T>> {
    cfg.validate()?;
    ou.validate()?;
    let mut rng = member_rng(cfg.seed, member);
    let n_steps = cfg.n_steps();
    let hold = cfg.hold_steps();
    let mut x = [T::zero(); 2];
    let mut v = T::zero();
    let mut rk4 = Rk4::new(2);
    let mut path = OuPath { times: Vec::new(), y: Vec::new(), w: Vec::new(), steady_samples: Vec::new() };
    for k in 0..=n_steps {
        let t = lit::<T>(k as f64) * cfg.dt;
        if record && (k % cfg.record_stride == 0 || k == n_steps) {
            path.times.push(t);
            path.y.push(x[0]);
            path.w.push(x[1]);
        }
        if k == n_steps {
            if k % hold == 0 && k > 0 && t >= cfg.burn_in {
                path.steady_samples.push(x[0]);
            }
            break;
        }
        if k % hold == 0 {
            if k > 0 && t >= cfg.burn_in {
                path.steady_samples.push(x[0]);
            }
            if let Some(noise) = noise {
                v = noise.sample(&mut rng)?;
            }
        }
        rk4.step(
            |_, s, dx| {
                let (dy, dw) = ou_cont_deriv(ContinuousOuState { y: s[0], w: s[1] }, ou, v);
                dx[0] = dy;
                dx[1] = dw;
                Ok(())
            },
            t,
            &mut x,
            cfg.dt,
        )?;
    }
    Ok(path)
}

/// Steady-state `y` samples pooled over `members` independent paths, member
/// `i` seeded with `cfg.seed + i`. Work is spread over the available cores and
/// merged in member order.
pub fn ou_ensemble_samples<T: Real>(
    cfg: &SimConfig<T>,
    ou: &ContinuousOuParams<T>,
    noise: &TruncatedGaussianParams<T>,
    members: usize,
) -> Result<Vec<T>> {
    cfg.validate()?;
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(members.max(1));
    let chunk = members.div_ceil(workers.max(1)).max(1);
    let results: Vec<Result<Vec<T>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let start = w * chunk;
                let end = ((w + 1) * chunk).min(members);
                scope.spawn(move || {
                    let mut out = Vec::new();
                    for m in start..end {
                        out.extend(simulate_ou_path(cfg, ou, Some(noise), m as u64, false)?.steady_samples);
                    }
                    Ok(out)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("ensemble worker panicked")).collect()
    });
    let mut samples = Vec::new();
    for r in results {
        samples.extend(r?);
    }
    Ok(samples)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FastFilterReport<T> {
    pub max_dev: T,
    pub bound: T,
    pub pass: bool,
}

/// Compare `max_{t ≥ 10θ} |y − w|` against `2θΔ̄` with `Δ̄ = 2·max(|α|, |β|)`.
pub fn fast_filter_check<T: Real>(path: &OuPath<T>, p: &ContinuousOuParams<T>, alpha: T, beta: T) -> Result<FastFilterReport<T>> {
    let start = lit::<T>(10.0) * p.theta;
    match path.times.last() {
        Some(&end) if end >= start => {}
        _ => return Err(invalid("path shorter than 10*theta")),
    }
    let max_dev = path
        .times
        .iter()
        .zip(path.y.iter().zip(&path.w))
        .filter(|(&t, _)| t >= start)
        .fold(T::zero(), |m, (_, (&y, &w))| m.max((y - w).abs()));
    let delta_bar = lit::<T>(2.0) * alpha.abs().max(beta.abs());
    let bound = lit::<T>(2.0) * p.theta * delta_bar;
    Ok(FastFilterReport { max_dev, bound, pass: max_dev <= bound })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnvelopeReport<T> {
    pub points: usize,
    pub violations: usize,
    /// Largest distance outside the envelope (zero when contained).
    pub max_excess: T,
    pub pass: bool,
}

/// Check the recorded `w(t)` against the closed-form envelope at every point.
pub fn envelope_check<T: Real>(path: &OuPath<T>, p: &ContinuousOuParams<T>, alpha: T, beta: T) -> Result<EnvelopeReport<T>> {
    let mut violations = 0;
    let mut max_excess = T::zero();
    for (&t, &w) in path.times.iter().zip(&path.w) {
        let (lo, hi) = w_envelope(p, t, alpha, beta)?;
        let excess = (lo - w).max(w - hi);
        if excess > T::zero() {
            violations += 1;
            max_excess = max_excess.max(excess);
        }
    }
    Ok(EnvelopeReport { points: path.times.len(), violations, max_excess, pass: violations == 0 })
}
