#![allow(dead_code)]

use funnelguard::control::{ControllerGains, CubicOscillator, ObserverParams, SaturationLevels, VanDerPolExosystem};
use funnelguard::funnel::FunnelBoundary;
use funnelguard::sim::{ControlMode, NoiseModel, NoisePath, SimConfig, TrackingSetup};
use funnelguard::stoch::{ContinuousOuParams, TruncatedGaussianParams};

pub fn cfg(dt: f64, t_final: f64) -> SimConfig<f64> {
    SimConfig { dt, t_final, seed: 42, noise_hold: 2.2, burn_in: 1.0, record_stride: 10 }
}

/// Reference parameter set: ξ(0) = (2, 0), exosystem at (1, 1), k₂ = 7.5, ϱ = 0.01,
/// ς = 0.001, γ = (2, 1), funnel (2π, 1.3, 0.5), noise N(0, 1) cut to ±0.9.
/// M̄₁ is 2.5, not 1: under state feedback |e| peaks near 2.07.
pub fn nominal_setup(mode: ControlMode, noisy: bool) -> TrackingSetup<f64, CubicOscillator> {
    let input = noisy.then(|| TruncatedGaussianParams::new(0.0, 1.0, -0.9, 0.9).unwrap());
    TrackingSetup {
        plant: CubicOscillator,
        xi0: vec![2.0, 0.0],
        exosystem: VanDerPolExosystem::default(),
        exo0: [1.0, 1.0],
        reference_bound: 10.0,
        gains: ControllerGains::new(vec![7.5], 0.01).unwrap(),
        observer: ObserverParams::new(vec![2.0, 1.0], 0.001).unwrap(),
        e_hat0: None,
        saturation: SaturationLevels::new(vec![2.5, 3.0], 5.0).unwrap(),
        boundary: FunnelBoundary::new(2.0 * std::f64::consts::PI, 1.3, 0.5).unwrap(),
        noise: NoiseModel { input, ou: ContinuousOuParams::new(0.01, 1.0).unwrap(), path: NoisePath::Continuous },
        mode,
    }
}
