mod common;

use common::{cfg, nominal_setup};
use funnelguard::sim::{run_tracking, ControlMode, Trajectory};
use funnelguard::Error;

fn sup_gap(a: &Trajectory<f64>, b: &Trajectory<f64>, from: f64) -> f64 {
    a.times
        .iter()
        .zip(a.e.iter().zip(&b.e))
        .filter(|(&t, _)| t >= from)
        .fold(0.0, |m, (_, (x, y))| f64::max(m, (x - y).abs()))
}

#[test]
fn zero_noise_output_feedback_stays_in_funnel() {
    let traj = run_tracking(&cfg(1e-4, 10.0), &nominal_setup(ControlMode::OutputFeedback, false)).unwrap();
    assert!(traj.summary.containment_ok);
    assert!(traj.summary.min_margin > 0.0);
    assert!(traj.y_noise.iter().all(|&y| y == 0.0));
    assert_eq!(*traj.times.last().unwrap(), 10.0);
}

#[test]
fn noisy_boundary_output_feedback_stays_in_funnel() {
    let traj = run_tracking(&cfg(1e-4, 10.0), &nominal_setup(ControlMode::OutputFeedback, true)).unwrap();
    assert!(traj.summary.containment_ok, "min margin {}", traj.summary.min_margin);
    assert!(traj.y_noise.iter().any(|&y| y.abs() > 0.05));
    assert!(traj.y_noise.iter().all(|&y| y.abs() <= 0.9));
}

#[test]
fn noisy_boundary_state_feedback_stays_in_funnel() {
    let traj = run_tracking(&cfg(1e-4, 10.0), &nominal_setup(ControlMode::StateFeedback, true)).unwrap();
    assert!(traj.summary.containment_ok);
    for i in 0..traj.len() {
        assert!(traj.s[i].abs() < traj.psi_noisy[i]);
    }
}

#[test]
fn oversized_scaling_violates_the_funnel() {
    let mut setup = nominal_setup(ControlMode::StateFeedback, false);
    setup.gains.varrho = 10.0;
    let err = run_tracking(&cfg(1e-4, 10.0), &setup).unwrap_err();
    assert!(matches!(err, Error::FunnelViolation { t, .. } if t.is_finite()), "{err}");
    assert_eq!(err.category(), "funnel-violation");
}

#[test]
fn identical_seed_is_bitwise_reproducible() {
    let setup = nominal_setup(ControlMode::OutputFeedback, true);
    let a = run_tracking(&cfg(1e-4, 3.0), &setup).unwrap();
    let b = run_tracking(&cfg(1e-4, 3.0), &setup).unwrap();
    let bits = |t: &Trajectory<f64>| t.e.iter().chain(&t.u).chain(&t.psi_noisy).map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));

    let mut other = cfg(1e-4, 3.0);
    other.seed = 43;
    let c = run_tracking(&other, &setup).unwrap();
    assert_ne!(a.y_noise, c.y_noise);
}

#[test]
fn halving_the_step_barely_moves_the_error() {
    let setup = nominal_setup(ControlMode::OutputFeedback, true);
    let coarse = run_tracking(&cfg(1e-4, 10.0), &setup).unwrap();
    let mut fine_cfg = cfg(5e-5, 10.0);
    fine_cfg.record_stride = 20;
    let fine = run_tracking(&fine_cfg, &setup).unwrap();
    assert_eq!(coarse.len(), fine.len());
    for (a, b) in coarse.times.iter().zip(&fine.times) {
        assert!((a - b).abs() < 1e-9);
    }
    let gap = sup_gap(&coarse, &fine, 0.0);
    assert!(gap < 1e-4, "dt-halving gap {gap}");
}

#[test]
fn observer_recovers_state_feedback_after_transient() {
    let of = run_tracking(&cfg(1e-4, 10.0), &nominal_setup(ControlMode::OutputFeedback, false)).unwrap();
    let sf = run_tracking(&cfg(1e-4, 10.0), &nominal_setup(ControlMode::StateFeedback, false)).unwrap();
    let gap = sup_gap(&of, &sf, 1.0);
    assert!(gap < 0.05, "output vs state feedback gap {gap}");
}

#[test]
fn literal_first_equation_blows_past_the_reference_bound() {
    let mut setup = nominal_setup(ControlMode::StateFeedback, false);
    setup.exosystem.unstable_first_equation = true;
    let err = run_tracking(&cfg(1e-4, 10.0), &setup).unwrap_err();
    assert_eq!(err.category(), "config", "{err}");
}

#[test]
fn single_precision_loop_runs() {
    use funnelguard::control::{ControllerGains, CubicOscillator, ObserverParams, SaturationLevels, VanDerPolExosystem};
    use funnelguard::funnel::FunnelBoundary;
    use funnelguard::sim::{NoiseModel, NoisePath, SimConfig, TrackingSetup};
    use funnelguard::stoch::{ContinuousOuParams, TruncatedGaussianParams};
    let setup = TrackingSetup::<f32, _> {
        plant: CubicOscillator,
        xi0: vec![2.0, 0.0],
        exosystem: VanDerPolExosystem::default(),
        exo0: [1.0, 1.0],
        reference_bound: 10.0,
        gains: ControllerGains::new(vec![7.5], 0.01).unwrap(),
        observer: ObserverParams::new(vec![2.0, 1.0], 0.001).unwrap(),
        e_hat0: None,
        saturation: SaturationLevels::new(vec![2.5, 3.0], 5.0).unwrap(),
        boundary: FunnelBoundary::new(std::f32::consts::TAU, 1.3, 0.5).unwrap(),
        noise: NoiseModel {
            input: Some(TruncatedGaussianParams::new(0.0, 1.0, -0.9, 0.9).unwrap()),
            ou: ContinuousOuParams::new(0.01, 1.0).unwrap(),
            path: NoisePath::Continuous,
        },
        mode: ControlMode::StateFeedback,
    };
    let cfg = SimConfig { dt: 1e-4f32, t_final: 2.0, seed: 42, noise_hold: 0.5, burn_in: 0.0, record_stride: 100 };
    let traj = run_tracking(&cfg, &setup).unwrap();
    assert!(traj.summary.containment_ok);
}

#[test]
fn unit_first_saturation_level_loses_the_error() {
    // M̄₁ = 1 sits below the state-feedback peak of |e|, so ω̂₁ saturates
    // while the true error is still climbing and the loop cannot hold it.
    let mut setup = nominal_setup(ControlMode::OutputFeedback, false);
    setup.saturation.m_bar[0] = 1.0;
    let err = run_tracking(&cfg(1e-4, 10.0), &setup).unwrap_err();
    assert_eq!(err.category(), "funnel-violation");
}
