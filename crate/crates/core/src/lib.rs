//! Funnel control with an OU-filtered, bounded privacy mechanism on the
//! funnel boundary, plus empirical `(ε, δ)` accounting for that mechanism.
//!
//! Everything is generic over [`Real`] (`f32` or `f64`); the `*64` aliases
//! below are what the CLI uses.

pub mod control;
pub mod error;
pub mod funnel;
pub mod num;
pub mod privacy;
pub mod sim;
pub mod stoch;

pub use error::{Error, Result};
pub use num::Real;

pub type FunnelBoundary64 = funnel::FunnelBoundary<f64>;
pub type BoundaryDataset64 = funnel::BoundaryDataset<f64>;
pub type TruncatedGaussian64 = stoch::TruncatedGaussianParams<f64>;
pub type ContinuousOu64 = stoch::ContinuousOuParams<f64>;
pub type DiscreteOu64 = stoch::DiscreteOuParams<f64>;
pub type ControllerGains64 = control::ControllerGains<f64>;
pub type ObserverParams64 = control::ObserverParams<f64>;
pub type SaturationLevels64 = control::SaturationLevels<f64>;
pub type SimConfig64 = sim::SimConfig<f64>;
pub type NoiseModel64 = sim::NoiseModel<f64>;
pub type Trajectory64 = sim::Trajectory<f64>;
pub type EmpiricalPdf64 = privacy::EmpiricalPdf<f64>;
pub type PrivacyBoundReport64 = privacy::PrivacyBoundReport<f64>;
