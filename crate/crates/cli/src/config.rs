//! Experiment configuration: one TOML table per module, defaults taken from
//! the published tracking experiment.

use std::path::PathBuf;

use funnelguard::control::{
    ControllerGains, CubicOscillator, NominalDrift, ObserverParams, SaturationLevels, VanDerPolExosystem,
};
use funnelguard::funnel::FunnelBoundary;
use funnelguard::sim::{ControlMode, NoiseModel, NoisePath, SimConfig, TrackingSetup};
use funnelguard::stoch::{ContinuousOuParams, DiscreteOuParams, TruncatedGaussianParams};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Table1,
    Track,
    PrivacyReport,
    DpVerify,
    OuCheck,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Table1 => "table1",
            Experiment::Track => "track",
            Experiment::PrivacyReport => "privacy-report",
            Experiment::DpVerify => "dp-verify",
            Experiment::OuCheck => "ou-check",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub output_dir: PathBuf,
    pub sim: SimSection,
    pub plant: PlantSection,
    pub reference: ReferenceSection,
    pub controller: ControllerSection,
    pub observer: ObserverSection,
    pub saturation: SaturationSection,
    pub funnel: FunnelSection,
    pub noise: NoiseSection,
    pub ou: OuSection,
    pub discrete_ou: DiscreteOuSection,
    pub privacy: PrivacySection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub dt: f64,
    pub t_final: f64,
    pub seed: u64,
    pub noise_hold: f64,
    pub burn_in: f64,
    pub record_stride: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    pub model: String,
    pub xi0: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSection {
    pub exo0: [f64; 2],
    pub mu: f64,
    pub unstable_first_equation: bool,
    /// Abort if either exosystem state leaves `[−bound, bound]`.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSection {
    pub mode: Mode,
    pub k: Vec<f64>,
    pub varrho: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    StateFeedback,
    OutputFeedback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserverSection {
    pub gamma: Vec<f64>,
    pub varsigma: f64,
    pub nominal_drift: NominalDrift,
    pub include_input_term: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e_hat0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaturationSection {
    pub m_bar: Vec<f64>,
    pub m_bar_k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunnelSection {
    pub psi0: f64,
    pub psi_ss: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathKind {
    Continuous,
    Discrete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub enabled: bool,
    pub mu: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub beta: f64,
    pub path: PathKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OuSection {
    pub theta: f64,
    pub vartheta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscreteOuSection {
    pub a_y: f64,
    pub b_y: f64,
    pub a_w: f64,
    pub b_w: f64,
    pub n_steps: usize,
    pub burn_in_steps: usize,
    /// `[μ, σ, α, β]` per table row.
    pub rows: Vec<[f64; 4]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrivacySection {
    pub m: f64,
    pub delta_psi: f64,
    pub delta_psi_prime: f64,
    pub n_bins: usize,
    pub ensemble_size: usize,
    /// Step of the filter-only ensemble runs.
    pub dt: f64,
    pub min_bin_count: u64,
    pub m_sweep: Vec<f64>,
    /// Steady-state level of the second boundary in `dp-verify`.
    pub adjacent_psi_ss: f64,
    /// Start of the comparison window; it ends at `sim.t_final`.
    pub window_start: f64,
}

pub fn default_config() -> ExperimentConfig {
    ExperimentConfig {
        experiment: Experiment::Track,
        output_dir: PathBuf::from("out"),
        sim: SimSection { dt: 1e-4, t_final: 10.0, seed: 42, noise_hold: 2.2, burn_in: 1.0, record_stride: 10 },
        plant: PlantSection { model: "second_order_vdp".into(), xi0: vec![2.0, 0.0] },
        reference: ReferenceSection { exo0: [1.0, 1.0], mu: 2.0, unstable_first_equation: false, bound: 10.0 },
        controller: ControllerSection { mode: Mode::OutputFeedback, k: vec![7.5], varrho: 0.01 },
        observer: ObserverSection {
            gamma: vec![2.0, 1.0],
            varsigma: 0.001,
            nominal_drift: NominalDrift::Zero,
            include_input_term: false,
            e_hat0: None,
        },
        // M̄₁ follows the state-feedback peak of |e| (≈ 2.07) rather than 1
        saturation: SaturationSection { m_bar: vec![2.5, 3.0], m_bar_k: 5.0 },
        funnel: FunnelSection { psi0: 2.0 * std::f64::consts::PI, psi_ss: 1.3, lambda: 0.5 },
        noise: NoiseSection { enabled: true, mu: 0.0, sigma: 1.0, alpha: -0.9, beta: 0.9, path: PathKind::Continuous },
        ou: OuSection { theta: 0.01, vartheta: 1.0 },
        discrete_ou: DiscreteOuSection {
            a_y: 0.01,
            b_y: 1.0,
            a_w: 0.9,
            b_w: 1.0,
            n_steps: 1_000_000,
            burn_in_steps: 1000,
            rows: vec![[0.0, 1.0, -0.5, 0.5], [0.0, 1.0, -1.0, 1.0], [0.0, 3.0, -1.5, 1.5], [0.0, 3.0, -2.0, 2.0]],
        },
        privacy: PrivacySection {
            m: 0.8,
            delta_psi: 0.5,
            delta_psi_prime: 0.5,
            n_bins: 100,
            ensemble_size: 25_000,
            dt: 1e-3,
            min_bin_count: 50,
            m_sweep: vec![0.3, 0.4, 0.5, 0.6, 0.7, 0.8],
            adjacent_psi_ss: 1.7,
            window_start: 1.0,
        },
    }
}

fn cfg_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| cfg_err(e.message().to_string()))
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| cfg_err(e.to_string()))
    }

    /// Apply `section.key=value`; the value is read as a TOML literal and
    /// falls back to a bare string. Unknown keys are rejected.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), CliError> {
        let (path, raw) = assignment
            .split_once('=')
            .ok_or_else(|| cfg_err(format!("override '{assignment}' is not of the form section.key=value")))?;
        let path = path.trim();
        let raw = raw.trim();
        let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
            Ok(mut t) => t.remove("v").expect("parsed table has the key"),
            Err(_) => toml::Value::String(raw.to_string()),
        };
        let mut root = toml::Value::try_from(&*self).map_err(|e| cfg_err(e.to_string()))?;
        let mut slot = &mut root;
        for part in path.split('.') {
            slot = slot
                .as_table_mut()
                .and_then(|t| t.get_mut(part))
                .ok_or_else(|| cfg_err(format!("unknown config key '{path}'")))?;
        }
        *slot = match (&*slot, value) {
            // integers are accepted wherever a float is expected
            (toml::Value::Float(_), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
            (_, v) => v,
        };
        *self = root.try_into().map_err(|e: toml::de::Error| cfg_err(format!("override '{path}': {}", e.message())))?;
        Ok(())
    }

    pub fn sim_config(&self) -> SimConfig<f64> {
        let s = &self.sim;
        SimConfig {
            dt: s.dt,
            t_final: s.t_final,
            seed: s.seed,
            noise_hold: s.noise_hold,
            burn_in: s.burn_in,
            record_stride: s.record_stride,
        }
    }

    /// The filter-only ensemble reuses the hold, horizon and burn-in but has
    /// its own step.
    pub fn privacy_sim_config(&self) -> SimConfig<f64> {
        SimConfig { dt: self.privacy.dt, record_stride: 1, ..self.sim_config() }
    }

    pub fn truncated_noise(&self) -> Result<TruncatedGaussianParams<f64>, CliError> {
        let n = &self.noise;
        Ok(TruncatedGaussianParams::new(n.mu, n.sigma, n.alpha, n.beta)?)
    }

    pub fn ou_params(&self) -> Result<ContinuousOuParams<f64>, CliError> {
        Ok(ContinuousOuParams::new(self.ou.theta, self.ou.vartheta)?)
    }

    pub fn discrete_params(&self) -> Result<DiscreteOuParams<f64>, CliError> {
        let d = &self.discrete_ou;
        Ok(DiscreteOuParams::new(d.a_y, d.b_y, d.a_w, d.b_w)?)
    }

    pub fn boundary(&self, psi_ss: f64) -> Result<FunnelBoundary<f64>, CliError> {
        Ok(FunnelBoundary::new(self.funnel.psi0, psi_ss, self.funnel.lambda)?)
    }

    pub fn tracking_setup(&self, psi_ss: f64) -> Result<TrackingSetup<f64, CubicOscillator>, CliError> {
        if self.plant.model != "second_order_vdp" {
            return Err(cfg_err(format!("unknown plant model '{}' (available: second_order_vdp)", self.plant.model)));
        }
        if self.plant.xi0.len() != 2 {
            return Err(cfg_err(format!("plant.xi0 needs 2 entries, got {}", self.plant.xi0.len())));
        }
        let mut observer = ObserverParams::new(self.observer.gamma.clone(), self.observer.varsigma)?;
        observer.nominal_drift = self.observer.nominal_drift;
        observer.include_input_term = self.observer.include_input_term;
        let path = match self.noise.path {
            PathKind::Continuous => NoisePath::Continuous,
            PathKind::Discrete => NoisePath::Discrete(self.discrete_params()?),
        };
        let input = if self.noise.enabled { Some(self.truncated_noise()?) } else { None };
        if !(self.reference.bound > 0.0) {
            return Err(cfg_err("reference.bound must be > 0"));
        }
        Ok(TrackingSetup {
            plant: CubicOscillator,
            xi0: self.plant.xi0.clone(),
            exosystem: VanDerPolExosystem { mu: self.reference.mu, unstable_first_equation: self.reference.unstable_first_equation },
            exo0: self.reference.exo0,
            reference_bound: self.reference.bound,
            gains: ControllerGains::new(self.controller.k.clone(), self.controller.varrho)?,
            observer,
            e_hat0: self.observer.e_hat0.clone(),
            saturation: SaturationLevels::new(self.saturation.m_bar.clone(), self.saturation.m_bar_k)?,
            boundary: self.boundary(psi_ss)?,
            noise: NoiseModel { input, ou: self.ou_params()?, path },
            mode: match self.controller.mode {
                Mode::StateFeedback => ControlMode::StateFeedback,
                Mode::OutputFeedback => ControlMode::OutputFeedback,
            },
        })
    }

    /// Run every section validator; nothing is simulated.
    pub fn validate(&self) -> Result<(), CliError> {
        let sim = self.sim_config();
        sim.validate()?;
        let setup = self.tracking_setup(self.funnel.psi_ss)?;
        setup.noise.check_admissible(&setup.boundary)?;
        if self.controller.mode == Mode::OutputFeedback {
            sim.observer_warning(self.observer.varsigma)?;
            if self.observer.gamma.len() != 2 || self.saturation.m_bar.len() != 2 {
                return Err(cfg_err("observer.gamma and saturation.m_bar need 2 entries for this plant"));
            }
        }
        if self.controller.k.len() != 1 {
            return Err(cfg_err("controller.k needs exactly k2 for this plant"));
        }
        self.discrete_params()?;
        let d = &self.discrete_ou;
        if d.rows.is_empty() {
            return Err(cfg_err("discrete_ou.rows is empty"));
        }
        for r in &d.rows {
            TruncatedGaussianParams::new(r[0], r[1], r[2], r[3])?;
        }
        if d.n_steps < d.burn_in_steps + 2 {
            return Err(cfg_err("discrete_ou.n_steps must exceed burn_in_steps + 1"));
        }
        let p = &self.privacy;
        for (name, v) in [("m", p.m), ("delta_psi", p.delta_psi), ("delta_psi_prime", p.delta_psi_prime)] {
            if !(v > 0.0) {
                return Err(cfg_err(format!("privacy.{name} must be > 0")));
            }
        }
        if p.m_sweep.iter().any(|&m| !(m > 0.0)) {
            return Err(cfg_err("privacy.m_sweep entries must be > 0"));
        }
        if p.n_bins < 2 || p.ensemble_size == 0 {
            return Err(cfg_err("privacy.n_bins must be >= 2 and privacy.ensemble_size >= 1"));
        }
        self.privacy_sim_config().validate()?;
        self.boundary(p.adjacent_psi_ss)?;
        if !(p.window_start >= 0.0 && p.window_start <= self.sim.t_final) {
            return Err(cfg_err("privacy.window_start must lie in [0, sim.t_final]"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = default_config();
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
        cfg.validate().unwrap();
    }

    #[test]
    fn optional_observer_state_round_trips() {
        let mut cfg = default_config();
        cfg.observer.e_hat0 = Some(vec![0.5, -1.0]);
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = default_config().to_toml().unwrap().replace("[ou]\n", "[ou]\nkappa = 3.0\n");
        assert!(matches!(ExperimentConfig::from_toml(&text), Err(CliError::Config(_))));
        let mut cfg = default_config();
        assert!(cfg.apply_override("ou.kappa=3").is_err());
        assert!(cfg.apply_override("nosection.x=1").is_err());
        assert!(cfg.apply_override("ou.theta").is_err());
    }

    #[test]
    fn overrides_set_typed_values() {
        let mut cfg = default_config();
        cfg.apply_override("observer.varsigma=0.01").unwrap();
        assert_eq!(cfg.observer.varsigma, 0.01);
        cfg.validate().unwrap();
        cfg.apply_override("sim.seed = 7").unwrap();
        cfg.apply_override("funnel.psi_ss=2").unwrap();
        cfg.apply_override("controller.mode=state-feedback").unwrap();
        cfg.apply_override("saturation.m_bar=[1.0, 3.0]").unwrap();
        cfg.apply_override("experiment=ou-check").unwrap();
        assert_eq!(cfg.sim.seed, 7);
        assert_eq!(cfg.funnel.psi_ss, 2.0);
        assert_eq!(cfg.controller.mode, Mode::StateFeedback);
        assert_eq!(cfg.saturation.m_bar, vec![1.0, 3.0]);
        assert_eq!(cfg.experiment, Experiment::OuCheck);
        assert!(cfg.apply_override("sim.seed=abc").is_err());
    }

    #[test]
    fn validation_catches_bad_sections() {
        let mut cfg = default_config();
        cfg.observer.varsigma = 1e-5;
        assert!(cfg.validate().is_err());

        let mut cfg = default_config();
        cfg.noise.alpha = -1.5;
        let err = cfg.validate().unwrap_err();
        assert_eq!(err.category(), "mechanism-invalid");

        let mut cfg = default_config();
        cfg.plant.model = "pendulum".into();
        assert_eq!(cfg.validate().unwrap_err().category(), "config");

        let mut cfg = default_config();
        cfg.sim.noise_hold = 0.00015;
        assert!(cfg.validate().is_err());
    }
}
