//! Declarative experiment description, loadable from TOML.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::controller::ControllerConfig;
use crate::error::{Error, Result};
use crate::gait_signals::DetectorConfig;
use crate::plant::{
    Activity, GaitTemplate, PerturbationKind, PerturbationSpec, PlantConfig, SpeedRamp,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Steady,
    Perturb,
    SpeedRamp,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Steady => "steady",
            Scenario::Perturb => "perturb",
            Scenario::SpeedRamp => "speed-ramp",
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "steady" => Ok(Scenario::Steady),
            "perturb" => Ok(Scenario::Perturb),
            "speed-ramp" => Ok(Scenario::SpeedRamp),
            other => Err(Error::Config(format!("unknown scenario {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub activity: Activity,
    pub scenario: Scenario,
    pub n_strides: u64,
    pub seed: u64,
    pub amp_fraction: f64,
    /// Body weight (N).
    pub body_weight: f64,
    pub controller: ControllerConfig,
    pub plant: PlantConfig,
    pub detector: DetectorConfig,
    /// Replaces the activity's built-in template when set.
    pub template: Option<GaitTemplate>,
    /// Phase-rate change per unit belt-speed change during perturbations.
    pub phase_gain: f64,
    /// Earliest stride eligible for a perturbation.
    pub perturb_from_stride: u64,
    /// Explicit perturbation schedule; generated from the seed when empty.
    pub perturbations: Vec<PerturbationSpec>,
    pub speed_ramp: Option<SpeedRamp>,
    /// Extrapolate the latest IMU frames between 100 Hz samples.
    pub extrapolate_kinematics: bool,
    /// Prediction horizon of the kinematics fed to the feedforward (s).
    pub feedforward_lead: f64,
    /// Relative tolerance for the convergence stride.
    pub convergence_tol: f64,
    /// Number of trailing strides aggregated in the report.
    pub aggregate_strides: usize,
    /// Control period (s).
    pub dt: f64,
    /// Time simulated before the first foot contact (s).
    pub pre_roll: f64,
    /// Load-cell fault injected into the measured force.
    pub force_spike: Option<ForceSpike>,
    /// Writes `timeseries.csv` and `summary.json` here when set.
    pub out_dir: Option<PathBuf>,
}

/// Replaces the measured force with `force` on the control tick at `t_ms`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForceSpike {
    pub t_ms: f64,
    pub force: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            activity: Activity::Lw,
            scenario: Scenario::Steady,
            n_strides: 60,
            seed: 1,
            amp_fraction: 0.15,
            body_weight: 735.75,
            controller: ControllerConfig::default(),
            plant: PlantConfig::default(),
            detector: DetectorConfig::default(),
            template: None,
            phase_gain: 1.5,
            perturb_from_stride: 15,
            perturbations: Vec::new(),
            speed_ramp: None,
            extrapolate_kinematics: true,
            feedforward_lead: 0.01,
            convergence_tol: 0.05,
            aggregate_strides: 10,
            dt: 0.001,
            pre_roll: 0.3,
            force_spike: None,
            out_dir: None,
        }
    }
}

impl ScenarioConfig {
    pub fn new(activity: Activity, scenario: Scenario, n_strides: u64, seed: u64) -> Self {
        Self {
            activity,
            scenario,
            n_strides,
            seed,
            ..Self::default()
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn template(&self) -> GaitTemplate {
        self.template
            .unwrap_or_else(|| GaitTemplate::for_activity(self.activity))
    }

    /// Peak assistance force (N).
    pub fn amp(&self) -> f64 {
        self.amp_fraction * self.body_weight
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_strides == 0 {
            return Err(Error::Config("n_strides must be positive".into()));
        }
        if !(self.amp_fraction > 0.0 && self.amp_fraction < 1.0) || !(self.body_weight > 0.0) {
            return Err(Error::Config(format!(
                "invalid assistance magnitude {} of {} N",
                self.amp_fraction, self.body_weight
            )));
        }
        let ticks_per_sample = crate::gait_signals::IMU_PERIOD_MS / (self.dt * 1000.0);
        if !(self.dt > 0.0) || (ticks_per_sample - ticks_per_sample.round()).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "control period {} s must divide the IMU period",
                self.dt
            )));
        }
        if !(self.feedforward_lead >= 0.0 && self.feedforward_lead < 0.1) {
            return Err(Error::Config(format!(
                "feedforward lead {} s out of range",
                self.feedforward_lead
            )));
        }
        if !(self.convergence_tol > 0.0) || self.aggregate_strides == 0 || !(self.pre_roll > 0.0) {
            return Err(Error::Config("invalid metric or pre-roll settings".into()));
        }
        self.controller.validate()?;
        self.plant.validate()?;
        self.template().validate()?;
        for p in &self.perturbations {
            p.validate()?;
        }
        if self.scenario == Scenario::Perturb
            && self.perturbations.is_empty()
            && self.n_strides < self.perturb_from_stride + 9
        {
            return Err(Error::Config(format!(
                "perturb scenario needs at least {} strides",
                self.perturb_from_stride + 9
            )));
        }
        Ok(())
    }

    /// Perturbations in effect: the explicit list, or for the perturb scenario two
    /// forward and two backward ones on non-adjacent strides drawn from the seed.
    pub fn perturbation_schedule(&self) -> Vec<PerturbationSpec> {
        if !self.perturbations.is_empty() || self.scenario != Scenario::Perturb {
            return self.perturbations.clone();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x005e_ed0f_9e77);
        let lo = self.perturb_from_stride;
        // Keep the last stride clean so every perturbed stride is complete.
        let hi = self.n_strides - 2;
        let mut picked: Vec<u64> = Vec::with_capacity(4);
        while picked.len() < 4 {
            let c = rng.random_range(lo..=hi);
            if picked.iter().all(|p| c.abs_diff(*p) > 1) {
                picked.push(c);
            }
        }
        let mut kinds = [
            PerturbationKind::Forward,
            PerturbationKind::Forward,
            PerturbationKind::Backward,
            PerturbationKind::Backward,
        ];
        kinds.shuffle(&mut rng);
        picked
            .iter()
            .zip(kinds)
            .map(|(s, k)| PerturbationSpec::new(k, vec![*s]))
            .collect()
    }

    /// Slow ramp in effect for the speed-ramp scenario.
    pub fn ramp_schedule(&self) -> Option<SpeedRamp> {
        match (self.scenario, self.speed_ramp) {
            (_, Some(r)) => Some(r),
            (Scenario::SpeedRamp, None) => Some(SpeedRamp {
                start_stride: self.perturb_from_stride,
                hold_strides: 5,
                drop: 0.5,
                accel: 0.5,
                belt_speed: self.activity.belt_speed(),
            }),
            _ => None,
        }
    }
}
