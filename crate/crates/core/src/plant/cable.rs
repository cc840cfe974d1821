//! Cable, motor and load-cell plant.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::controller::VelocityCommand;
use crate::error::{Error, Result};
use crate::gait_signals::KinematicSample;
use crate::tendon::TendonModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantConfig {
    /// Motor velocity lag (s); zero follows the command exactly.
    pub tau: f64,
    /// Motor speed limit (mm/s); infinite disables saturation.
    pub v_max: f64,
    /// Migration plateau (mm).
    pub mig_max: f64,
    /// Migration time constant (assisted strides).
    pub mig_strides: f64,
    /// Stance force at which a stride's migration step occurs (N).
    pub mig_force: f64,
    /// Load-cell noise standard deviation (N).
    pub force_noise_sd: f64,
    /// Cable length beyond taut at start (mm).
    pub initial_slack: f64,
    pub lever_arm_r: f64,
    pub k_all: f64,
    pub baseline_c: f64,
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self {
            tau: 0.010,
            v_max: 250.0,
            mig_max: 4.0,
            mig_strides: 3.0,
            mig_force: 20.0,
            force_noise_sd: 0.2,
            initial_slack: 5.0,
            lever_arm_r: 100.0,
            k_all: 12.5,
            baseline_c: 300.0,
        }
    }
}

impl PlantConfig {
    /// No lag, no saturation, no noise, no migration.
    pub fn ideal() -> Self {
        Self {
            tau: 0.0,
            v_max: f64::INFINITY,
            mig_max: 0.0,
            force_noise_sd: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.tau >= 0.0
            && self.v_max > 0.0
            && self.mig_max >= 0.0
            && self.mig_strides > 0.0
            && self.force_noise_sd >= 0.0
            && self.initial_slack >= 0.0
            && self.tau.is_finite()
            && self.force_noise_sd.is_finite();
        if !ok {
            return Err(Error::Config(format!("invalid plant config {self:?}")));
        }
        TendonModel::new(self.lever_arm_r, self.k_all, self.baseline_c).map(|_| ())
    }

    pub fn tendon_truth(&self) -> TendonModel {
        TendonModel {
            lever_arm_r: self.lever_arm_r,
            k_all: self.k_all,
            baseline_c: self.baseline_c,
            delta_l1: 0.0,
        }
    }
}

/// Migration after `n` loaded strides.
pub fn migration_after(mig_max: f64, mig_strides: f64, n: u64) -> f64 {
    mig_max * (1.0 - (-(n as f64) / mig_strides).exp())
}

/// Measurements returned by one plant step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantOutput {
    pub f_truth: f64,
    pub f_meas: f64,
    pub l_meas: f64,
    pub l_meas_rate: f64,
}

#[derive(Debug, Clone)]
pub struct PlantState {
    cfg: PlantConfig,
    tendon: TendonModel,
    pub l_cable: f64,
    pub motor_v: f64,
    pub force: f64,
    pub migration: f64,
    pub stride_index: u64,
    loaded_strides: u64,
    stride_loaded: bool,
    l_start: f64,
    rng: ChaCha8Rng,
    noise: Normal<f64>,
}

impl PlantState {
    /// Plant with the cable `initial_slack` beyond taut at the ankle angle `theta_df0`.
    pub fn new(cfg: PlantConfig, theta_df0: f64, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let tendon = cfg.tendon_truth();
        let l_cable = tendon.tendon_length(theta_df0, 0.0) + cfg.initial_slack;
        Ok(Self {
            cfg,
            tendon,
            l_cable,
            motor_v: 0.0,
            force: 0.0,
            migration: 0.0,
            stride_index: 0,
            loaded_strides: 0,
            stride_loaded: false,
            l_start: l_cable,
            rng: ChaCha8Rng::seed_from_u64(seed),
            noise: Normal::new(0.0, cfg.force_noise_sd).expect("validated sd"),
        })
    }

    pub fn config(&self) -> &PlantConfig {
        &self.cfg
    }

    /// Motor travel from the start position (mm, retraction positive).
    pub fn motor_pos(&self) -> f64 {
        self.l_start - self.l_cable
    }

    /// Taut length at the given ankle angle.
    pub fn l_taut(&self, theta_df: f64) -> f64 {
        self.tendon.arc(theta_df) + self.cfg.baseline_c - self.migration
    }

    fn force_at(&self, theta_df: f64) -> f64 {
        (self.cfg.k_all * (self.l_taut(theta_df) - self.l_cable)).max(0.0)
    }

    /// Advances motor, cable and load cell by `dt`.
    pub fn step(&mut self, cmd: &VelocityCommand, kin: &KinematicSample, dt: f64) -> PlantOutput {
        let target = cmd.v.clamp(-self.cfg.v_max, self.cfg.v_max);
        self.motor_v = if self.cfg.tau > 0.0 {
            let a = 1.0 - (-dt / self.cfg.tau).exp();
            self.motor_v + a * (target - self.motor_v)
        } else {
            target
        };
        self.motor_v = self.motor_v.clamp(-self.cfg.v_max, self.cfg.v_max);
        self.l_cable -= self.motor_v * dt;
        self.force = self.force_at(kin.theta_df);
        if !self.stride_loaded && self.force >= self.cfg.mig_force {
            // The suit slips once per stride as load builds.
            self.stride_loaded = true;
            self.loaded_strides += 1;
            self.migration =
                migration_after(self.cfg.mig_max, self.cfg.mig_strides, self.loaded_strides);
            self.force = self.force_at(kin.theta_df);
        }
        let f_meas = if self.cfg.force_noise_sd > 0.0 {
            self.force + self.noise.sample(&mut self.rng)
        } else {
            self.force
        };
        PlantOutput {
            f_truth: self.force,
            f_meas,
            l_meas: self.l_cable,
            l_meas_rate: -self.motor_v,
        }
    }

    /// Called at each true foot contact.
    pub fn on_stride_start(&mut self) {
        self.stride_loaded = false;
        self.stride_index += 1;
    }

    pub fn loaded_strides(&self) -> u64 {
        self.loaded_strides
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::CommandSource;

    fn kin(df: f64) -> KinematicSample {
        KinematicSample::new(0.0, 0.0, df, 0.0, 0.0).unwrap()
    }

    fn cmd(v: f64) -> VelocityCommand {
        VelocityCommand {
            v,
            source: CommandSource::StanceFBFF,
        }
    }

    #[test]
    fn slack_cable_has_no_force() {
        let mut p = PlantState::new(PlantConfig::ideal(), 0.0, 1).unwrap();
        let out = p.step(&cmd(0.0), &kin(0.0), 1e-3);
        assert_eq!(out.f_truth, 0.0);
    }

    #[test]
    fn quasi_static_retract() {
        let cfg = PlantConfig {
            initial_slack: 0.0,
            ..PlantConfig::ideal()
        };
        let mut p = PlantState::new(cfg, 0.0, 1).unwrap();
        // Pull 2 mm to be taut, then 1 mm more.
        for _ in 0..2000 {
            p.step(&cmd(1.0), &kin(0.0), 1e-3);
        }
        let f0 = p.force;
        for _ in 0..1000 {
            p.step(&cmd(1.0), &kin(0.0), 1e-3);
        }
        assert!((p.force - f0 - 12.5).abs() < 1e-9, "{} {}", f0, p.force);
    }

    #[test]
    fn static_command_static_force() {
        let cfg = PlantConfig {
            initial_slack: 0.0,
            ..PlantConfig::ideal()
        };
        let mut p = PlantState::new(cfg, 0.0, 1).unwrap();
        for _ in 0..100 {
            p.step(&cmd(10.0), &kin(0.0), 1e-3);
        }
        let f = p.force;
        for _ in 0..100 {
            assert_eq!(p.step(&cmd(0.0), &kin(0.0), 1e-3).f_truth, f);
        }
    }

    #[test]
    fn lag_and_saturation() {
        let mut p = PlantState::new(PlantConfig::default(), 0.0, 1).unwrap();
        p.step(&cmd(1000.0), &kin(0.0), 1e-3);
        let expect = 250.0 * (1.0 - (-0.1f64).exp());
        assert!((p.motor_v - expect).abs() < 1e-9);
        for _ in 0..200 {
            p.step(&cmd(1000.0), &kin(0.0), 1e-3);
        }
        assert!(p.motor_v <= 250.0 && p.motor_v > 249.0);
    }

    #[test]
    fn migration_curve() {
        let m = migration_after(4.0, 3.0, 10);
        assert!((m - 4.0 * (1.0 - (-10.0f64 / 3.0).exp())).abs() < 1e-15);
        assert!((m - 3.857).abs() < 1e-3);
        assert!(m >= 0.95 * 4.0);
    }

    #[test]
    fn migration_steps_once_per_loaded_stride() {
        let cfg = PlantConfig {
            initial_slack: 0.0,
            mig_max: 4.0,
            ..PlantConfig::ideal()
        };
        let mut p = PlantState::new(cfg, 0.0, 1).unwrap();
        for _ in 0..3 {
            p.on_stride_start();
            // 6 mm of retraction loads the cable past 20 N despite earlier slips.
            for _ in 0..2000 {
                p.step(&cmd(3.0), &kin(0.0), 1e-3);
            }
            p.step(&cmd(-6000.0), &kin(0.0), 1e-3);
        }
        assert_eq!(p.loaded_strides(), 3);
        assert!((p.migration - migration_after(4.0, 3.0, 3)).abs() < 1e-12);
        p.on_stride_start();
        p.step(&cmd(0.0), &kin(0.0), 1e-3);
        assert_eq!(p.loaded_strides(), 3);
    }

    #[test]
    fn noise_is_seeded() {
        let run = |seed| {
            let mut p = PlantState::new(PlantConfig::default(), 0.0, seed).unwrap();
            (0..50)
                .map(|_| p.step(&cmd(20.0), &kin(0.0), 1e-3).f_meas)
                .collect::<Vec<_>>()
        };
        assert_eq!(run(3), run(3));
        assert_ne!(run(3), run(4));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn force_nonnegative_and_retract_never_loosens(
                vs in proptest::collection::vec(-300.0f64..300.0, 1..200),
                dfs in proptest::collection::vec(-20.0f64..20.0, 1..200),
            ) {
                let cfg = PlantConfig { initial_slack: 0.0, ..PlantConfig::ideal() };
                let mut p = PlantState::new(cfg, 0.0, 1).unwrap();
                for (v, df) in vs.iter().zip(dfs.iter().cycle()) {
                    let before = p.force_at(*df);
                    let out = p.step(&cmd(*v), &kin(*df), 1e-3);
                    prop_assert!(out.f_truth >= 0.0);
                    if p.l_cable > p.l_taut(*df) {
                        prop_assert_eq!(out.f_truth, 0.0);
                    }
                    if *v > 0.0 {
                        prop_assert!(out.f_truth >= before);
                    }
                }
            }
        }
    }
}
