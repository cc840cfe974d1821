//! Swing/stance state machine producing cable velocity commands at the control rate.
//!
//! Sign convention: a positive command retracts cable, which shortens the artificial
//! tendon. Length rates (`dL/dt`) therefore map to commands with a minus sign.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gait_signals::{EventKind, GaitEvent, KinematicSample};
use crate::profile::GaussianParams;
use crate::tendon::TendonModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerConfig {
    /// Swing length loop proportional gain (1/s).
    pub kp: f64,
    /// Swing length loop integral gain (1/s^2).
    pub ki: f64,
    /// Swing damping injection gain.
    pub kd: f64,
    /// Force-to-velocity map inertia (N s/mm).
    pub map_m: f64,
    /// Force-to-velocity map damping (N/mm).
    pub map_b: f64,
    /// Peak cable force targeted during swing (N).
    pub swing_target_force: f64,
    /// Peak assistance as a fraction of body weight.
    pub amp_fraction: f64,
    /// Strides walked without assistance after pretightening.
    pub silent_cycles: u64,
    pub force_ceiling: f64,
    /// Allowed motor travel (mm, retraction positive) relative to the start position.
    pub position_limits: (f64, f64),
    /// Force that ends pretightening (N).
    pub pretighten_force: f64,
    /// Retraction speed while pretightening (mm/s).
    pub pretighten_speed: f64,
    /// Cable kept beyond the predicted taut length while silent (mm).
    pub slack_margin: f64,
    /// Command envelope (mm/s).
    pub v_max: f64,
    /// Swing force below which the cable counts as slack and the tendon model
    /// supplies the swing force for the length update (N).
    pub slack_force_floor: f64,
    /// Stance pulley servo on the integrated command; 0 disables it (1/s).
    pub servo_gain: f64,
    /// Clamp on the swing integral (mm s).
    pub integral_limit: f64,
    /// Pay-out speed after an abort (mm/s).
    pub release_speed: f64,
    /// Pay-out distance after an abort before the motor is stopped (mm).
    pub release_distance: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            kp: 23.0,
            ki: 0.0001,
            kd: 1.8,
            map_m: 0.0,
            map_b: 15.7,
            swing_target_force: 3.0,
            amp_fraction: 0.15,
            silent_cycles: 5,
            force_ceiling: 300.0,
            position_limits: (-80.0, 80.0),
            pretighten_force: 5.0,
            pretighten_speed: 20.0,
            slack_margin: 10.0,
            v_max: 250.0,
            slack_force_floor: 1.0,
            servo_gain: 80.0,
            integral_limit: 50.0,
            release_speed: 100.0,
            release_distance: 20.0,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.kp,
            self.map_b,
            self.swing_target_force,
            self.amp_fraction,
            self.force_ceiling,
            self.pretighten_force,
            self.pretighten_speed,
            self.v_max,
            self.release_speed,
        ];
        let nonneg = [
            self.ki,
            self.kd,
            self.map_m,
            self.slack_margin,
            self.servo_gain,
            self.slack_force_floor,
            self.integral_limit,
            self.release_distance,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0))
            || nonneg.iter().any(|v| !(v.is_finite() && *v >= 0.0))
            || !(self.position_limits.0 < 0.0 && self.position_limits.1 > 0.0)
        {
            return Err(Error::Config(format!("invalid controller config {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    Pretighten,
    Silent,
    Swing,
    Stance,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Pretighten => "pretighten",
            Mode::Silent => "silent",
            Mode::Swing => "swing",
            Mode::Stance => "stance",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CommandSource {
    SwingPI,
    StanceFBFF,
    Hold,
    Release,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityCommand {
    /// Cable velocity (mm/s), positive retracts.
    pub v: f64,
    pub source: CommandSource,
}

impl VelocityCommand {
    pub fn hold() -> Self {
        Self {
            v: 0.0,
            source: CommandSource::Hold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SafetyStatus {
    Ok,
    Abort,
}

/// Largest measured stance force of the current stride and the state it occurred in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StancePeak {
    pub force: f64,
    pub theta_sk: f64,
    pub theta_df: f64,
    pub l_meas: f64,
}

/// Measurements available to the controller on one control tick. Force and length
/// come from the end of the previous tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickInput {
    pub kin: KinematicSample,
    /// Kinematics the feedforward is evaluated on, typically predicted ahead to cover
    /// the motor lag. `kin` is used when `None`.
    pub kin_ff: Option<KinematicSample>,
    pub f_meas: f64,
    /// Artificial tendon length from the motor encoder (mm).
    pub l_meas: f64,
    pub l_meas_rate: f64,
    /// Motor travel from the start position (mm, retraction positive).
    pub motor_pos: f64,
}

/// One tick's command together with the desired force it was computed against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickOutput {
    pub cmd: VelocityCommand,
    pub f_des: f64,
    pub mode: Mode,
}

#[derive(Debug, Clone)]
pub struct Controller {
    cfg: ControllerConfig,
    tendon: TendonModel,
    mode: Mode,
    /// Swing target length (mm); `None` until the first assisted swing.
    l_swing: Option<f64>,
    e_l_integral: f64,
    f_swing_max: f64,
    /// Swing peak DF (deg) and the signed force the tendon model predicts there (N).
    f_swing_model: Option<(f64, f64)>,
    gc_count: u64,
    active_params: Option<GaussianParams>,
    stance_peak: Option<StancePeak>,
    /// Largest DF angle seen during an unassisted swing (deg).
    swing_df_max: Option<f64>,
    in_stance: bool,
    last_event: Option<EventKind>,
    fb_state: f64,
    /// Pulley position implied by the stance commands issued so far (mm).
    l_cmd: Option<f64>,
    aborted: bool,
    release_left: f64,
}

impl Controller {
    /// `tendon` is the controller's model of the suit; its baseline is re-calibrated when
    /// pretightening completes.
    pub fn new(
        cfg: ControllerConfig,
        tendon: TendonModel,
        params: Option<GaussianParams>,
    ) -> Result<Self> {
        cfg.validate()?;
        tendon.validate()?;
        if let Some(p) = &params {
            p.validate()?;
        }
        Ok(Self {
            cfg,
            tendon,
            mode: Mode::Pretighten,
            l_swing: None,
            e_l_integral: 0.0,
            f_swing_max: 0.0,
            f_swing_model: None,
            gc_count: 0,
            active_params: params,
            stance_peak: None,
            swing_df_max: None,
            in_stance: false,
            last_event: None,
            fb_state: 0.0,
            l_cmd: None,
            aborted: false,
            release_left: 0.0,
        })
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.cfg
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn tendon(&self) -> &TendonModel {
        &self.tendon
    }

    pub fn l_swing(&self) -> Option<f64> {
        self.l_swing
    }

    pub fn gc_count(&self) -> u64 {
        self.gc_count
    }

    pub fn e_l_integral(&self) -> f64 {
        self.e_l_integral
    }

    pub fn f_swing_max(&self) -> f64 {
        self.f_swing_max
    }

    pub fn active_params(&self) -> Option<&GaussianParams> {
        self.active_params.as_ref()
    }

    pub fn stance_peak(&self) -> Option<&StancePeak> {
        self.stance_peak.as_ref()
    }

    pub fn is_aborted(&self) -> bool {
        self.aborted
    }

    /// Puts the controller straight into assistance with the given swing length, as if
    /// pretightening and the silent strides had already happened.
    pub fn start_assisted(&mut self, l_swing: f64, in_stance: bool) {
        self.l_swing = Some(l_swing);
        self.gc_count = self.gc_count.max(self.cfg.silent_cycles);
        self.in_stance = in_stance;
        self.mode = if in_stance { Mode::Stance } else { Mode::Swing };
        self.last_event = Some(if in_stance {
            EventKind::FootContact
        } else {
            EventKind::FootOff
        });
    }

    /// Gait event handling. `new_params` is adopted only at foot contact.
    pub fn on_event(&mut self, event: &GaitEvent, new_params: Option<GaussianParams>) {
        if self.last_event == Some(event.kind) {
            log::warn!(
                "ignoring out-of-order {:?} at {} ms",
                event.kind,
                event.t_ms
            );
            return;
        }
        self.last_event = Some(event.kind);
        match event.kind {
            EventKind::FootContact => self.on_foot_contact(new_params),
            EventKind::FootOff => self.on_foot_off(),
        }
    }

    fn on_foot_contact(&mut self, new_params: Option<GaussianParams>) {
        if let Some(p) = new_params {
            if p.validate().is_ok() {
                self.active_params = Some(p);
            } else {
                log::warn!("rejecting invalid params at foot contact: {p:?}");
            }
        }
        self.in_stance = true;
        self.e_l_integral = 0.0;
        self.fb_state = 0.0;
        self.l_cmd = None;
        self.stance_peak = None;
        match self.mode {
            Mode::Pretighten => {}
            Mode::Silent | Mode::Swing | Mode::Stance => {
                self.mode = if self.gc_count < self.cfg.silent_cycles
                    || (self.l_swing.is_none() && self.l_swing_seed().is_none())
                {
                    Mode::Silent
                } else {
                    Mode::Stance
                };
            }
        }
        self.gc_count += 1;
    }

    fn on_foot_off(&mut self) {
        self.in_stance = false;
        if self.mode == Mode::Stance {
            self.update_migration();
            let k = self.tendon.k_all;
            self.l_swing = match self.l_swing {
                Some(l) => Some(l + (self.swing_force() - self.cfg.swing_target_force) / k),
                None => self.l_swing_seed(),
            };
            self.mode = Mode::Swing;
        } else if self.mode == Mode::Silent && self.gc_count >= self.cfg.silent_cycles {
            // The swing before the first assisted stance already regulates quasi-slack.
            self.l_swing = self.l_swing.or_else(|| self.l_swing_seed());
            if self.l_swing.is_some() {
                self.e_l_integral = 0.0;
                self.mode = Mode::Swing;
            }
        }
        self.f_swing_max = 0.0;
        self.f_swing_model = None;
    }

    /// Swing force fed to the length update. A slack cable reads only sensor noise, so
    /// the model's signed prediction stands in for it.
    fn swing_force(&self) -> f64 {
        match self.f_swing_model {
            Some((_, m)) if self.f_swing_max < self.cfg.slack_force_floor => {
                m.min(self.f_swing_max)
            }
            _ => self.f_swing_max,
        }
    }

    /// Re-estimates migration from this stride's peak-force sample and shifts the swing
    /// length by the change, so the swing force is unaffected by the slip.
    fn update_migration(&mut self) {
        let Some(peak) = self.stance_peak else { return };
        if peak.force < self.cfg.pretighten_force {
            return;
        }
        let before = self.tendon.delta_l1;
        let est = self
            .tendon
            .estimate_migration(peak.l_meas, peak.theta_df, peak.force);
        if est.accepted {
            if let Some(l) = self.l_swing.as_mut() {
                *l -= self.tendon.delta_l1 - before;
            }
        }
    }

    /// Swing length giving the target force at the largest swing DF seen so far.
    fn l_swing_seed(&self) -> Option<f64> {
        self.swing_df_max
            .map(|df| self.tendon.tendon_length(df, self.cfg.swing_target_force))
    }

    /// Latches an abort on an over-force or out-of-range motor position.
    pub fn safety_check(&mut self, f_meas: f64, motor_pos: f64) -> SafetyStatus {
        if self.aborted {
            return SafetyStatus::Abort;
        }
        let (lo, hi) = self.cfg.position_limits;
        if !f_meas.is_finite() || f_meas > self.cfg.force_ceiling || !(lo..=hi).contains(&motor_pos)
        {
            log::error!("safety abort: force {f_meas:.1} N, motor position {motor_pos:.1} mm");
            self.aborted = true;
            self.release_left = self.cfg.release_distance;
            return SafetyStatus::Abort;
        }
        SafetyStatus::Ok
    }

    fn release_tick(&mut self, dt: f64) -> VelocityCommand {
        if self.release_left > 0.0 {
            self.release_left -= self.cfg.release_speed * dt;
            VelocityCommand {
                v: -self.cfg.release_speed,
                source: CommandSource::Release,
            }
        } else {
            VelocityCommand::hold()
        }
    }

    /// Full control tick: safety, then the mode's command law.
    pub fn tick(&mut self, inp: &TickInput, dt: f64) -> TickOutput {
        if self.safety_check(inp.f_meas, inp.motor_pos) == SafetyStatus::Abort {
            return TickOutput {
                cmd: self.release_tick(dt),
                f_des: 0.0,
                mode: self.mode,
            };
        }
        let mut f_des = 0.0;
        let cmd = match self.mode {
            Mode::Pretighten => self.tick_pretighten(inp, dt),
            Mode::Silent => {
                if !self.in_stance {
                    let df = inp.kin.theta_df;
                    self.swing_df_max = Some(self.swing_df_max.map_or(df, |m| m.max(df)));
                }
                self.tick_silent(inp.kin_ff.as_ref().unwrap_or(&inp.kin), inp.l_meas)
            }
            Mode::Swing => {
                let df = measured_df(&inp.kin, dt);
                if self.f_swing_model.is_none_or(|(peak, _)| df > peak) {
                    let slack = self.tendon.tendon_length(df, 0.0) - inp.l_meas;
                    self.f_swing_model = Some((df, self.tendon.k_all * slack));
                }
                self.tick_swing(inp.f_meas, inp.l_meas, inp.l_meas_rate, dt)
            }
            Mode::Stance => {
                f_des = self
                    .active_params
                    .map_or(0.0, |p| p.force(inp.kin.theta_sk));
                self.tick_stance(
                    &inp.kin,
                    inp.kin_ff.as_ref().unwrap_or(&inp.kin),
                    inp.f_meas,
                    inp.l_meas,
                    dt,
                )
            }
        };
        TickOutput {
            cmd: self.clamp(cmd),
            f_des,
            mode: self.mode,
        }
    }

    fn clamp(&self, cmd: VelocityCommand) -> VelocityCommand {
        VelocityCommand {
            v: cmd.v.clamp(-self.cfg.v_max, self.cfg.v_max),
            source: cmd.source,
        }
    }

    fn tick_pretighten(&mut self, inp: &TickInput, dt: f64) -> VelocityCommand {
        if inp.f_meas >= self.cfg.pretighten_force {
            // Tendon baseline from the pretightened state, migration taken as zero.
            self.tendon.baseline_c = inp.l_meas - self.tendon.arc(measured_df(&inp.kin, dt))
                + inp.f_meas / self.tendon.k_all;
            self.tendon.delta_l1 = 0.0;
            self.mode = Mode::Silent;
            log::info!(
                "pretightened at {:.2} N, baseline {:.3} mm",
                inp.f_meas,
                self.tendon.baseline_c
            );
            return VelocityCommand::hold();
        }
        VelocityCommand {
            v: self.cfg.pretighten_speed,
            source: CommandSource::Release,
        }
    }

    /// Keeps the cable `slack_margin` beyond the taut length predicted for the current
    /// ankle angle, with the tendon-model length rate as feedforward.
    fn tick_silent(&mut self, kin: &KinematicSample, l_meas: f64) -> VelocityCommand {
        let target = self.tendon.tendon_length(kin.theta_df, 0.0) + self.cfg.slack_margin;
        let length_rate = self.tendon.tendon_length_rate(kin.theta_df_rate, 0.0)
            + self.cfg.kp * (target - l_meas);
        VelocityCommand {
            v: -length_rate,
            source: CommandSource::Release,
        }
    }

    fn tick_hold_length(
        &mut self,
        target: f64,
        l_meas: f64,
        l_meas_rate: f64,
        dt: f64,
    ) -> VelocityCommand {
        let e = target - l_meas;
        let lim = self.cfg.integral_limit;
        self.e_l_integral = (self.e_l_integral + e * dt).clamp(-lim, lim);
        let length_rate =
            self.cfg.kp * e + self.cfg.ki * self.e_l_integral - self.cfg.kd * l_meas_rate;
        VelocityCommand {
            v: -length_rate,
            source: CommandSource::SwingPI,
        }
    }

    /// Quasi-slack length regulation: PI on the length error with damping on the
    /// measured length rate. Also records the swing force peak.
    pub fn tick_swing(
        &mut self,
        f_meas: f64,
        l_meas: f64,
        l_meas_rate: f64,
        dt: f64,
    ) -> VelocityCommand {
        if self.mode != Mode::Swing {
            return VelocityCommand::hold();
        }
        self.f_swing_max = self.f_swing_max.max(f_meas);
        let Some(target) = self.l_swing else {
            return VelocityCommand::hold();
        };
        self.tick_hold_length(target, l_meas, l_meas_rate, dt)
    }

    /// Stance force tracking: feedback through `1/(M s + B)` on the error at `kin`, plus
    /// the tendon-model feedforward `dL/dt` of the desired force trajectory at `ff`.
    pub fn tick_stance(
        &mut self,
        kin: &KinematicSample,
        ff: &KinematicSample,
        f_meas: f64,
        l_meas: f64,
        dt: f64,
    ) -> VelocityCommand {
        if self.mode != Mode::Stance {
            return VelocityCommand::hold();
        }
        let Some(p) = self.active_params else {
            log::warn!("stance tick without profile parameters");
            return VelocityCommand::hold();
        };
        let f_des = p.force(kin.theta_sk);
        let err = f_des - f_meas;
        let (m, b) = (self.cfg.map_m, self.cfg.map_b);
        // Backward Euler of (M s + B) v = e.
        self.fb_state = (m / dt * self.fb_state + err) / (m / dt + b);
        let v_fb = self.fb_state;
        let v_ff = self.tendon.tendon_length_rate(
            kin.theta_df_rate,
            p.force_rate(kin.theta_sk, kin.theta_sk_rate),
        );
        let v_lead = self.tendon.tendon_length_rate(
            ff.theta_df_rate,
            p.force_rate(ff.theta_sk, ff.theta_sk_rate),
        );
        if self.stance_peak.is_none_or(|pk| f_meas > pk.force) {
            self.stance_peak = Some(StancePeak {
                force: f_meas,
                theta_sk: kin.theta_sk,
                theta_df: measured_df(kin, dt),
                l_meas,
            });
        }
        // Catch up on travel lost to motor lag and saturation.
        let l_cmd = self.l_cmd.unwrap_or(l_meas);
        self.l_cmd = Some(l_cmd - (v_fb - v_ff) * dt);
        VelocityCommand {
            v: v_fb - v_lead + self.cfg.servo_gain * (l_meas - l_cmd),
            source: CommandSource::StanceFBFF,
        }
    }
}

/// Ankle angle when the force and length inputs were sampled, one tick before `kin`.
fn measured_df(kin: &KinematicSample, dt: f64) -> f64 {
    kin.theta_df - kin.theta_df_rate * dt
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tendon() -> TendonModel {
        TendonModel::new(100.0, 12.5, 300.0).unwrap()
    }

    fn params() -> GaussianParams {
        GaussianParams::new(110.0, 15.0, 10.0, 5.0, -25.0, 35.0).unwrap()
    }

    fn ev(kind: EventKind, t_ms: f64) -> GaitEvent {
        GaitEvent {
            kind,
            t_ms,
            gc_index: 0,
            sample_index: 0,
            confirmed_index: 0,
        }
    }

    fn kin(sk: f64, ft: f64, sk_rate: f64, ft_rate: f64) -> KinematicSample {
        KinematicSample::new(0.0, ft, sk, ft_rate, sk_rate).unwrap()
    }

    fn assisted(in_stance: bool) -> Controller {
        let mut c = Controller::new(ControllerConfig::default(), tendon(), Some(params())).unwrap();
        c.start_assisted(300.0, in_stance);
        c
    }

    /// Stance law without the pulley servo.
    fn unservoed() -> Controller {
        let cfg = ControllerConfig {
            servo_gain: 0.0,
            ..ControllerConfig::default()
        };
        let mut c = Controller::new(cfg, tendon(), Some(params())).unwrap();
        c.start_assisted(300.0, true);
        c
    }

    #[test]
    fn defaults_match_table() {
        let c = ControllerConfig::default();
        assert_eq!(
            (c.kp, c.ki, c.kd, c.map_m, c.map_b),
            (23.0, 0.0001, 1.8, 0.0, 15.7)
        );
        assert_eq!((c.swing_target_force, c.silent_cycles), (3.0, 5));
        assert!(c.validate().is_ok());
    }

    #[test]
    fn silent_strides_stay_silent() {
        let mut c = Controller::new(ControllerConfig::default(), tendon(), Some(params())).unwrap();
        c.mode = Mode::Silent;
        c.swing_df_max = Some(5.0);
        c.gc_count = 2;
        c.last_event = Some(EventKind::FootOff);
        c.on_event(&ev(EventKind::FootContact, 0.0), None);
        assert_eq!(c.mode(), Mode::Silent);
        assert_eq!(c.gc_count(), 3);
        let out = c.tick(
            &TickInput {
                kin: kin(15.0, 0.0, 50.0, 0.0),
                kin_ff: None,
                f_meas: 0.0,
                l_meas: 300.0,
                l_meas_rate: 0.0,
                motor_pos: 0.0,
            },
            1e-3,
        );
        assert_eq!(out.f_des, 0.0);
        assert_ne!(out.cmd.source, CommandSource::StanceFBFF);
    }

    #[test]
    fn swing_length_fixed_point_and_step() {
        let mut c = assisted(true);
        c.f_swing_max = 3.0;
        c.on_event(&ev(EventKind::FootOff, 0.0), None);
        assert_eq!(c.l_swing(), Some(300.0));

        c.on_event(&ev(EventKind::FootContact, 1.0), None);
        c.f_swing_max = 28.0;
        c.on_event(&ev(EventKind::FootOff, 2.0), None);
        assert!((c.l_swing().unwrap() - 302.0).abs() < 1e-12);
    }

    #[test]
    fn swing_pi_cases() {
        let mut c = assisted(false);
        c.l_swing = Some(302.0);
        let v = c.tick_swing(0.0, 300.0, 0.0, 1e-3);
        // Error of +2 mm: pay out cable at 46 mm/s, plus a negligible integral term.
        assert!((v.v + 46.0).abs() < 1e-5, "{v:?}");
        assert_eq!(v.source, CommandSource::SwingPI);

        let mut c = assisted(false);
        c.l_swing = Some(300.0);
        assert_eq!(c.tick_swing(0.0, 300.0, 0.0, 1e-3).v, 0.0);
        let v = c.tick_swing(0.0, 300.0, 10.0, 1e-3);
        assert!((v.v - 18.0).abs() < 1e-12);
    }

    #[test]
    fn integral_resets_and_clamps() {
        let mut c = assisted(false);
        c.l_swing = Some(400.0);
        for _ in 0..10_000 {
            c.tick_swing(0.0, 300.0, 0.0, 1e-3);
        }
        assert_eq!(c.e_l_integral(), c.config().integral_limit);
        c.on_event(&ev(EventKind::FootContact, 0.0), None);
        assert_eq!(c.e_l_integral(), 0.0);
    }

    #[test]
    fn feedback_gain() {
        let mut c = unservoed();
        // Peak of the profile with stationary ankle: feedforward vanishes.
        let k = kin(15.0, -5.0, 0.0, 0.0);
        let v = c.tick_stance(&k, &k, 110.0 - 15.7, 300.0, 1e-3);
        assert!((v.v - 1.0).abs() < 1e-12, "{v:?}");
        assert_eq!(v.source, CommandSource::StanceFBFF);
    }

    #[test]
    fn feedforward_terms() {
        let mut c = unservoed();
        let p = params();
        let k = kin(5.0, 0.0, 80.0, -20.0);
        let f = p.force(5.0);
        let v = c.tick_stance(&k, &k, f, 300.0, 1e-3);
        let expect = -(100.0 * k.theta_df_rate.to_radians() - p.force_rate(5.0, 80.0) / 12.5);
        assert!((v.v - expect).abs() < 1e-12);
    }

    #[test]
    fn mass_filter_reaches_static_gain() {
        let cfg = ControllerConfig {
            map_m: 0.5,
            servo_gain: 0.0,
            ..ControllerConfig::default()
        };
        let mut c = Controller::new(cfg, tendon(), Some(params())).unwrap();
        c.start_assisted(300.0, true);
        let k = kin(15.0, -5.0, 0.0, 0.0);
        let first = c.tick_stance(&k, &k, 110.0 - 15.7, 300.0, 1e-3).v;
        assert!(first < 1.0);
        let mut v = first;
        for _ in 0..20_000 {
            v = c.tick_stance(&k, &k, 110.0 - 15.7, 300.0, 1e-3).v;
        }
        assert!((v - 1.0).abs() < 1e-6);
    }

    #[test]
    fn servo_idle_when_pulley_follows() {
        let mut c = assisted(true);
        let mut plain = unservoed();
        let k = kin(5.0, 0.0, 80.0, -20.0);
        let f = params().force(5.0);
        let mut l = 300.0;
        for _ in 0..50 {
            let v = c.tick_stance(&k, &k, f, l, 1e-3).v;
            let v0 = plain.tick_stance(&k, &k, f, l, 1e-3).v;
            assert!((v - v0).abs() < 1e-9, "{v} {v0}");
            l -= v * 1e-3;
        }
    }

    #[test]
    fn servo_recovers_lost_travel() {
        let mut c = assisted(true);
        let k = kin(5.0, 0.0, 80.0, -20.0);
        let f = params().force(5.0);
        let base = unservoed().tick_stance(&k, &k, f, 300.0, 1e-3).v;
        // The pulley never moves, so each tick adds its missed travel to the backlog.
        let v0 = c.tick_stance(&k, &k, f, 300.0, 1e-3).v;
        let v1 = c.tick_stance(&k, &k, f, 300.0, 1e-3).v;
        assert!((v0 - base).abs() < 1e-9, "{base} {v0}");
        assert!(
            (v1 - base * (1.0 + 80.0 * 1e-3)).abs() < 1e-9,
            "{base} {v1}"
        );
    }

    #[test]
    fn lead_shifts_output_only() {
        let mut c = unservoed();
        let k = kin(5.0, 0.0, 80.0, -20.0);
        let ahead = kin(5.8, -0.2, 80.0, -20.0);
        let f = params().force(5.0);
        let v = c.tick_stance(&k, &ahead, f, 300.0, 1e-3).v;
        let p = params();
        let expect = -(100.0 * ahead.theta_df_rate.to_radians() - p.force_rate(5.8, 80.0) / 12.5);
        assert!((v - expect).abs() < 1e-12);
    }

    #[test]
    fn silent_follows_ankle_with_margin() {
        let mut c = Controller::new(ControllerConfig::default(), tendon(), Some(params())).unwrap();
        c.mode = Mode::Silent;
        let k = kin(10.0, 0.0, 30.0, 0.0);
        let target = 100.0 * 10f64.to_radians() + 300.0 + 10.0;
        let v = c.tick_silent(&k, target);
        // Ankle dorsiflexing at 30 deg/s lengthens the tendon path: pay out to match.
        assert!((v.v + 100.0 * 30f64.to_radians()).abs() < 1e-9);
        let v = c.tick_silent(&k, target - 1.0);
        assert!((v.v + 100.0 * 30f64.to_radians() + 23.0).abs() < 1e-9);
        assert_eq!(v.source, CommandSource::Release);
    }

    #[test]
    fn last_silent_foot_off_hands_over_to_swing() {
        let mut c = Controller::new(ControllerConfig::default(), tendon(), Some(params())).unwrap();
        c.mode = Mode::Silent;
        c.swing_df_max = Some(2.0);
        c.gc_count = 5;
        c.last_event = Some(EventKind::FootContact);
        c.e_l_integral = 1.0;
        c.on_event(&ev(EventKind::FootOff, 0.0), None);
        assert_eq!(c.mode(), Mode::Swing);
        assert_eq!(c.e_l_integral(), 0.0);
        let seed = 100.0 * 2f64.to_radians() + 300.0 - 3.0 / 12.5;
        assert!((c.l_swing().unwrap() - seed).abs() < 1e-12);

        let mut early =
            Controller::new(ControllerConfig::default(), tendon(), Some(params())).unwrap();
        early.mode = Mode::Silent;
        early.swing_df_max = Some(2.0);
        early.gc_count = 4;
        early.last_event = Some(EventKind::FootContact);
        early.on_event(&ev(EventKind::FootOff, 0.0), None);
        assert_eq!(early.mode(), Mode::Silent);
    }

    #[test]
    fn slack_swing_uses_model_force() {
        let mut c = assisted(false);
        c.l_swing = Some(300.0);
        let k = kin(0.0, 0.0, 0.0, 0.0);
        let inp = TickInput {
            kin: k,
            kin_ff: None,
            f_meas: 0.3,
            l_meas: 300.8,
            l_meas_rate: 0.0,
            motor_pos: 0.0,
        };
        c.tick(&inp, 1e-3);
        c.on_event(&ev(EventKind::FootContact, 0.0), None);
        c.on_event(&ev(EventKind::FootOff, 1.0), None);
        // 0.8 mm of slack reads as -10 N, so the length shortens by 13 N / k.
        assert!((c.l_swing().unwrap() - (300.0 - 13.0 / 12.5)).abs() < 1e-9);
    }

    #[test]
    fn taut_swing_uses_measured_force() {
        let mut c = assisted(false);
        c.l_swing = Some(300.0);
        let inp = TickInput {
            kin: kin(0.0, 0.0, 0.0, 0.0),
            kin_ff: None,
            f_meas: 8.0,
            l_meas: 299.0,
            l_meas_rate: 0.0,
            motor_pos: 0.0,
        };
        c.tick(&inp, 1e-3);
        c.on_event(&ev(EventKind::FootContact, 0.0), None);
        c.on_event(&ev(EventKind::FootOff, 1.0), None);
        assert!((c.l_swing().unwrap() - (300.0 + 5.0 / 12.5)).abs() < 1e-9);
    }

    #[test]
    fn safety_latch() {
        let mut c = assisted(true);
        assert_eq!(c.safety_check(100.0, 0.0), SafetyStatus::Ok);
        assert_eq!(c.safety_check(301.0, 0.0), SafetyStatus::Abort);
        assert_eq!(c.safety_check(0.0, 0.0), SafetyStatus::Abort);

        let mut c = assisted(true);
        assert_eq!(c.safety_check(0.0, 80.5), SafetyStatus::Abort);
    }

    #[test]
    fn abort_releases_then_zeroes() {
        let mut c = assisted(true);
        let mut inp = TickInput {
            kin: kin(15.0, -5.0, 0.0, 0.0),
            kin_ff: None,
            f_meas: 400.0,
            l_meas: 300.0,
            l_meas_rate: 0.0,
            motor_pos: 0.0,
        };
        let out = c.tick(&inp, 1e-3);
        assert!(c.is_aborted());
        assert!(out.cmd.v <= 0.0);
        inp.f_meas = 10.0;
        let cmds: Vec<_> = (0..1000).map(|_| c.tick(&inp, 1e-3).cmd).collect();
        assert!(cmds.iter().all(|cmd| cmd.v <= 0.0));
        assert!(cmds[500..].iter().all(|cmd| cmd.v == 0.0));
    }

    #[test]
    fn out_of_order_events_ignored() {
        let mut c = assisted(true);
        let n = c.gc_count();
        c.on_event(&ev(EventKind::FootContact, 0.0), None);
        assert_eq!(c.gc_count(), n);
        assert_eq!(c.mode(), Mode::Stance);
    }

    #[test]
    fn wrong_mode_commands_hold() {
        let mut c = assisted(false);
        let v = c.tick_stance(
            &kin(15.0, 0.0, 0.0, 0.0),
            &kin(15.0, 0.0, 0.0, 0.0),
            0.0,
            300.0,
            1e-3,
        );
        assert_eq!(v.source, CommandSource::Hold);
        let mut c = assisted(true);
        let v = c.tick_swing(0.0, 300.0, 0.0, 1e-3);
        assert_eq!(v.source, CommandSource::Hold);
    }

    #[test]
    fn pretighten_calibrates_baseline() {
        let mut c = Controller::new(ControllerConfig::default(), tendon(), None).unwrap();
        let k = kin(0.0, 0.0, 0.0, 0.0);
        let mut inp = TickInput {
            kin: k,
            kin_ff: None,
            f_meas: 0.0,
            l_meas: 310.0,
            l_meas_rate: 0.0,
            motor_pos: 0.0,
        };
        assert!(c.tick(&inp, 1e-3).cmd.v > 0.0);
        inp.f_meas = 5.0;
        c.tick(&inp, 1e-3);
        assert_eq!(c.mode(), Mode::Silent);
        assert!((c.tendon().baseline_c - 310.4).abs() < 1e-12);
    }
}
