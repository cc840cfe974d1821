//! Belt-speed perturbations, slow speed ramps and the phase clock they drive.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PerturbationKind {
    Forward,
    Backward,
}

/// A brief triangular belt-speed change starting at a fixed fraction of the stride.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub kind: PerturbationKind,
    pub onset_pct_gc: f64,
    /// Peak belt-speed change as a fraction of the nominal speed.
    pub magnitude: f64,
    /// Duration of each of the two ramps (s).
    pub ramp_time: f64,
    /// Strides in which the perturbation is applied.
    pub affected_cycles: Vec<u64>,
}

impl PerturbationSpec {
    pub fn new(kind: PerturbationKind, affected_cycles: Vec<u64>) -> Self {
        Self {
            kind,
            onset_pct_gc: 0.15,
            magnitude: 0.8,
            ramp_time: 0.1,
            affected_cycles,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut c = self.affected_cycles.clone();
        c.sort_unstable();
        let ok = (0.0..1.0).contains(&self.onset_pct_gc)
            && self.magnitude > 0.0
            && self.ramp_time > 0.0
            && c.windows(2).all(|w| w[1] > w[0] + 1);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid perturbation {self:?}")))
        }
    }

    /// Belt-speed change (fraction of nominal) `tau` seconds after onset.
    pub fn belt_delta(&self, tau: f64) -> f64 {
        let r = self.ramp_time;
        let tri = if tau < 0.0 || tau >= 2.0 * r {
            0.0
        } else if tau < r {
            tau / r
        } else {
            (2.0 * r - tau) / r
        };
        let sign = match self.kind {
            PerturbationKind::Forward => 1.0,
            PerturbationKind::Backward => -1.0,
        };
        sign * self.magnitude * tri
    }
}

/// Piecewise-linear belt-speed schedule: slow down by `drop` at `accel`, hold, recover.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedRamp {
    /// Stride at whose foot contact the slowdown starts.
    pub start_stride: u64,
    /// Strides held at the reduced speed before recovering.
    pub hold_strides: u64,
    /// Fractional speed change.
    pub drop: f64,
    /// Belt acceleration (m/s^2).
    pub accel: f64,
    /// Nominal belt speed (m/s).
    pub belt_speed: f64,
}

impl SpeedRamp {
    pub fn ramp_time(&self) -> f64 {
        self.drop * self.belt_speed / self.accel
    }
}

/// Phase accounting for the simulated leg.
///
/// Phase is held in units of control ticks so that an unperturbed stride spans an exact
/// whole number of ticks and every stride samples identical phases.
#[derive(Debug, Clone, PartialEq)]
pub struct GaitClock {
    dt: f64,
    period_ticks: f64,
    pos: f64,
    stride: u64,
    /// Belt-speed change to phase-rate change.
    pub phase_gain: f64,
    onset_time: Option<f64>,
    ramp_state: Option<RampState>,
    t: f64,
    pre_roll: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum RampState {
    Down { t0: f64 },
    Hold { until_stride: u64 },
    Up { t0: f64 },
    Done,
}

/// State of the clock after one tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClockTick {
    pub phase: f64,
    pub stride: u64,
    /// Phase-rate multiplier in effect.
    pub speed_scale: f64,
    /// Belt speed as a fraction of nominal.
    pub belt_scale: f64,
    pub perturbed: bool,
}

impl GaitClock {
    pub fn new(period: f64, dt: f64, phase_gain: f64) -> Result<Self> {
        if !(period > 0.0 && dt > 0.0 && period > dt) {
            return Err(Error::Config(format!(
                "invalid clock period {period} / dt {dt}"
            )));
        }
        let raw = period / dt;
        let period_ticks = if (raw - raw.round()).abs() < 1e-6 {
            raw.round()
        } else {
            raw
        };
        Ok(Self {
            dt,
            period_ticks,
            pos: 0.0,
            stride: 0,
            phase_gain,
            onset_time: None,
            ramp_state: None,
            t: 0.0,
            pre_roll: false,
        })
    }

    /// Starts `ticks` control ticks before the first foot contact. The stride counter
    /// stays at zero through the pre-roll.
    pub fn with_pre_roll(mut self, ticks: u64) -> Self {
        let ticks = (ticks as f64).min(self.period_ticks - 1.0);
        if ticks > 0.0 {
            self.pos = self.period_ticks - ticks;
            self.pre_roll = true;
        }
        self
    }

    pub fn in_pre_roll(&self) -> bool {
        self.pre_roll
    }

    pub fn phase(&self) -> f64 {
        self.pos / self.period_ticks
    }

    pub fn stride(&self) -> u64 {
        self.stride
    }

    fn ramp_belt(&mut self, ramp: Option<&SpeedRamp>) -> f64 {
        let Some(r) = ramp else { return 1.0 };
        if self.pre_roll {
            return 1.0;
        }
        let rt = r.ramp_time();
        let state = match self.ramp_state {
            None if self.stride >= r.start_stride => RampState::Down { t0: self.t },
            None => return 1.0,
            Some(s) => s,
        };
        let (next, belt) = match state {
            RampState::Down { t0 } => {
                let x = ((self.t - t0) / rt).min(1.0);
                if x >= 1.0 {
                    (
                        RampState::Hold {
                            until_stride: self.stride + r.hold_strides,
                        },
                        1.0 - r.drop,
                    )
                } else {
                    (state, 1.0 - r.drop * x)
                }
            }
            RampState::Hold { until_stride } => {
                if self.stride >= until_stride {
                    (RampState::Up { t0: self.t }, 1.0 - r.drop)
                } else {
                    (state, 1.0 - r.drop)
                }
            }
            RampState::Up { t0 } => {
                let x = ((self.t - t0) / rt).min(1.0);
                if x >= 1.0 {
                    (RampState::Done, 1.0)
                } else {
                    (state, 1.0 - r.drop * (1.0 - x))
                }
            }
            RampState::Done => (state, 1.0),
        };
        self.ramp_state = Some(next);
        belt
    }

    /// Advances one tick.
    pub fn advance(
        &mut self,
        perturbations: &[PerturbationSpec],
        ramp: Option<&SpeedRamp>,
    ) -> ClockTick {
        let active = perturbations
            .iter()
            .filter(|_| !self.pre_roll)
            .find(|p| p.affected_cycles.contains(&self.stride));
        let mut belt = self.ramp_belt(ramp);
        let mut perturbed = false;
        if let Some(p) = active {
            perturbed = true;
            if self.onset_time.is_none() && self.phase() >= p.onset_pct_gc {
                self.onset_time = Some(self.t);
            }
            if let Some(t0) = self.onset_time {
                belt += p.belt_delta(self.t - t0);
            }
        }
        let base = self.ramp_belt_nominal(ramp);
        let scale = base + self.phase_gain * (belt - base);
        self.pos += scale;
        self.t += self.dt;
        if self.pos >= self.period_ticks {
            self.pos -= self.period_ticks;
            if self.pre_roll {
                self.pre_roll = false;
            } else {
                self.stride += 1;
            }
            self.onset_time = None;
        }
        ClockTick {
            phase: self.phase(),
            stride: self.stride,
            speed_scale: scale,
            belt_scale: belt,
            perturbed,
        }
    }

    /// Slow-ramp speed acts on phase rate one to one.
    fn ramp_belt_nominal(&self, ramp: Option<&SpeedRamp>) -> f64 {
        let Some(r) = ramp else { return 1.0 };
        let rt = r.ramp_time();
        match self.ramp_state {
            None | Some(RampState::Done) => 1.0,
            Some(RampState::Down { t0 }) => 1.0 - r.drop * ((self.t - t0) / rt).min(1.0),
            Some(RampState::Hold { .. }) => 1.0 - r.drop,
            Some(RampState::Up { t0 }) => 1.0 - r.drop * (1.0 - ((self.t - t0) / rt).min(1.0)),
        }
    }
}

/// Phase after `dt` seconds at a constant speed scale.
pub fn phase_advance(phase: f64, dt: f64, period: f64, speed_scale: f64) -> f64 {
    phase + speed_scale * dt / period
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_period_is_one_cycle() {
        assert_eq!(phase_advance(0.25, 1.13, 1.13, 1.0), 1.25);
        let mut c = GaitClock::new(1.13, 1e-3, 1.5).unwrap();
        for _ in 0..1130 {
            c.advance(&[], None);
        }
        assert_eq!(c.stride(), 1);
        assert_eq!(c.phase(), 0.0);
    }

    #[test]
    fn forward_extra_advance() {
        // Unit gain: the extra phase equals the area under the belt-speed triangle.
        let period = 1.0;
        let spec = PerturbationSpec::new(PerturbationKind::Forward, vec![0]);
        let mut c = GaitClock::new(period, 1e-4, 1.0).unwrap();
        let mut plain = GaitClock::new(period, 1e-4, 1.0).unwrap();
        for _ in 0..6000 {
            c.advance(std::slice::from_ref(&spec), None);
            plain.advance(&[], None);
        }
        let extra = (c.phase() + c.stride() as f64) - (plain.phase() + plain.stride() as f64);
        assert!((extra - 0.08 / period).abs() < 1e-3, "{extra}");
    }

    #[test]
    fn backward_regresses_phase() {
        let spec = PerturbationSpec::new(PerturbationKind::Backward, vec![0]);
        let mut c = GaitClock::new(1.13, 1e-3, 1.5).unwrap();
        let mut min_scale = f64::INFINITY;
        for _ in 0..1000 {
            min_scale = min_scale.min(c.advance(std::slice::from_ref(&spec), None).speed_scale);
        }
        assert!(min_scale < 0.0);
    }

    #[test]
    fn pre_roll_keeps_stride_zero() {
        let mut c = GaitClock::new(1.13, 1e-3, 1.5).unwrap().with_pre_roll(300);
        assert!(c.in_pre_roll());
        for _ in 0..300 {
            c.advance(&[], None);
        }
        assert!(!c.in_pre_roll());
        assert_eq!((c.stride(), c.phase()), (0, 0.0));
    }

    #[test]
    fn consecutive_cycles_rejected() {
        let spec = PerturbationSpec::new(PerturbationKind::Forward, vec![4, 5]);
        assert!(spec.validate().is_err());
        let spec = PerturbationSpec::new(PerturbationKind::Forward, vec![4, 6]);
        assert!(spec.validate().is_ok());
    }

    #[test]
    fn speed_ramp_profile() {
        let ramp = SpeedRamp {
            start_stride: 1,
            hold_strides: 3,
            drop: 0.5,
            accel: 0.5,
            belt_speed: 1.33,
        };
        let mut c = GaitClock::new(1.13, 1e-3, 1.5).unwrap();
        let mut min_belt: f64 = 1.0;
        let mut ticks = 0;
        while c.stride() < 12 {
            let t = c.advance(&[], Some(&ramp));
            min_belt = min_belt.min(t.belt_scale);
            assert!((t.speed_scale - t.belt_scale).abs() < 1e-12);
            ticks += 1;
        }
        assert!((min_belt - 0.5).abs() < 1e-9);
        assert!(c.advance(&[], Some(&ramp)).belt_scale == 1.0);
        assert!(ticks > 12 * 1130);
    }
}
