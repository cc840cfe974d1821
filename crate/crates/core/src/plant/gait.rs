//! Parametric gait kinematics.
//!
//! Stance (`u = phase / stance_ratio`):
//! - shank: cubic Hermite across `theta_sk_span` with normalised end slopes `sk_slopes`;
//! - foot pitch: cosine fall from `ft_peak` to flat over `[0, slap_end]`, flat until
//!   `heel_rise`, then `-heel_drop * w^heel_exp` up to foot-off.
//!
//! Swing: shank and foot pitch return by cubic Hermites that keep both angle rates
//! continuous; the foot pitch arrives at `ft_peak` with zero slope.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gait_signals::KinematicSample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activity {
    Lw,
    Lr,
    Ra,
    Rd,
}

impl Activity {
    pub const ALL: [Activity; 4] = [Activity::Lw, Activity::Lr, Activity::Ra, Activity::Rd];

    pub fn as_str(self) -> &'static str {
        match self {
            Activity::Lw => "lw",
            Activity::Lr => "lr",
            Activity::Ra => "ra",
            Activity::Rd => "rd",
        }
    }

    /// Nominal treadmill speed (m/s).
    pub fn belt_speed(self) -> f64 {
        match self {
            Activity::Lr => 2.2,
            _ => 1.33,
        }
    }
}

impl std::str::FromStr for Activity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lw" => Ok(Activity::Lw),
            "lr" => Ok(Activity::Lr),
            "ra" => Ok(Activity::Ra),
            "rd" => Ok(Activity::Rd),
            other => Err(Error::Config(format!("unknown activity {other:?}"))),
        }
    }
}

/// Shape parameters of one activity's gait cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaitTemplate {
    pub activity: Activity,
    /// Stride period at unit speed scale (s).
    pub period: f64,
    pub stance_ratio: f64,
    /// Shank angle at foot contact and at foot-off (deg).
    pub theta_sk_span: (f64, f64),
    /// Stance shank slopes at foot contact and foot-off, in span per unit stance.
    pub sk_slopes: (f64, f64),
    /// Foot pitch at foot contact (deg).
    pub ft_peak: f64,
    /// End of the foot-slap segment as a fraction of stance.
    pub slap_end: f64,
    /// Start of heel rise as a fraction of stance.
    pub heel_rise: f64,
    /// Foot pitch drop from flat to foot-off (deg).
    pub heel_drop: f64,
    pub heel_exp: f64,
}

/// Raw angles and phase derivatives of one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameAngles {
    pub theta_ft: f64,
    pub theta_sk: f64,
    /// Derivatives with respect to phase (deg per cycle).
    pub d_ft: f64,
    pub d_sk: f64,
}

/// Cubic Hermite from `p0` to `p1` with end slopes `m0`, `m1`: value and derivative.
fn hermite(t: f64, p0: f64, p1: f64, m0: f64, m1: f64) -> (f64, f64) {
    let (t2, t3) = (t * t, t * t * t);
    (
        (2.0 * t3 - 3.0 * t2 + 1.0) * p0
            + (t3 - 2.0 * t2 + t) * m0
            + (-2.0 * t3 + 3.0 * t2) * p1
            + (t3 - t2) * m1,
        (6.0 * t2 - 6.0 * t) * p0
            + (3.0 * t2 - 4.0 * t + 1.0) * m0
            + (-6.0 * t2 + 6.0 * t) * p1
            + (3.0 * t2 - 2.0 * t) * m1,
    )
}

impl GaitTemplate {
    pub fn for_activity(activity: Activity) -> Self {
        let base = Self {
            activity,
            period: 1.13,
            stance_ratio: 0.674,
            theta_sk_span: (-20.0, 35.0),
            sk_slopes: (1.0, 1.5),
            ft_peak: 20.0,
            slap_end: 0.2,
            heel_rise: 0.55,
            heel_drop: 50.0,
            heel_exp: 2.0,
        };
        match activity {
            Activity::Lw => base,
            Activity::Lr => Self {
                period: 0.72,
                stance_ratio: 0.514,
                theta_sk_span: (-12.0, 40.0),
                ft_peak: 12.0,
                slap_end: 0.15,
                heel_rise: 0.55,
                heel_drop: 45.0,
                ..base
            },
            Activity::Ra => Self {
                stance_ratio: 0.683,
                theta_sk_span: (-25.0, 32.0),
                ft_peak: 15.0,
                heel_rise: 0.6,
                heel_drop: 45.0,
                ..base
            },
            Activity::Rd => Self {
                period: 1.03,
                stance_ratio: 0.691,
                theta_sk_span: (-15.0, 38.0),
                ft_peak: 15.0,
                slap_end: 0.25,
                heel_rise: 0.6,
                heel_drop: 50.0,
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (a, b) = self.theta_sk_span;
        let ok = self.period > 0.0
            && self.stance_ratio > 0.0
            && self.stance_ratio < 1.0
            && a < b
            && (0.0..=3.0).contains(&self.sk_slopes.0)
            && (0.0..=3.0).contains(&self.sk_slopes.1)
            && self.ft_peak > 0.0
            && self.slap_end > 0.0
            && self.slap_end < self.heel_rise
            && self.heel_rise < 1.0
            && self.heel_drop > 0.0
            && self.heel_exp >= 1.0;
        if !ok {
            return Err(Error::Config(format!("invalid gait template {self:?}")));
        }
        let slap_rate = self.ft_peak * std::f64::consts::PI / (2.0 * self.slap_end);
        if self.heel_end_rate().abs() <= slap_rate {
            return Err(Error::Config(format!(
                "foot-off rate must be steeper than the foot slap: {self:?}"
            )));
        }
        Ok(())
    }

    /// Foot pitch derivative at foot-off with respect to the stance fraction.
    fn heel_end_rate(&self) -> f64 {
        -self.heel_drop * self.heel_exp / (1.0 - self.heel_rise)
    }

    fn stance_ft(&self, u: f64) -> (f64, f64) {
        use std::f64::consts::PI;
        if u < self.slap_end {
            let x = PI * u / self.slap_end;
            (
                self.ft_peak * 0.5 * (1.0 + x.cos()),
                -self.ft_peak * 0.5 * x.sin() * PI / self.slap_end,
            )
        } else if u < self.heel_rise {
            (0.0, 0.0)
        } else {
            let span = 1.0 - self.heel_rise;
            let w = (u - self.heel_rise) / span;
            let k = self.heel_exp;
            (
                -self.heel_drop * w.powf(k),
                -self.heel_drop * k * w.powf(k - 1.0) / span,
            )
        }
    }

    /// Angles and phase derivatives at `phase` in `[0, 1)`.
    pub fn angles(&self, phase: f64) -> FrameAngles {
        let s = self.stance_ratio;
        let (a, b) = self.theta_sk_span;
        let phase = phase.rem_euclid(1.0);
        if phase < s {
            let u = phase / s;
            let (m0, m1) = self.sk_slopes;
            let (sk, dsk) = hermite(u, a, b, m0 * (b - a), m1 * (b - a));
            let (ft, dft) = self.stance_ft(u);
            FrameAngles {
                theta_ft: ft,
                theta_sk: sk,
                d_ft: dft / s,
                d_sk: dsk / s,
            }
        } else {
            let sw = 1.0 - s;
            let t = (phase - s) / sw;
            // End slopes converted from per unit stance to per unit swing.
            let to_swing = sw / s;
            let (m0, m1) = self.sk_slopes;
            let (sk, dsk) = hermite(t, b, a, m1 * (b - a) * to_swing, m0 * (b - a) * to_swing);
            let (ft, dft) = hermite(
                t,
                -self.heel_drop,
                self.ft_peak,
                self.heel_end_rate() * to_swing,
                0.0,
            );
            FrameAngles {
                theta_ft: ft,
                theta_sk: sk,
                d_ft: dft / sw,
                d_sk: dsk / sw,
            }
        }
    }

    /// Ankle DF and its phase derivative.
    pub fn df(&self, phase: f64) -> (f64, f64) {
        let f = self.angles(phase);
        (f.theta_sk + f.theta_ft, f.d_sk + f.d_ft)
    }

    /// Stance phase of the DF crest, found by bisection on the DF derivative during heel
    /// rise, and the DF value there.
    pub fn df_peak(&self) -> (f64, f64) {
        let s = self.stance_ratio;
        let (mut lo, mut hi) = (self.heel_rise * s, s * (1.0 - 1e-12));
        if self.df(lo).1 <= 0.0 {
            // Crest before heel rise cannot happen with a rising shank; keep the boundary.
            return (lo, self.df(lo).0);
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.df(mid).1 > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let ph = 0.5 * (lo + hi);
        (ph, self.df(ph).0)
    }

    /// Kinematic frame at `phase` with rates scaled by the instantaneous phase rate
    /// `speed_scale / period`.
    pub fn gen_frame(&self, t_ms: f64, phase: f64, speed_scale: f64) -> KinematicSample {
        let f = self.angles(phase);
        let rate = speed_scale / self.period;
        KinematicSample::new(t_ms, f.theta_ft, f.theta_sk, f.d_ft * rate, f.d_sk * rate)
            .expect("template angles are finite")
    }

    /// Normalised plantarflexion torque over stance: a sine-squared rise to 1 at the DF
    /// crest and a cosine-squared fall to 0 at foot-off. Zero in swing.
    pub fn biological_torque(&self, phase: f64) -> f64 {
        use std::f64::consts::FRAC_PI_2;
        let s = self.stance_ratio;
        let phase = phase.rem_euclid(1.0);
        if phase >= s {
            return 0.0;
        }
        let u = phase / s;
        let u_pk = self.df_peak().0 / s;
        let u_on = self.slap_end;
        if u <= u_on {
            0.0
        } else if u <= u_pk {
            (FRAC_PI_2 * (u - u_on) / (u_pk - u_on)).sin().powi(2)
        } else {
            (FRAC_PI_2 * (u - u_pk) / (1.0 - u_pk)).cos().powi(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> impl Iterator<Item = f64> {
        (0..n).map(move |i| i as f64 / n as f64)
    }

    #[test]
    fn templates_valid_and_ratios() {
        let expect = [0.674, 0.514, 0.683, 0.691];
        for (act, r) in Activity::ALL.iter().zip(expect) {
            let t = GaitTemplate::for_activity(*act);
            t.validate().unwrap();
            assert_eq!(t.stance_ratio, r);
        }
    }

    #[test]
    fn foot_pitch_max_at_contact() {
        for act in Activity::ALL {
            let t = GaitTemplate::for_activity(act);
            let f0 = t.angles(0.0).theta_ft;
            assert_eq!(f0, t.ft_peak);
            for ph in grid(10_000).skip(1) {
                assert!(t.angles(ph).theta_ft < f0, "{act:?} {ph}");
            }
        }
    }

    #[test]
    fn foot_pitch_rate_min_at_foot_off() {
        for act in Activity::ALL {
            let t = GaitTemplate::for_activity(act);
            let s = t.stance_ratio;
            let at_fo = t.angles(s - 1e-9).d_ft;
            let mut min = (f64::INFINITY, 0.0);
            for ph in grid(20_000) {
                let d = t.angles(ph).d_ft;
                if d < min.0 {
                    min = (d, ph);
                }
            }
            assert!((min.1 - s).abs() < 1e-3, "{act:?} min at {}", min.1);
            assert!((min.0 - at_fo).abs() < 1e-3 * at_fo.abs());
        }
    }

    #[test]
    fn continuous_at_boundaries() {
        for act in Activity::ALL {
            let t = GaitTemplate::for_activity(act);
            for ph in [t.stance_ratio, 1.0] {
                let a = t.angles(ph - 1e-9);
                let b = t.angles(ph + 1e-9);
                assert!((a.theta_ft - b.theta_ft).abs() < 1e-6);
                assert!((a.theta_sk - b.theta_sk).abs() < 1e-6);
                assert!((a.d_ft - b.d_ft).abs() < 1e-4 * a.d_ft.abs().max(1.0));
            }
        }
    }

    #[test]
    fn derivatives_match_differences() {
        let t = GaitTemplate::for_activity(Activity::Lw);
        let h = 1e-6;
        for ph in grid(97).map(|p| p + 0.003) {
            let (a, b) = (t.angles(ph - h), t.angles(ph + h));
            let f = t.angles(ph);
            assert!(
                ((b.theta_ft - a.theta_ft) / (2.0 * h) - f.d_ft).abs()
                    < 1e-3 * f.d_ft.abs().max(1.0)
            );
            assert!(
                ((b.theta_sk - a.theta_sk) / (2.0 * h) - f.d_sk).abs()
                    < 1e-3 * f.d_sk.abs().max(1.0)
            );
        }
    }

    #[test]
    fn torque_shape() {
        for act in Activity::ALL {
            let t = GaitTemplate::for_activity(act);
            let (pk, _) = t.df_peak();
            assert!((t.biological_torque(pk) - 1.0).abs() < 1e-12);
            assert_eq!(t.biological_torque(0.0), 0.0);
            assert!(t.biological_torque(t.stance_ratio - 1e-12) < 1e-12);
            // Torque crest and DF crest coincide on a sampled grid.
            let n = 2000;
            let pts: Vec<f64> = (0..n)
                .map(|i| t.stance_ratio * i as f64 / n as f64)
                .collect();
            let arg = |f: &dyn Fn(f64) -> f64| {
                pts.iter()
                    .copied()
                    .fold((f64::NEG_INFINITY, 0.0), |m, p| {
                        let v = f(p);
                        if v > m.0 {
                            (v, p)
                        } else {
                            m
                        }
                    })
                    .1
            };
            let a_tq = arg(&|p| t.biological_torque(p));
            let a_df = arg(&|p| t.df(p).0);
            assert_eq!(a_tq, a_df, "{act:?}");
        }
    }

    #[test]
    fn df_zero_at_contact() {
        for act in Activity::ALL {
            let t = GaitTemplate::for_activity(act);
            let s = t.gen_frame(0.0, 0.0, 1.0);
            assert!((s.theta_df - (t.theta_sk_span.0 + t.ft_peak)).abs() < 1e-12);
        }
    }
}
