//! Dual-Gaussian assistance profile over shank angle and its per-stride adaptation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gait_signals::StanceWindow;

/// Default update gain applied to the per-stride parameter deltas.
pub const UPDATE_GAIN: f64 = 0.3;

/// Minimum stance-window length accepted by [`extract_raw`].
pub const MIN_WINDOW_SAMPLES: usize = 10;

/// Profile model state. Angles are shank angles in degrees, `amp` is in newtons.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams {
    pub amp: f64,
    pub mu: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub theta_fc: f64,
    pub theta_fo: f64,
}

impl GaussianParams {
    pub fn new(
        amp: f64,
        mu: f64,
        sigma1: f64,
        sigma2: f64,
        theta_fc: f64,
        theta_fo: f64,
    ) -> Result<Self> {
        let p = Self {
            amp,
            mu,
            sigma1,
            sigma2,
            theta_fc,
            theta_fo,
        };
        p.validate()?;
        Ok(p)
    }

    /// Initial parameters for a given peak force: sigma1 = 10, sigma2 = 5, mu = 15 deg,
    /// with the support chosen so the initial shape obeys the quarter-span rule
    /// (`theta_fc = mu - 4 sigma1`, `theta_fo = mu + 4 sigma2`).
    pub fn initial(amp: f64) -> Self {
        let (mu, sigma1, sigma2) = (15.0, 10.0, 5.0);
        Self {
            amp,
            mu,
            sigma1,
            sigma2,
            theta_fc: mu - 4.0 * sigma1,
            theta_fo: mu + 4.0 * sigma2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.amp,
            self.mu,
            self.sigma1,
            self.sigma2,
            self.theta_fc,
            self.theta_fo,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "non-finite value in {self:?}"
            )));
        }
        if self.amp <= 0.0 || self.sigma1 <= 0.0 || self.sigma2 <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "amp and sigmas must be positive: {self:?}"
            )));
        }
        if !(self.theta_fc < self.mu && self.mu < self.theta_fo) {
            return Err(Error::InvalidParams(format!(
                "need theta_fc < mu < theta_fo: {self:?}"
            )));
        }
        Ok(())
    }

    /// Branch sigma at `theta`, or `None` outside the open support `(theta_fc, theta_fo)`.
    #[inline]
    fn sigma_at(&self, theta: f64) -> Option<f64> {
        if theta > self.theta_fc && theta <= self.mu {
            Some(self.sigma1)
        } else if theta > self.mu && theta < self.theta_fo {
            Some(self.sigma2)
        } else {
            None
        }
    }

    /// Desired force at shank angle `theta`. Assumes validated parameters.
    #[inline]
    pub fn force(&self, theta: f64) -> f64 {
        match self.sigma_at(theta) {
            Some(s) => {
                let d = theta - self.mu;
                self.amp * (-(d * d) / (2.0 * s * s)).exp()
            }
            None => 0.0,
        }
    }

    /// Time derivative of the desired force along a shank trajectory.
    #[inline]
    pub fn force_rate(&self, theta: f64, theta_rate: f64) -> f64 {
        match self.sigma_at(theta) {
            Some(s) => {
                let d = theta - self.mu;
                let s2 = s * s;
                self.amp * (-(d * d) / (2.0 * s2)).exp() * (-d / s2 * theta_rate)
            }
            None => 0.0,
        }
    }
}

/// Desired assistive force (N) at shank angle `theta` (deg).
pub fn eval_force(p: &GaussianParams, theta: f64) -> Result<f64> {
    p.validate()?;
    Ok(p.force(theta))
}

/// Rate of the desired force (N/s) for shank angle `theta` moving at `theta_rate` (deg/s).
pub fn eval_force_rate(p: &GaussianParams, theta: f64, theta_rate: f64) -> Result<f64> {
    p.validate()?;
    Ok(p.force_rate(theta, theta_rate))
}

/// The three kinematic landmarks of one stance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawStrideFeatures {
    pub theta_fc: f64,
    pub theta_mdf: f64,
    pub theta_fo: f64,
}

impl RawStrideFeatures {
    pub fn is_ordered(&self) -> bool {
        self.theta_fc < self.theta_mdf && self.theta_mdf < self.theta_fo
    }

    /// Profile targets `(mu, sigma1, sigma2)` implied by these landmarks.
    pub fn targets(&self) -> (f64, f64, f64) {
        (
            self.theta_mdf,
            (self.theta_mdf - self.theta_fc) / 4.0,
            (self.theta_fo - self.theta_mdf) / 4.0,
        )
    }
}

/// Landmarks of a stance window: first shank angle, shank angle at the (first) DF
/// maximum, last shank angle.
pub fn extract_raw(window: &StanceWindow) -> Result<RawStrideFeatures> {
    if window.len() < MIN_WINDOW_SAMPLES {
        return Err(Error::WindowTooShort {
            len: window.len(),
            min: MIN_WINDOW_SAMPLES,
        });
    }
    let df = window.theta_df();
    let sk = window.theta_sk();
    let mut i_max = 0;
    for (i, &v) in df.iter().enumerate() {
        if v > df[i_max] {
            i_max = i;
        }
    }
    let raw = RawStrideFeatures {
        theta_fc: sk[0],
        theta_mdf: sk[i_max],
        theta_fo: sk[sk.len() - 1],
    };
    if [raw.theta_fc, raw.theta_mdf, raw.theta_fo]
        .iter()
        .any(|v| !v.is_finite())
    {
        return Err(Error::SignalQuality(format!(
            "non-finite landmarks {raw:?}"
        )));
    }
    Ok(raw)
}

/// Bounds that decide whether a stride's parameter deltas are plausible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalityGuard {
    pub max_dmu: f64,
    pub max_dsigma: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
}

impl Default for NormalityGuard {
    fn default() -> Self {
        Self {
            max_dmu: 10.0,
            max_dsigma: 5.0,
            sigma_min: 1.0,
            sigma_max: 30.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rejection {
    Ordering,
    DeltaOutOfRange,
    SigmaOutOfRange,
    InvalidResult,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateOutcome {
    pub params: GaussianParams,
    pub rejected: Option<Rejection>,
}

impl UpdateOutcome {
    pub fn accepted(&self) -> bool {
        self.rejected.is_none()
    }
}

/// Once-per-stride estimator of `(mu, sigma1, sigma2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorState {
    current: GaussianParams,
    pub gain: f64,
    pub guard: NormalityGuard,
}

impl EstimatorState {
    pub fn new(initial: GaussianParams) -> Result<Self> {
        initial.validate()?;
        Ok(Self {
            current: initial,
            gain: UPDATE_GAIN,
            guard: NormalityGuard::default(),
        })
    }

    pub fn current(&self) -> &GaussianParams {
        &self.current
    }

    /// Moves the parameters a fraction `gain` of the way towards the targets implied by
    /// `raw`. Implausible strides leave the parameters untouched.
    pub fn update(&mut self, raw: &RawStrideFeatures) -> UpdateOutcome {
        let reject = |cur: GaussianParams, why| UpdateOutcome {
            params: cur,
            rejected: Some(why),
        };
        if !raw.is_ordered() {
            return reject(self.current, Rejection::Ordering);
        }
        let (mu_t, s1_t, s2_t) = raw.targets();
        let c = self.current;
        let d_mu = mu_t - c.mu;
        let d_s1 = s1_t - c.sigma1;
        let d_s2 = s2_t - c.sigma2;
        let g = &self.guard;
        if d_mu.abs() > g.max_dmu || d_s1.abs() > g.max_dsigma || d_s2.abs() > g.max_dsigma {
            return reject(c, Rejection::DeltaOutOfRange);
        }
        let next = GaussianParams {
            amp: c.amp,
            mu: c.mu + self.gain * d_mu,
            sigma1: c.sigma1 + self.gain * d_s1,
            sigma2: c.sigma2 + self.gain * d_s2,
            theta_fc: raw.theta_fc,
            theta_fo: raw.theta_fo,
        };
        let sigma_ok = |s: f64| (g.sigma_min..=g.sigma_max).contains(&s);
        if !sigma_ok(next.sigma1) || !sigma_ok(next.sigma2) {
            return reject(c, Rejection::SigmaOutOfRange);
        }
        if next.validate().is_err() {
            return reject(c, Rejection::InvalidResult);
        }
        self.current = next;
        UpdateOutcome {
            params: next,
            rejected: None,
        }
    }
}

/// Shank-angle trajectory of one stance indexed by elapsed fraction of the stride period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StanceMap {
    /// Stride period the map was recorded with (s).
    pub period_s: f64,
    pct: Vec<f64>,
    theta_sk: Vec<f64>,
}

impl StanceMap {
    /// `samples` are `(seconds since foot contact, shank angle)` pairs in time order.
    pub fn new(period_s: f64, samples: &[(f64, f64)]) -> Result<Self> {
        if !(period_s > 0.0) || samples.len() < 2 {
            return Err(Error::InvalidParams(
                "stance map needs a positive period and at least two samples".into(),
            ));
        }
        let pct: Vec<f64> = samples.iter().map(|(t, _)| t / period_s).collect();
        if pct.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParams(
                "stance map times must increase".into(),
            ));
        }
        Ok(Self {
            period_s,
            pct,
            theta_sk: samples.iter().map(|(_, th)| *th).collect(),
        })
    }

    /// Shank angle the recorded stance had at `pct_gc`, or `None` once past its foot-off.
    pub fn theta_at(&self, pct_gc: f64) -> Option<f64> {
        let last = *self.pct.last()?;
        if pct_gc > last {
            return None;
        }
        if pct_gc <= self.pct[0] {
            return Some(self.theta_sk[0]);
        }
        let j = self.pct.partition_point(|&p| p < pct_gc);
        let (p0, p1) = (self.pct[j - 1], self.pct[j]);
        let w = (pct_gc - p0) / (p1 - p0);
        Some(self.theta_sk[j - 1] + w * (self.theta_sk[j] - self.theta_sk[j - 1]))
    }

    /// Elapsed fraction of the recorded stride after `elapsed_s` seconds.
    pub fn pct_of(&self, elapsed_s: f64) -> f64 {
        elapsed_s / self.period_s
    }
}

/// Time-parameterised comparator: the same dual-Gaussian shape, progressed by elapsed
/// fraction of the previous stride instead of the current shank angle.
pub fn eval_time_profile(p: &GaussianParams, pct_gc: f64, prev: Option<&StanceMap>) -> f64 {
    prev.and_then(|m| m.theta_at(pct_gc))
        .map_or(0.0, |theta| p.force(theta))
}
