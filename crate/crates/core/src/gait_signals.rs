//! IMU-derived kinematics, gait event detection and stance-window buffering.
//!
//! Everything here runs at the IMU rate (100 Hz). Angles are in degrees, rates in
//! degrees per second, time in milliseconds.
//!
//! Sign conventions: foot pitch is positive with the forefoot higher than the hindfoot,
//! shank angle is zero upright and positive with the knee ahead of the ankle, and both
//! read zero when standing straight. With those conventions the ankle dorsiflexion angle
//! is the sum of the two segment angles (see [`derive_df`]).

use std::collections::VecDeque;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nominal IMU sample period.
pub const IMU_PERIOD_MS: f64 = 10.0;

/// Largest number of consecutive missing IMU samples that is bridged by extrapolation.
pub const MAX_BRIDGED_SAMPLES: usize = 3;

/// One IMU frame for a single leg.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KinematicSample {
    pub t_ms: f64,
    /// Foot pitch (deg), positive forefoot-up.
    pub theta_ft: f64,
    /// Shank angle (deg), positive with knee flexion.
    pub theta_sk: f64,
    /// Ankle dorsiflexion (deg), zero at upright stand.
    pub theta_df: f64,
    pub theta_ft_rate: f64,
    pub theta_sk_rate: f64,
    pub theta_df_rate: f64,
}

impl KinematicSample {
    /// Builds a sample from the two measured segments; the DF channel is derived.
    pub fn new(
        t_ms: f64,
        theta_ft: f64,
        theta_sk: f64,
        theta_ft_rate: f64,
        theta_sk_rate: f64,
    ) -> Result<Self> {
        if !t_ms.is_finite() {
            return Err(Error::SignalQuality(format!("non-finite timestamp {t_ms}")));
        }
        let (theta_df, theta_df_rate) =
            derive_df(theta_sk, theta_ft, theta_sk_rate, theta_ft_rate)?;
        Ok(Self {
            t_ms,
            theta_ft,
            theta_sk,
            theta_df,
            theta_ft_rate,
            theta_sk_rate,
            theta_df_rate,
        })
    }
}

/// Ankle dorsiflexion angle and rate from the shank and foot segment angles.
///
/// `theta_df = theta_sk + theta_ft`. With forefoot-up-positive foot pitch and
/// knee-forward-positive shank angle the ankle angle is the sum of the segment angles:
/// heel strike (shank back, toes up) reads near zero and push-off (shank forward,
/// heel up) reads plantarflexed.
pub fn derive_df(
    theta_sk: f64,
    theta_ft: f64,
    theta_sk_rate: f64,
    theta_ft_rate: f64,
) -> Result<(f64, f64)> {
    let inputs = [theta_sk, theta_ft, theta_sk_rate, theta_ft_rate];
    if inputs.iter().any(|v| !v.is_finite()) {
        return Err(Error::SignalQuality(format!(
            "non-finite kinematic input {inputs:?}"
        )));
    }
    Ok((theta_sk + theta_ft, theta_sk_rate + theta_ft_rate))
}

/// Standing-posture offsets subtracted from the raw segment angles.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub ft_offset: f64,
    pub sk_offset: f64,
}

impl Calibration {
    /// Mean segment angles over a standing capture.
    pub fn from_standing(samples: &[KinematicSample]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::SignalQuality("empty standing capture".into()));
        }
        let n = samples.len() as f64;
        Ok(Self {
            ft_offset: samples.iter().map(|s| s.theta_ft).sum::<f64>() / n,
            sk_offset: samples.iter().map(|s| s.theta_sk).sum::<f64>() / n,
        })
    }

    pub fn apply(&self, s: &KinematicSample) -> Result<KinematicSample> {
        KinematicSample::new(
            s.t_ms,
            s.theta_ft - self.ft_offset,
            s.theta_sk - self.sk_offset,
            s.theta_ft_rate,
            s.theta_sk_rate,
        )
    }
}

/// Enforces the 100 Hz sample-rate contract on an incoming stream.
///
/// Up to [`MAX_BRIDGED_SAMPLES`] missing samples are filled by linear extrapolation from
/// the last two received samples; longer gaps are a signal loss.
#[derive(Debug, Clone, Default)]
pub struct GapFiller {
    prev: Option<KinematicSample>,
    prev2: Option<KinematicSample>,
    bridged: usize,
}

impl GapFiller {
    pub fn new() -> Self {
        Self::default()
    }

    /// Total number of samples synthesised so far.
    pub fn bridged(&self) -> usize {
        self.bridged
    }

    /// Accepts the next received sample and returns the samples to process, oldest first.
    pub fn accept(&mut self, s: KinematicSample) -> Result<Vec<KinematicSample>> {
        let mut out = Vec::with_capacity(1);
        if let Some(p) = self.prev {
            let dt = s.t_ms - p.t_ms;
            if dt <= 0.0 {
                return Err(Error::SignalQuality(format!(
                    "timestamps not increasing: {} then {}",
                    p.t_ms, s.t_ms
                )));
            }
            let steps = (dt / IMU_PERIOD_MS).round().max(1.0) as usize;
            let missing = steps - 1;
            if missing > MAX_BRIDGED_SAMPLES {
                return Err(Error::SignalLoss {
                    t_ms: p.t_ms,
                    missing,
                });
            }
            if missing > 0 {
                log::warn!(
                    "bridging {missing} missing IMU sample(s) after t = {} ms",
                    p.t_ms
                );
                let base = self.prev2.unwrap_or(p);
                let span = (p.t_ms - base.t_ms).max(f64::EPSILON);
                for k in 1..=missing {
                    let t = p.t_ms + k as f64 * IMU_PERIOD_MS;
                    let extrap = |a: f64, b: f64| {
                        if self.prev2.is_some() {
                            b + (b - a) * (t - p.t_ms) / span
                        } else {
                            b
                        }
                    };
                    let filled = KinematicSample::new(
                        t,
                        extrap(base.theta_ft, p.theta_ft),
                        extrap(base.theta_sk, p.theta_sk),
                        extrap(base.theta_ft_rate, p.theta_ft_rate),
                        extrap(base.theta_sk_rate, p.theta_sk_rate),
                    )?;
                    out.push(filled);
                }
                self.bridged += missing;
            }
        }
        out.push(s);
        self.prev2 = self.prev;
        self.prev = Some(s);
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    FootContact,
    FootOff,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaitEvent {
    pub kind: EventKind,
    /// Time of the extremum sample that defines the event.
    pub t_ms: f64,
    pub gc_index: u64,
    /// Stream index of the extremum sample.
    pub sample_index: u64,
    /// Stream index of the sample at which the event was confirmed.
    pub confirmed_index: u64,
}

/// Gait phase as seen by the detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GaitPhase {
    Swing,
    Stance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    /// Foot-pitch hysteresis for the foot-contact maximum (deg).
    pub delta_ang: f64,
    /// Foot-pitch-rate hysteresis for the foot-off minimum (deg/s).
    pub delta_vel: f64,
    /// Dead time after every event (ms).
    pub refractory_ms: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            delta_ang: 1.0,
            delta_vel: 10.0,
            refractory_ms: 200.0,
        }
    }
}

/// Hysteresis extremum tracker. Looks for a maximum when `sign = 1`, a minimum when
/// `sign = -1`. A candidate extremum only counts once the signal has first moved by at
/// least `delta` towards it, and is confirmed when the signal retreats by `delta`.
#[derive(Debug, Clone, Copy)]
struct ExtremumSeeker {
    sign: f64,
    delta: f64,
    armed: bool,
    /// Opposite extremum used for arming.
    base: f64,
    best: f64,
    best_t: f64,
    best_idx: u64,
}

impl ExtremumSeeker {
    fn new(sign: f64, delta: f64) -> Self {
        Self {
            sign,
            delta,
            armed: false,
            base: f64::INFINITY,
            best: f64::NEG_INFINITY,
            best_t: 0.0,
            best_idx: 0,
        }
    }

    /// Feeds a value; returns `(t, idx)` of the confirmed extremum.
    fn feed(&mut self, v: f64, t: f64, idx: u64) -> Option<(f64, u64)> {
        let x = self.sign * v;
        if !self.armed {
            self.base = self.base.min(x);
            if x - self.base >= self.delta {
                self.armed = true;
                self.best = x;
                self.best_t = t;
                self.best_idx = idx;
            }
            return None;
        }
        if x > self.best {
            self.best = x;
            self.best_t = t;
            self.best_idx = idx;
            None
        } else if self.best - x >= self.delta {
            Some((self.best_t, self.best_idx))
        } else {
            None
        }
    }
}

/// Foot-contact / foot-off detector for one leg.
///
/// In swing it seeks the foot-pitch maximum (forefoot-up peak at contact); in stance it
/// seeks the foot-pitch-rate minimum (fastest heel rise just before foot-off). Events are
/// stamped with the extremum sample, not the confirmation sample.
#[derive(Debug, Clone)]
pub struct EventDetector {
    cfg: DetectorConfig,
    phase: GaitPhase,
    seeker: ExtremumSeeker,
    refractory_until: f64,
    next_index: u64,
    gc_index: u64,
    contacts_seen: u64,
}

impl EventDetector {
    pub fn new(cfg: DetectorConfig) -> Self {
        Self {
            cfg,
            phase: GaitPhase::Swing,
            seeker: ExtremumSeeker::new(1.0, cfg.delta_ang),
            refractory_until: f64::NEG_INFINITY,
            next_index: 0,
            gc_index: 0,
            contacts_seen: 0,
        }
    }

    pub fn phase(&self) -> GaitPhase {
        self.phase
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.cfg
    }

    /// Index the next sample fed to [`EventDetector::detect`] will receive.
    pub fn next_index(&self) -> u64 {
        self.next_index
    }

    pub fn detect(&mut self, s: &KinematicSample) -> Option<GaitEvent> {
        let idx = self.next_index;
        self.next_index += 1;
        if s.t_ms < self.refractory_until {
            return None;
        }
        let value = match self.phase {
            GaitPhase::Swing => s.theta_ft,
            GaitPhase::Stance => s.theta_ft_rate,
        };
        let (t_ext, idx_ext) = self.seeker.feed(value, s.t_ms, idx)?;
        let kind = match self.phase {
            GaitPhase::Swing => {
                if self.contacts_seen > 0 {
                    self.gc_index += 1;
                }
                self.contacts_seen += 1;
                self.phase = GaitPhase::Stance;
                self.seeker = ExtremumSeeker::new(-1.0, self.cfg.delta_vel);
                EventKind::FootContact
            }
            GaitPhase::Stance => {
                self.phase = GaitPhase::Swing;
                self.seeker = ExtremumSeeker::new(1.0, self.cfg.delta_ang);
                EventKind::FootOff
            }
        };
        self.refractory_until = s.t_ms + self.cfg.refractory_ms;
        Some(GaitEvent {
            kind,
            t_ms: t_ext,
            gc_index: self.gc_index,
            sample_index: idx_ext,
            confirmed_index: idx,
        })
    }
}

/// Stance-phase shank and DF angle buffers feeding the parameter estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StanceWindow {
    theta_sk_buf: VecDeque<f64>,
    theta_df_buf: VecDeque<f64>,
    capacity: usize,
    overflowed: bool,
}

/// Two seconds of stance at 100 Hz.
pub const DEFAULT_WINDOW_CAPACITY: usize = 200;

impl Default for StanceWindow {
    fn default() -> Self {
        Self::with_capacity(DEFAULT_WINDOW_CAPACITY)
    }
}

impl StanceWindow {
    pub fn with_capacity(capacity: usize) -> Self {
        assert!(capacity > 0, "window capacity must be positive");
        Self {
            theta_sk_buf: VecDeque::with_capacity(capacity),
            theta_df_buf: VecDeque::with_capacity(capacity),
            capacity,
            overflowed: false,
        }
    }

    /// Builds a window directly from angle lists (both must be the same length).
    pub fn from_angles(theta_sk: &[f64], theta_df: &[f64]) -> Result<Self> {
        if theta_sk.len() != theta_df.len() {
            return Err(Error::SignalQuality(format!(
                "window buffers differ in length: {} vs {}",
                theta_sk.len(),
                theta_df.len()
            )));
        }
        let mut w = Self::with_capacity(theta_sk.len().max(DEFAULT_WINDOW_CAPACITY));
        for (&sk, &df) in theta_sk.iter().zip(theta_df) {
            w.push_angles(sk, df);
        }
        Ok(w)
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.theta_sk_buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta_sk_buf.is_empty()
    }

    /// True if samples were dropped since the last clear.
    pub fn overflowed(&self) -> bool {
        self.overflowed
    }

    pub fn theta_sk(&self) -> &VecDeque<f64> {
        &self.theta_sk_buf
    }

    pub fn theta_df(&self) -> &VecDeque<f64> {
        &self.theta_df_buf
    }

    /// Appends the sample when `phase` is stance. Returns `true` if the oldest entry had
    /// to be dropped to make room.
    pub fn buffer(&mut self, sample: &KinematicSample, phase: GaitPhase) -> bool {
        if phase != GaitPhase::Stance {
            return false;
        }
        self.push_angles(sample.theta_sk, sample.theta_df)
    }

    fn push_angles(&mut self, sk: f64, df: f64) -> bool {
        let mut dropped = false;
        if self.theta_sk_buf.len() == self.capacity {
            self.theta_sk_buf.pop_front();
            self.theta_df_buf.pop_front();
            if !self.overflowed {
                log::warn!(
                    "stance window exceeded {} samples; dropping oldest",
                    self.capacity
                );
            }
            self.overflowed = true;
            dropped = true;
        }
        self.theta_sk_buf.push_back(sk);
        self.theta_df_buf.push_back(df);
        dropped
    }

    fn truncate_back(&mut self, n: usize) {
        for _ in 0..n.min(self.len()) {
            self.theta_sk_buf.pop_back();
            self.theta_df_buf.pop_back();
        }
    }

    pub fn clear(&mut self) {
        self.theta_sk_buf.clear();
        self.theta_df_buf.clear();
        self.overflowed = false;
    }
}

/// Per-sample output of [`GaitTracker::process`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerStep {
    pub event: Option<GaitEvent>,
    pub phase: GaitPhase,
}

/// The complete 100 Hz sensing path for one leg: event detection plus stance buffering.
///
/// When foot contact is confirmed a few samples after the actual foot-pitch peak, the
/// samples between the peak and the confirmation are recovered from a short history so
/// the stance window starts exactly at the contact sample. On foot-off the samples after
/// the rate minimum are trimmed so the window ends at the foot-off sample.
#[derive(Debug, Clone)]
pub struct GaitTracker {
    detector: EventDetector,
    window: StanceWindow,
    history: VecDeque<(u64, KinematicSample)>,
    history_len: usize,
    window_ready: bool,
}

impl GaitTracker {
    pub fn new(cfg: DetectorConfig, window_capacity: usize) -> Self {
        // Confirmation latency is bounded by the refractory period in practice.
        let history_len = ((cfg.refractory_ms / IMU_PERIOD_MS).ceil() as usize).max(32);
        Self {
            detector: EventDetector::new(cfg),
            window: StanceWindow::with_capacity(window_capacity),
            history: VecDeque::with_capacity(history_len),
            history_len,
            window_ready: false,
        }
    }

    pub fn phase(&self) -> GaitPhase {
        self.detector.phase()
    }

    pub fn window(&self) -> &StanceWindow {
        &self.window
    }

    /// True between a foot-off and the following clear.
    pub fn window_ready(&self) -> bool {
        self.window_ready
    }

    /// Clears the stance window once the stride's parameters have been estimated.
    pub fn clear_window(&mut self) {
        self.window.clear();
        self.window_ready = false;
    }

    pub fn process(&mut self, s: &KinematicSample) -> TrackerStep {
        let idx = self.detector.next_index();
        if self.history.len() == self.history_len {
            self.history.pop_front();
        }
        self.history.push_back((idx, *s));

        let phase_before = self.detector.phase();
        self.window.buffer(s, phase_before);
        let event = self.detector.detect(s);
        if let Some(ev) = event {
            match ev.kind {
                EventKind::FootContact => {
                    self.window.clear();
                    self.window_ready = false;
                    for (i, h) in &self.history {
                        if *i >= ev.sample_index {
                            self.window.buffer(h, GaitPhase::Stance);
                        }
                    }
                }
                EventKind::FootOff => {
                    let trailing = (ev.confirmed_index - ev.sample_index) as usize;
                    self.window.truncate_back(trailing);
                    self.window_ready = true;
                }
            }
        }
        TrackerStep {
            event,
            phase: self.detector.phase(),
        }
    }
}

#[derive(Debug, Deserialize)]
struct KinematicRow {
    t_ms: f64,
    theta_ft_deg: f64,
    theta_sk_deg: f64,
    theta_ft_rate_dps: f64,
    theta_sk_rate_dps: f64,
}

/// Reads a replay stream with header
/// `t_ms,theta_ft_deg,theta_sk_deg,theta_ft_rate_dps,theta_sk_rate_dps`.
pub fn read_kinematics_csv<R: Read>(reader: R) -> Result<Vec<KinematicSample>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let expected = [
        "t_ms",
        "theta_ft_deg",
        "theta_sk_deg",
        "theta_ft_rate_dps",
        "theta_sk_rate_dps",
    ];
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::SignalQuality(format!(
            "unexpected kinematics header {:?}",
            headers.iter().collect::<Vec<_>>()
        )));
    }
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let r: KinematicRow = row?;
        out.push(KinematicSample::new(
            r.t_ms,
            r.theta_ft_deg,
            r.theta_sk_deg,
            r.theta_ft_rate_dps,
            r.theta_sk_rate_dps,
        )?);
    }
    Ok(out)
}

pub fn read_kinematics_file(path: impl AsRef<Path>) -> Result<Vec<KinematicSample>> {
    read_kinematics_csv(std::fs::File::open(path)?)
}
