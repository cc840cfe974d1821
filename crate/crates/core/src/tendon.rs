//! Coupled human/suit "artificial tendon" model.
//!
//! The cable between the sheath anchor and the heel behaves like a tendon parallel to
//! the Achilles: its length grows with ankle dorsiflexion through the lever arm, shrinks
//! with suit deformation under load, and its baseline drifts as the suit migrates down
//! the shank. Lengths in mm, forces in N, angles in deg.

use std::io::Read;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest negative migration estimate (mm) still treated as measurement noise.
pub const MIGRATION_TOLERANCE_MM: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TendonModel {
    /// Assistance lever arm about the ankle (mm).
    pub lever_arm_r: f64,
    /// Series stiffness of the suit anchors (N/mm).
    pub k_all: f64,
    /// Unloaded tendon length at standing posture (mm).
    pub baseline_c: f64,
    /// Current suit migration (mm), held constant within a stride.
    pub delta_l1: f64,
}

/// Result of one migration re-estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MigrationEstimate {
    /// Unclamped shortfall of the measured length against the model (mm).
    pub raw: f64,
    /// Value held by the model afterwards.
    pub delta_l1: f64,
    /// False when the raw estimate was inconsistent and the previous value was kept.
    pub accepted: bool,
}

impl TendonModel {
    pub fn new(lever_arm_r: f64, k_all: f64, baseline_c: f64) -> Result<Self> {
        let m = Self {
            lever_arm_r,
            k_all,
            baseline_c,
            delta_l1: 0.0,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lever_arm_r > 0.0
            && self.k_all > 0.0
            && self.baseline_c > 0.0
            && self.delta_l1 >= 0.0
            && [self.lever_arm_r, self.k_all, self.baseline_c, self.delta_l1]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid tendon model {self:?}")))
        }
    }

    /// Arc length (mm) swept by the lever arm for an ankle angle in degrees.
    #[inline]
    pub fn arc(&self, theta_df_deg: f64) -> f64 {
        self.lever_arm_r * theta_df_deg.to_radians()
    }

    /// Tendon length under `force` at ankle angle `theta_df`.
    #[inline]
    pub fn tendon_length(&self, theta_df: f64, force: f64) -> f64 {
        self.arc(theta_df) - force / self.k_all + (self.baseline_c - self.delta_l1)
    }

    /// Tendon length rate for the given ankle and force rates (mm/s).
    #[inline]
    pub fn tendon_length_rate(&self, theta_df_rate: f64, force_rate: f64) -> f64 {
        self.arc(theta_df_rate) - force_rate / self.k_all
    }

    /// Re-estimates suit migration from one measurement of length, ankle angle and force.
    ///
    /// Migration is the shortfall of the measured length against the unmigrated model.
    /// Small negative values clamp to zero; anything below `-0.5 mm` is rejected and the
    /// previous value kept.
    pub fn estimate_migration(
        &mut self,
        l_meas: f64,
        theta_df: f64,
        f_meas: f64,
    ) -> MigrationEstimate {
        let predicted = self.baseline_c + self.arc(theta_df) - f_meas / self.k_all;
        let raw = predicted - l_meas;
        if !raw.is_finite() || raw < -MIGRATION_TOLERANCE_MM {
            log::warn!(
                "inconsistent migration estimate {raw:.3} mm; keeping {:.3} mm",
                self.delta_l1
            );
            return MigrationEstimate {
                raw,
                delta_l1: self.delta_l1,
                accepted: false,
            };
        }
        self.delta_l1 = raw.max(0.0);
        MigrationEstimate {
            raw,
            delta_l1: self.delta_l1,
            accepted: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StiffnessFit {
    /// Slope of force against deflection (N/mm).
    pub k_all: f64,
    /// Intercept (N).
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares of force on deflection. `samples` are `(force N, deflection mm)`.
pub fn identify_stiffness(samples: &[(f64, f64)]) -> Result<StiffnessFit> {
    if samples.len() < 2 {
        return Err(Error::Identification(format!(
            "need at least two samples, got {}",
            samples.len()
        )));
    }
    if samples
        .iter()
        .any(|(f, x)| !f.is_finite() || !x.is_finite())
    {
        return Err(Error::Identification("non-finite sample".into()));
    }
    let n = samples.len() as f64;
    let mean_f = samples.iter().map(|s| s.0).sum::<f64>() / n;
    let mean_x = samples.iter().map(|s| s.1).sum::<f64>() / n;
    let (mut sxx, mut sxf, mut sff) = (0.0, 0.0, 0.0);
    for &(f, x) in samples {
        let (df, dx) = (f - mean_f, x - mean_x);
        sxx += dx * dx;
        sxf += dx * df;
        sff += df * df;
    }
    if sxx <= f64::EPSILON * n * mean_x.abs().max(1.0) {
        return Err(Error::Identification("deflection has zero variance".into()));
    }
    let k = sxf / sxx;
    let b = mean_f - k * mean_x;
    let r_squared = if sff == 0.0 {
        1.0
    } else {
        (sxf * sxf / (sxx * sff)).clamp(0.0, 1.0)
    };
    Ok(StiffnessFit {
        k_all: k,
        intercept: b,
        r_squared,
    })
}

/// Checks a calibration record: at least ten samples covering at least 50 N.
pub fn check_calibration_span(samples: &[(f64, f64)]) -> Result<()> {
    if samples.len() < 10 {
        return Err(Error::Identification(format!(
            "calibration needs at least 10 samples, got {}",
            samples.len()
        )));
    }
    let (lo, hi) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
            (lo.min(s.0), hi.max(s.0))
        });
    if hi - lo < 50.0 {
        return Err(Error::Identification(format!(
            "calibration force range {:.1} N is below 50 N",
            hi - lo
        )));
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
struct CalibrationRow {
    force_n: f64,
    deflection_mm: f64,
}

/// Reads `force_n,deflection_mm` rows.
pub fn read_calibration_csv<R: Read>(reader: R) -> Result<Vec<(f64, f64)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let r: CalibrationRow = row?;
        out.push((r.force_n, r.deflection_mm));
    }
    Ok(out)
}

/// Reads a calibration file, checks its span and fits it.
pub fn identify_stiffness_file(path: impl AsRef<Path>) -> Result<StiffnessFit> {
    let samples = read_calibration_csv(std::fs::File::open(path)?)?;
    check_calibration_span(&samples)?;
    identify_stiffness(&samples)
}

/// Synthetic loading/unloading record: force ramps `f_lo -> f_hi -> f_lo` for `cycles`
/// cycles while deflection follows `F / k` offset by `-hysteresis_mm` on loading and
/// `+hysteresis_mm` on unloading (blended smoothly at the turning points), with optional
/// zero-mean force noise.
#[allow(clippy::too_many_arguments)]
pub fn synthetic_loops(
    k_all: f64,
    f_lo: f64,
    f_hi: f64,
    cycles: usize,
    samples_per_ramp: usize,
    hysteresis_mm: f64,
    force_noise_sd: f64,
    seed: u64,
) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, force_noise_sd.max(0.0)).expect("finite sd");
    let mut out = Vec::with_capacity(cycles * samples_per_ramp * 2);
    for _ in 0..cycles {
        for dir in [1.0, -1.0] {
            for i in 0..samples_per_ramp {
                let s = i as f64 / samples_per_ramp as f64;
                let frac = if dir > 0.0 { s } else { 1.0 - s };
                let f = f_lo + (f_hi - f_lo) * frac;
                // Offset crosses over smoothly near the turning points.
                let blend = (std::f64::consts::PI * s).sin().sqrt();
                let x = f / k_all - dir * hysteresis_mm * blend;
                let f_meas = if force_noise_sd > 0.0 {
                    f + noise.sample(&mut rng)
                } else {
                    f
                };
                out.push((f_meas, x));
            }
        }
    }
    out
}
