//! Run artifacts: per-tick time series and the per-stride summary.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::plant::{Activity, PerturbationKind};
use crate::profile::GaussianParams;

use super::config::Scenario;

/// One control tick, in `timeseries.csv` column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeseriesRow {
    pub t_ms: f64,
    pub stride: u64,
    pub mode: String,
    pub theta_sk_deg: f64,
    pub theta_ft_deg: f64,
    pub theta_df_deg: f64,
    pub f_des_n: f64,
    pub f_meas_n: f64,
    pub f_truth_n: f64,
    pub l_cable_mm: f64,
    pub v_cmd_mm_s: f64,
    pub belt_scale: f64,
    pub perturbed: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrideMetrics {
    pub stride: u64,
    pub t_fc_ms: f64,
    pub t_fo_ms: Option<f64>,
    pub duration_s: f64,
    /// Detected stance fraction of the stride.
    pub stance_ratio: Option<f64>,
    pub assisted: bool,
    /// Tracking RMSE over assisted stance as a fraction of the peak force.
    pub rmse_pct: Option<f64>,
    pub pearson_shank: Option<f64>,
    pub pearson_time: Option<f64>,
    /// Parameters in effect during this stride.
    pub params: GaussianParams,
    /// Largest true cable force in the swing that follows this stance (N).
    pub swing_max_force: Option<f64>,
    pub perturbed: bool,
    pub perturbation: Option<PerturbationKind>,
    /// Estimator verdict on this stride's stance window.
    pub update_rejected: Option<String>,
    /// Controller migration estimate after this stride (mm).
    pub migration_est: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

impl MeanSd {
    pub fn of(v: &[f64]) -> Option<Self> {
        super::metrics::mean_sd(v).map(|(mean, sd)| Self {
            mean,
            sd,
            n: v.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    /// Strides the aggregates are computed over.
    pub strides: Vec<u64>,
    pub rmse_pct: Option<MeanSd>,
    pub pearson_shank: Option<MeanSd>,
    pub pearson_time: Option<MeanSd>,
    pub swing_max_force: Option<MeanSd>,
    pub stance_ratio: Option<MeanSd>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub activity: Activity,
    pub scenario: Scenario,
    pub seed: u64,
    pub n_strides: u64,
    /// Peak assistance force (N).
    pub amp: f64,
    pub strides: Vec<StrideMetrics>,
    pub aggregates: Aggregates,
    /// Estimator parameters indexed by update count; entry 0 is the initial value.
    pub param_history: Vec<GaussianParams>,
    /// `(mu, sigma1, sigma2)` implied by the last ordered stance window.
    pub targets: Option<(f64, f64, f64)>,
    pub convergence_stride: Option<usize>,
    pub aborted: bool,
    pub abort_t_ms: Option<f64>,
}

/// JSON formatter writing every float with 17 significant digits.
struct PreciseFormatter;

impl serde_json::ser::Formatter for PreciseFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()> {
        write!(writer, "{:.16e}", value as f64)
    }
}

impl MetricsReport {
    pub fn to_json(&self) -> Result<String> {
        let mut buf = Vec::new();
        let mut ser = serde_json::Serializer::with_formatter(&mut buf, PreciseFormatter);
        self.serialize(&mut ser)?;
        buf.push(b'\n');
        Ok(String::from_utf8(buf).expect("json is utf-8"))
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

pub fn write_timeseries<W: Write>(writer: W, rows: &[TimeseriesRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
