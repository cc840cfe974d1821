//! Two-rate scheduler wiring plant, sensing, estimation and control, plus the metrics and
//! artifacts of a run.
//!
//! Every control tick (1 kHz) advances the gait clock, runs the controller on the latest
//! kinematics and steps the plant. Every tenth tick additionally samples the IMU, runs
//! event detection and stance buffering, and at foot-off estimates the next stride's
//! profile parameters, which reach the controller at the following foot contact.

pub mod config;
pub mod metrics;
pub mod report;

use std::collections::VecDeque;
use std::path::Path;

pub use config::{ForceSpike, Scenario, ScenarioConfig};
pub use metrics::{convergence_stride, pearson, rmse_pct, stance_correlation};
pub use report::{Aggregates, MeanSd, MetricsReport, StrideMetrics, TimeseriesRow};

use crate::controller::{Controller, Mode, TickInput};
use crate::error::Result;
use crate::gait_signals::{
    EventKind, GaitTracker, KinematicSample, DEFAULT_WINDOW_CAPACITY, IMU_PERIOD_MS,
};
use crate::plant::{
    GaitClock, GaitTemplate, PerturbationKind, PerturbationSpec, PlantOutput, PlantState,
};
use crate::profile::{eval_time_profile, extract_raw, EstimatorState, GaussianParams, StanceMap};
use crate::tendon::TendonModel;

/// IMU samples kept for recovering the start of a stance after a delayed contact.
const RECENT_SAMPLES: usize = 32;

/// Report plus the full per-tick record.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub report: MetricsReport,
    pub timeseries: Vec<TimeseriesRow>,
}

/// One IMU sample taken during a detected stance, for the correlation metrics.
#[derive(Debug, Clone, Copy)]
struct StanceSample {
    t_ms: f64,
    theta_sk: f64,
    phase: f64,
}

#[derive(Debug, Clone)]
struct StrideAccum {
    index: u64,
    t_fc: f64,
    t_fo: Option<f64>,
    params: GaussianParams,
    stance: Vec<StanceSample>,
    f_des: Vec<f64>,
    f_meas: Vec<f64>,
    assisted: bool,
    swing_max: Option<f64>,
    update_rejected: Option<String>,
}

impl StrideAccum {
    fn new(index: u64, t_fc: f64, params: GaussianParams) -> Self {
        Self {
            index,
            t_fc,
            t_fo: None,
            params,
            stance: Vec::new(),
            f_des: Vec::new(),
            f_meas: Vec::new(),
            assisted: false,
            swing_max: None,
            update_rejected: None,
        }
    }

    fn in_stance(&self) -> bool {
        self.t_fo.is_none()
    }
}

/// Runs the scenario and, if `out_dir` is set, writes `timeseries.csv` and
/// `summary.json` there.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<MetricsReport> {
    let sim = simulate(cfg)?;
    if let Some(dir) = &cfg.out_dir {
        write_outputs(dir, &sim)?;
    }
    Ok(sim.report)
}

pub fn write_outputs(dir: impl AsRef<Path>, sim: &Simulation) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let f = std::io::BufWriter::new(std::fs::File::create(dir.join("timeseries.csv"))?);
    report::write_timeseries(f, &sim.timeseries)?;
    sim.report.write_json(dir.join("summary.json"))
}

/// Second-order extrapolation of the latest IMU frame to `t_ms`, with segment
/// accelerations from the two latest frames.
fn extrapolate(s: &KinematicSample, prev: Option<&KinematicSample>, t_ms: f64) -> KinematicSample {
    let h = (t_ms - s.t_ms) / 1000.0;
    let (a_ft, a_sk) = match prev {
        Some(p) if s.t_ms > p.t_ms => {
            let span = (s.t_ms - p.t_ms) / 1000.0;
            (
                (s.theta_ft_rate - p.theta_ft_rate) / span,
                (s.theta_sk_rate - p.theta_sk_rate) / span,
            )
        }
        _ => (0.0, 0.0),
    };
    KinematicSample::new(
        t_ms,
        s.theta_ft + s.theta_ft_rate * h + 0.5 * a_ft * h * h,
        s.theta_sk + s.theta_sk_rate * h + 0.5 * a_sk * h * h,
        s.theta_ft_rate + a_ft * h,
        s.theta_sk_rate + a_sk * h,
    )
    .expect("finite kinematics")
}

struct Run {
    tmpl: GaitTemplate,
    amp: f64,
    perturbations: Vec<PerturbationSpec>,
    strides: Vec<StrideMetrics>,
    current: Option<StrideAccum>,
    prev_map: Option<StanceMap>,
    history: Vec<GaussianParams>,
    targets: Option<(f64, f64, f64)>,
}

impl Run {
    fn perturbation_of(&self, stride: u64) -> Option<PerturbationKind> {
        self.perturbations
            .iter()
            .find(|p| p.affected_cycles.contains(&stride))
            .map(|p| p.kind)
    }

    /// Closes the current stride at the next foot contact `t_next`.
    fn close_stride(&mut self, t_next: f64, migration_est: f64) -> Result<()> {
        let Some(acc) = self.current.take() else {
            return Ok(());
        };
        let duration_s = (t_next - acc.t_fc) / 1000.0;
        let stance_ratio = acc.t_fo.map(|fo| (fo - acc.t_fc) / (t_next - acc.t_fc));
        let rmse = if acc.assisted && !acc.f_des.is_empty() {
            Some(rmse_pct(&acc.f_des, &acc.f_meas, self.amp)?)
        } else {
            None
        };
        let (pearson_shank, pearson_time) = self.correlations(&acc);
        let perturbation = self.perturbation_of(acc.index);
        self.strides.push(StrideMetrics {
            stride: acc.index,
            t_fc_ms: acc.t_fc,
            t_fo_ms: acc.t_fo,
            duration_s,
            stance_ratio,
            assisted: acc.assisted,
            rmse_pct: rmse,
            pearson_shank,
            pearson_time,
            params: acc.params,
            swing_max_force: acc.swing_max,
            perturbed: perturbation.is_some(),
            perturbation,
            update_rejected: acc.update_rejected,
            migration_est,
        });
        // The time-based comparator replays this stride's stance next time.
        let samples: Vec<(f64, f64)> = acc
            .stance
            .iter()
            .map(|s| ((s.t_ms - acc.t_fc) / 1000.0, s.theta_sk))
            .collect();
        self.prev_map = StanceMap::new(duration_s, &samples).ok();
        Ok(())
    }

    /// Shank- and time-based profile correlations with the biological torque over the
    /// stride's stance, on a uniform time grid.
    fn correlations(&self, acc: &StrideAccum) -> (Option<f64>, Option<f64>) {
        if acc.stance.len() < 3 {
            return (None, None);
        }
        let t: Vec<f64> = acc.stance.iter().map(|s| s.t_ms).collect();
        let n = metrics::STANCE_GRID_POINTS;
        let series = |f: &dyn Fn(&StanceSample) -> f64| -> Option<Vec<f64>> {
            let y: Vec<f64> = acc.stance.iter().map(f).collect();
            metrics::resample(&t, &y, n).ok()
        };
        let bio = series(&|s| self.tmpl.biological_torque(s.phase));
        let shank = series(&|s| acc.params.force(s.theta_sk));
        let time = series(&|s| {
            eval_time_profile(
                &acc.params,
                (s.t_ms - acc.t_fc) / 1000.0 / self.prev_period(),
                self.prev_map.as_ref(),
            )
        });
        let corr = |m: Option<Vec<f64>>| -> Option<f64> {
            stance_correlation(m.as_deref()?, bio.as_deref()?).ok()
        };
        (corr(shank), corr(time))
    }

    fn prev_period(&self) -> f64 {
        self.prev_map
            .as_ref()
            .map_or(self.tmpl.period, |m| m.period_s)
    }
}

/// Runs the closed loop in memory.
pub fn simulate(cfg: &ScenarioConfig) -> Result<Simulation> {
    cfg.validate()?;
    let tmpl = cfg.template();
    let amp = cfg.amp();
    let dt = cfg.dt;
    let ticks_per_imu = (IMU_PERIOD_MS / (dt * 1000.0)).round() as u64;
    let pre_roll_ticks =
        ((cfg.pre_roll / dt).round() as u64).div_ceil(ticks_per_imu) * ticks_per_imu;
    let ramp = cfg.ramp_schedule();

    let mut clock = GaitClock::new(tmpl.period, dt, cfg.phase_gain)?.with_pre_roll(pre_roll_ticks);
    let start = tmpl.gen_frame(0.0, clock.phase(), 1.0);
    // Motor travel is referenced to the neutral ankle.
    let mut plant = PlantState::new(cfg.plant, 0.0, cfg.seed)?;
    let pc = &cfg.plant;
    let initial = GaussianParams::initial(amp);
    let mut controller = Controller::new(
        cfg.controller,
        TendonModel::new(pc.lever_arm_r, pc.k_all, pc.baseline_c)?,
        Some(initial),
    )?;
    let mut estimator = EstimatorState::new(initial)?;
    let mut tracker = GaitTracker::new(cfg.detector, DEFAULT_WINDOW_CAPACITY);

    let mut run = Run {
        tmpl,
        amp,
        perturbations: cfg.perturbation_schedule(),
        strides: Vec::with_capacity(cfg.n_strides as usize),
        current: None,
        prev_map: None,
        history: vec![initial],
        targets: None,
    };

    let mut timeseries = Vec::new();
    let mut recent: VecDeque<StanceSample> = VecDeque::with_capacity(RECENT_SAMPLES);
    let mut imu = start;
    let mut prev_imu: Option<KinematicSample> = None;
    let mut handed = initial;
    let mut pending: Option<GaussianParams> = None;
    let mut last = PlantOutput {
        f_truth: 0.0,
        f_meas: 0.0,
        l_meas: plant.l_cable,
        l_meas_rate: 0.0,
    };
    let mut abort_t_ms = None;
    let mut stride_no: u64 = 0;
    let mut prev_clock_stride = clock.stride();
    let mut was_pre_roll = clock.in_pre_roll();
    let max_ticks = ((cfg.n_strides + 3) as f64 * tmpl.period * 2.5 / dt) as u64 + pre_roll_ticks;

    let mut tick: u64 = 0;
    while tick < max_ticks {
        tick += 1;
        let t_ms = tick as f64 * dt * 1000.0;
        let ct = clock.advance(&run.perturbations, ramp.as_ref());
        if ct.stride != prev_clock_stride || (was_pre_roll && !clock.in_pre_roll()) {
            plant.on_stride_start();
            prev_clock_stride = ct.stride;
        }
        was_pre_roll = clock.in_pre_roll();
        let truth = tmpl.gen_frame(t_ms, ct.phase, ct.speed_scale);

        // 100 Hz sensing and estimation path.
        if tick.is_multiple_of(ticks_per_imu) {
            prev_imu = Some(imu);
            imu = truth;
            let sample = StanceSample {
                t_ms: imu.t_ms,
                theta_sk: imu.theta_sk,
                phase: ct.phase,
            };
            if recent.len() == RECENT_SAMPLES {
                recent.pop_front();
            }
            recent.push_back(sample);
            let step = tracker.process(&imu);
            match step.event {
                Some(ev) if ev.kind == EventKind::FootContact => {
                    run.close_stride(ev.t_ms, controller.tendon().delta_l1)?;
                    if ev.gc_index >= cfg.n_strides {
                        break;
                    }
                    let hand = pending.take();
                    if let Some(p) = hand {
                        handed = p;
                    }
                    controller.on_event(&ev, hand);
                    stride_no = ev.gc_index;
                    let mut acc = StrideAccum::new(ev.gc_index, ev.t_ms, handed);
                    // Samples between the contact peak and its confirmation.
                    acc.stance
                        .extend(recent.iter().filter(|s| s.t_ms >= ev.t_ms));
                    run.current = Some(acc);
                }
                Some(ev) => {
                    let rejected = estimate(&mut tracker, &mut estimator, &mut run);
                    pending = Some(*estimator.current());
                    controller.on_event(&ev, None);
                    if let Some(acc) = run.current.as_mut() {
                        acc.t_fo = Some(ev.t_ms);
                        acc.update_rejected = rejected;
                        acc.stance.retain(|s| s.t_ms <= ev.t_ms);
                    }
                }
                None => {
                    if let Some(acc) = run.current.as_mut().filter(|a| a.in_stance()) {
                        acc.stance.push(sample);
                    }
                }
            }
        }

        // 1 kHz control path.
        let (kin, kin_ff) = if cfg.extrapolate_kinematics {
            (
                extrapolate(&imu, prev_imu.as_ref(), t_ms),
                extrapolate(
                    &imu,
                    prev_imu.as_ref(),
                    t_ms + cfg.feedforward_lead * 1000.0,
                ),
            )
        } else {
            (imu, imu)
        };
        let mut f_meas = last.f_meas;
        if let Some(spike) = cfg.force_spike {
            if (t_ms - spike.t_ms).abs() < 0.5 * dt * 1000.0 {
                f_meas = spike.force;
            }
        }
        let input = TickInput {
            kin,
            kin_ff: Some(kin_ff),
            f_meas,
            l_meas: last.l_meas,
            l_meas_rate: last.l_meas_rate,
            motor_pos: plant.motor_pos(),
        };
        let out = controller.tick(&input, dt);
        if controller.is_aborted() && abort_t_ms.is_none() {
            abort_t_ms = Some(t_ms);
        }
        last = plant.step(&out.cmd, &truth, dt);

        if let Some(acc) = run.current.as_mut() {
            match out.mode {
                Mode::Stance if acc.in_stance() => {
                    acc.assisted = true;
                    acc.f_des.push(out.f_des);
                    acc.f_meas.push(last.f_meas);
                }
                Mode::Swing if !acc.in_stance() => {
                    acc.swing_max = Some(
                        acc.swing_max
                            .map_or(last.f_truth, |m: f64| m.max(last.f_truth)),
                    );
                }
                _ => {}
            }
        }

        timeseries.push(TimeseriesRow {
            t_ms,
            stride: stride_no,
            mode: if controller.is_aborted() {
                "abort".into()
            } else {
                out.mode.as_str().into()
            },
            theta_sk_deg: truth.theta_sk,
            theta_ft_deg: truth.theta_ft,
            theta_df_deg: truth.theta_df,
            f_des_n: out.f_des,
            f_meas_n: last.f_meas,
            f_truth_n: last.f_truth,
            l_cable_mm: plant.l_cable,
            v_cmd_mm_s: out.cmd.v,
            belt_scale: ct.belt_scale,
            perturbed: u8::from(ct.perturbed),
        });

        if let Some(ta) = abort_t_ms {
            // Keep logging through the release, then stop.
            if t_ms - ta >= 500.0 {
                break;
            }
        }
    }

    let aborted = abort_t_ms.is_some();
    if aborted {
        run.close_stride(tick as f64 * dt * 1000.0, controller.tendon().delta_l1)?;
    }
    let report = finish(run, cfg, aborted, abort_t_ms);
    Ok(Simulation { report, timeseries })
}

/// Estimates the next parameters from the finished stance window and clears it.
/// Returns the rejection reason, if any.
fn estimate(
    tracker: &mut GaitTracker,
    estimator: &mut EstimatorState,
    run: &mut Run,
) -> Option<String> {
    if !tracker.window_ready() {
        return Some("no stance window".into());
    }
    let verdict = match extract_raw(tracker.window()) {
        Ok(raw) => {
            if raw.is_ordered() {
                run.targets = Some(raw.targets());
            }
            estimator.update(&raw).rejected.map(|r| format!("{r:?}"))
        }
        Err(e) => Some(e.to_string()),
    };
    run.history.push(*estimator.current());
    tracker.clear_window();
    verdict
}

fn finish(run: Run, cfg: &ScenarioConfig, aborted: bool, abort_t_ms: Option<f64>) -> MetricsReport {
    let convergence = run
        .targets
        .and_then(|t| convergence_stride(&run.history, t, cfg.convergence_tol));
    let window: Vec<&StrideMetrics> = {
        let eligible: Vec<&StrideMetrics> = run
            .strides
            .iter()
            .filter(|s| s.assisted && !s.perturbed && s.rmse_pct.is_some())
            .collect();
        let skip = eligible.len().saturating_sub(cfg.aggregate_strides);
        eligible.into_iter().skip(skip).collect()
    };
    let collect = |f: &dyn Fn(&StrideMetrics) -> Option<f64>| -> Option<MeanSd> {
        let v: Vec<f64> = window.iter().filter_map(|s| f(s)).collect();
        MeanSd::of(&v)
    };
    let aggregates = Aggregates {
        strides: window.iter().map(|s| s.stride).collect(),
        rmse_pct: collect(&|s| s.rmse_pct),
        pearson_shank: collect(&|s| s.pearson_shank),
        pearson_time: collect(&|s| s.pearson_time),
        swing_max_force: collect(&|s| s.swing_max_force),
        stance_ratio: collect(&|s| s.stance_ratio),
    };
    MetricsReport {
        activity: cfg.activity,
        scenario: cfg.scenario,
        seed: cfg.seed,
        n_strides: cfg.n_strides,
        amp: run.amp,
        strides: run.strides,
        aggregates,
        param_history: run.history,
        targets: run.targets,
        convergence_stride: convergence,
        aborted,
        abort_t_ms,
    }
}
