//! Command-line harness for the shank-angle assistance controller.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use log::info;
use shankassist::gait_signals::{read_kinematics_file, DetectorConfig, EventDetector};
use shankassist::harness::MeanSd;
use shankassist::tendon::identify_stiffness_file;
use shankassist::{Activity, EventKind, MetricsReport, Scenario, ScenarioConfig};

#[derive(Parser)]
#[command(
    name = "shankassist",
    version,
    about = "Soft ankle exoskeleton control simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a closed-loop walking experiment.
    Run(RunArgs),
    /// Detect foot-contact and foot-off events in a kinematics CSV.
    Detect {
        /// CSV with columns t_ms,theta_ft_deg,theta_sk_deg,theta_ft_rate_dps,theta_sk_rate_dps.
        input: PathBuf,
        /// Foot-pitch hysteresis (deg).
        #[arg(long)]
        delta_ang: Option<f64>,
        /// Foot-pitch-rate hysteresis (deg/s).
        #[arg(long)]
        delta_vel: Option<f64>,
    },
    /// Fit the cable stiffness from a force/deflection CSV.
    Identify {
        /// CSV with columns force_n,deflection_mm.
        input: PathBuf,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    /// lw, lr, ra or rd.
    #[arg(long)]
    activity: Option<Activity>,
    /// steady, perturb or speed-ramp.
    #[arg(long)]
    scenario: Option<Scenario>,
    #[arg(long)]
    strides: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Peak force as a fraction of body weight.
    #[arg(long)]
    amp: Option<f64>,
    /// Body weight (N).
    #[arg(long = "bw-n")]
    bw_n: Option<f64>,
    /// Directory for timeseries.csv and summary.json.
    #[arg(long)]
    out: Option<PathBuf>,
    /// TOML scenario file; command-line flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::Detect {
            input,
            delta_ang,
            delta_vel,
        } => detect(input, delta_ang, delta_vel),
        Command::Identify { input } => identify(input),
    }
}

fn scenario_config(args: RunArgs) -> Result<ScenarioConfig> {
    let mut cfg = match &args.config {
        Some(path) => ScenarioConfig::from_toml_file(path)
            .with_context(|| format!("loading {}", path.display()))?,
        None => ScenarioConfig::default(),
    };
    if let Some(a) = args.activity {
        cfg.activity = a;
    }
    if let Some(s) = args.scenario {
        cfg.scenario = s;
    }
    if let Some(n) = args.strides {
        cfg.n_strides = n;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(a) = args.amp {
        cfg.amp_fraction = a;
    }
    if let Some(w) = args.bw_n {
        cfg.body_weight = w;
    }
    if args.out.is_some() {
        cfg.out_dir = args.out;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(args: RunArgs) -> Result<()> {
    let cfg = scenario_config(args)?;
    info!(
        "running {} {} for {} strides",
        cfg.activity.as_str(),
        cfg.scenario.as_str(),
        cfg.n_strides
    );
    let report = shankassist::run_scenario(&cfg)?;
    print_summary(&report);
    if let Some(dir) = &cfg.out_dir {
        println!("wrote {}", dir.display());
    }
    Ok(())
}

fn fmt_stat(m: &Option<MeanSd>, scale: f64) -> String {
    match m {
        Some(m) => format!("{:.3} ± {:.3}", m.mean * scale, m.sd * scale),
        None => "n/a".to_string(),
    }
}

fn print_summary(r: &MetricsReport) {
    let agg = &r.aggregates;
    println!(
        "activity {}  scenario {}  strides {}  seed {}  amp {:.1} N",
        r.activity.as_str(),
        r.scenario.as_str(),
        r.n_strides,
        r.seed,
        r.amp
    );
    match r.convergence_stride {
        Some(c) => println!("convergence stride  {c}"),
        None => println!("convergence stride  none"),
    }
    if let (Some(first), Some(last)) = (agg.strides.first(), agg.strides.last()) {
        println!("aggregated strides  {first}..={last}");
    }
    println!("rmse %              {}", fmt_stat(&agg.rmse_pct, 100.0));
    println!("r shank             {}", fmt_stat(&agg.pearson_shank, 1.0));
    println!("r time              {}", fmt_stat(&agg.pearson_time, 1.0));
    println!(
        "swing max N         {}",
        fmt_stat(&agg.swing_max_force, 1.0)
    );
    println!("stance ratio %      {}", fmt_stat(&agg.stance_ratio, 100.0));
    if r.aborted {
        println!("ABORTED");
    }
}

fn detect(input: PathBuf, delta_ang: Option<f64>, delta_vel: Option<f64>) -> Result<()> {
    let samples =
        read_kinematics_file(&input).with_context(|| format!("reading {}", input.display()))?;
    let mut cfg = DetectorConfig::default();
    if let Some(d) = delta_ang {
        cfg.delta_ang = d;
    }
    if let Some(d) = delta_vel {
        cfg.delta_vel = d;
    }
    if !(cfg.delta_ang > 0.0 && cfg.delta_vel > 0.0) {
        bail!("hysteresis must be positive");
    }
    let mut det = EventDetector::new(cfg);
    println!("kind,t_ms,gc_index,sample_index");
    let mut n = 0;
    for s in &samples {
        if let Some(ev) = det.detect(s) {
            let kind = match ev.kind {
                EventKind::FootContact => "foot_contact",
                EventKind::FootOff => "foot_off",
            };
            println!("{kind},{},{},{}", ev.t_ms, ev.gc_index, ev.sample_index);
            n += 1;
        }
    }
    info!("{n} events in {} samples", samples.len());
    Ok(())
}

fn identify(input: PathBuf) -> Result<()> {
    let fit =
        identify_stiffness_file(&input).with_context(|| format!("reading {}", input.display()))?;
    println!("k_all_n_per_mm {}", fit.k_all);
    println!("intercept_n {}", fit.intercept);
    println!("r_squared {}", fit.r_squared);
    Ok(())
}
