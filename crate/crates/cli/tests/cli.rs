use std::fmt::Write as _;
use std::path::Path;
use std::process::{Command, Output};

fn shankassist(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shankassist"))
        .args(args)
        .output()
        .expect("spawn shankassist")
}

fn stdout(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn run_to(dir: &Path, extra: &[&str]) -> String {
    let mut args = vec![
        "run",
        "--activity",
        "lw",
        "--scenario",
        "steady",
        "--strides",
        "20",
        "--seed",
        "3",
        "--amp",
        "0.15",
        "--bw-n",
        "700",
        "--out",
        dir.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    stdout(&shankassist(&args))
}

#[test]
fn run_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let text = run_to(dir.path(), &[]);
    assert!(text.contains("amp 105.0 N"), "{text}");
    assert!(text.contains("convergence stride"));

    let ts = std::fs::read_to_string(dir.path().join("timeseries.csv")).unwrap();
    assert_eq!(
        ts.lines().next().unwrap(),
        "t_ms,stride,mode,theta_sk_deg,theta_ft_deg,theta_df_deg,f_des_n,f_meas_n,f_truth_n,l_cable_mm,v_cmd_mm_s,belt_scale,perturbed"
    );
    let summary = std::fs::read_to_string(dir.path().join("summary.json")).unwrap();
    assert!(summary.contains("\"strides\""));
    assert!(summary.contains("\"aggregates\""));
}

#[test]
fn repeated_runs_write_identical_summaries() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_to(a.path(), &[]);
    run_to(b.path(), &[]);
    let ja = std::fs::read(a.path().join("summary.json")).unwrap();
    let jb = std::fs::read(b.path().join("summary.json")).unwrap();
    assert_eq!(ja, jb);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("scenario.toml");
    std::fs::write(
        &cfg,
        "activity = \"ra\"\nn_strides = 12\namp_fraction = 0.2\n",
    )
    .unwrap();
    let out = stdout(&shankassist(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--strides",
        "8",
    ]));
    assert!(out.contains("activity ra"), "{out}");
    assert!(out.contains("strides 8 "), "{out}");
    // 0.2 of the default 735.75 N body weight.
    assert!(out.contains("amp 147.2 N"), "{out}");
}

#[test]
fn rejects_unknown_activity() {
    let out = shankassist(&["run", "--activity", "jog"]);
    assert!(!out.status.success());
}

#[test]
fn rejects_unknown_config_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "stride_count = 4\n").unwrap();
    let out = shankassist(&["run", "--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
}

#[test]
fn detect_reports_extrema_times() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("kin.csv");
    // Foot pitch 20 sin(pi t) at 100 Hz: maxima at 500 ms + 2k s, rate minima at 1000 ms + 2k s.
    let mut csv =
        String::from("t_ms,theta_ft_deg,theta_sk_deg,theta_ft_rate_dps,theta_sk_rate_dps\n");
    let w = std::f64::consts::PI;
    for i in 0..600 {
        let t = i as f64 * 0.01;
        writeln!(
            csv,
            "{},{},0,{},0",
            i * 10,
            20.0 * (w * t).sin(),
            20.0 * w * (w * t).cos()
        )
        .unwrap();
    }
    std::fs::write(&path, csv).unwrap();

    let text = stdout(&shankassist(&["detect", path.to_str().unwrap()]));
    let rows: Vec<Vec<&str>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').collect())
        .collect();
    let got: Vec<(&str, f64)> = rows.iter().map(|r| (r[0], r[1].parse().unwrap())).collect();
    assert_eq!(
        got,
        vec![
            ("foot_contact", 500.0),
            ("foot_off", 1000.0),
            ("foot_contact", 2500.0),
            ("foot_off", 3000.0),
            ("foot_contact", 4500.0),
            ("foot_off", 5000.0),
        ]
    );
}

#[test]
fn identify_recovers_stiffness() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cal.csv");
    let mut csv = String::from("force_n,deflection_mm\n");
    for i in 0..=35 {
        let f = 5.0 + 5.0 * i as f64;
        writeln!(csv, "{f},{}", f / 12.5 + 1.0).unwrap();
    }
    std::fs::write(&path, csv).unwrap();

    let text = stdout(&shankassist(&["identify", path.to_str().unwrap()]));
    let k: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("k_all_n_per_mm "))
        .unwrap()
        .parse()
        .unwrap();
    assert!((k - 12.5).abs() < 1e-9, "{text}");
    let b: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("intercept_n "))
        .unwrap()
        .parse()
        .unwrap();
    assert!((b + 12.5).abs() < 1e-9, "{text}");
}

#[test]
fn identify_rejects_narrow_calibration() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cal.csv");
    let mut csv = String::from("force_n,deflection_mm\n");
    for i in 0..20 {
        writeln!(csv, "{},{}", 10.0 + i as f64, i as f64 * 0.08).unwrap();
    }
    std::fs::write(&path, csv).unwrap();
    let out = shankassist(&["identify", path.to_str().unwrap()]);
    assert!(!out.status.success());
}
