use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use shankassist::controller::TickInput;
use shankassist::plant::{Activity, GaitTemplate};
use shankassist::{
    Controller, ControllerConfig, GaussianParams, Scenario, ScenarioConfig, TendonModel,
};

fn profile(c: &mut Criterion) {
    let p = GaussianParams::new(110.0, 20.0, 10.0, 4.0, -20.0, 35.0).unwrap();
    c.bench_function("force_and_rate", |b| {
        b.iter(|| {
            let mut acc = 0.0;
            for i in 0..100 {
                let th = -20.0 + 0.55 * i as f64;
                acc += p.force(black_box(th)) + p.force_rate(black_box(th), 90.0);
            }
            acc
        })
    });
}

fn controller_tick(c: &mut Criterion) {
    let tmpl = GaitTemplate::for_activity(Activity::Lw);
    let kin = tmpl.gen_frame(0.0, 0.3, 1.0);
    let p = GaussianParams::new(110.0, 20.0, 10.0, 4.0, -20.0, 35.0).unwrap();
    let tendon = TendonModel::new(100.0, 12.5, 300.0).unwrap();
    let mut ctl = Controller::new(ControllerConfig::default(), tendon, Some(p)).unwrap();
    ctl.start_assisted(300.0, true);
    let input = TickInput {
        kin,
        kin_ff: None,
        f_meas: 40.0,
        l_meas: 300.0,
        l_meas_rate: 0.0,
        motor_pos: 0.0,
    };
    c.bench_function("controller_tick", |b| {
        b.iter(|| ctl.tick(black_box(&input), 1e-3))
    });
}

fn scenario(c: &mut Criterion) {
    let cfg = ScenarioConfig::new(Activity::Lw, Scenario::Steady, 20, 1);
    let mut g = c.benchmark_group("scenario");
    g.sample_size(10);
    g.bench_function("lw_steady_20_strides", |b| {
        b.iter(|| shankassist::harness::simulate(black_box(&cfg)).unwrap())
    });
    g.finish();
}

criterion_group!(benches, profile, controller_tick, scenario);
criterion_main!(benches);
