use std::hint::black_box;

use beamcal::calibration::{
    ael_gradients, rel_gradient_w, rel_loss, resolve_anchors, update_gamma_closed_form, update_w_trust_region,
};
use beamcal::estimation::pseudo_true;
use beamcal::io::binary;
use beamcal::{
    calibrate, generate_measurements, initial_state, CMatrix, CalibrationModel, CalibrationState, MeasurementSet,
    Scenario, ScenarioConfig, SolverConfig,
};
use criterion::{criterion_group, criterion_main, Criterion};

struct Fixture {
    cfg: ScenarioConfig,
    scenario: Scenario,
    meas: MeasurementSet,
    a: CMatrix,
    init: CalibrationState,
}

fn fixture() -> Fixture {
    let cfg = ScenarioConfig::preset("2d-table2").unwrap();
    let scenario = cfg.build().unwrap();
    let meas = generate_measurements(&scenario).unwrap();
    let a = scenario.geom.steering_matrix(&meas.sample_angles);
    let init = initial_state(&meas, &scenario.geom, &scenario.nominal_angles).unwrap();
    Fixture { cfg, scenario, meas, a, init }
}

fn losses(c: &mut Criterion) {
    let f = fixture();
    let w = f.init.codebook.weights();
    let y = &f.meas.observations;
    let g = &f.init.gains;
    let batch: Vec<usize> = (0..64).collect();
    let anchors = resolve_anchors(&f.meas.sample_angles, &f.cfg.evaluation.anchor_spec()).unwrap();

    c.bench_function("steering_matrix_16x561", |b| {
        b.iter(|| f.scenario.geom.steering_matrix(black_box(&f.meas.sample_angles)))
    });
    c.bench_function("rel_loss", |b| b.iter(|| rel_loss(y, black_box(w), g, &f.a).unwrap()));
    c.bench_function("rel_gradient_w_batch64", |b| {
        b.iter(|| rel_gradient_w(y, black_box(w), g, &f.a, &batch).unwrap())
    });
    c.bench_function("gamma_closed_form", |b| {
        b.iter(|| update_gamma_closed_form(y, black_box(w), &f.a).unwrap())
    });
    c.bench_function("trust_region_codebook", |b| {
        b.iter(|| update_w_trust_region(y, black_box(g), &f.a, w).unwrap())
    });
    c.bench_function("ael_gradients_full", |b| {
        b.iter(|| ael_gradients(y, black_box(w), g, &f.a, &anchors).unwrap())
    });
}

fn estimation(c: &mut Criterion) {
    let f = fixture();
    let truth = f.cfg.truth_model().unwrap();
    let eval = f.cfg.evaluation.angle_set().unwrap();
    let responses = truth.responses(&eval).unwrap();
    let s = eval.len() / 3;
    c.bench_function("pseudo_true_one_angle", |b| {
        b.iter(|| {
            pseudo_true(black_box(&responses[s]), f.init.codebook.weights(), &f.scenario.geom, &eval.angles()[s])
                .unwrap()
        })
    });
}

fn solvers(c: &mut Criterion) {
    let f = fixture();
    let mut g = c.benchmark_group("calibrate_2d");
    g.sample_size(10);
    let mut rel = SolverConfig::gd_rel(0.02);
    rel.max_iters = 100;
    g.bench_function("gd_rel_100_iters", |b| {
        b.iter(|| calibrate(&f.meas, &f.scenario.geom, CalibrationModel::M4, &f.init, &rel).unwrap())
    });
    let mut ao = SolverConfig::ao();
    ao.max_iters = 20;
    g.bench_function("ao_20_iters", |b| {
        b.iter(|| calibrate(&f.meas, &f.scenario.geom, CalibrationModel::M4, &f.init, &ao).unwrap())
    });
    g.finish();
}

fn persistence(c: &mut Criterion) {
    let f = fixture();
    let bytes = binary::encode_measurements(&f.meas);
    c.bench_function("binary_encode_measurements", |b| {
        b.iter(|| binary::encode_measurements(black_box(&f.meas)))
    });
    c.bench_function("binary_decode_measurements", |b| {
        b.iter(|| binary::decode_measurements(black_box(&bytes)).unwrap())
    });
}

criterion_group!(benches, losses, estimation, solvers, persistence);
criterion_main!(benches);
