use std::path::PathBuf;

use anyhow::Result;
use beamcal::{
    calibrate, detect_oscillation, evaluate, initial_state, CalError, CalibrationModel, CalibrationState,
    MeasurementSet, Method, OscillationTest, ScenarioConfig, SolverConfig, WeightScheme,
};
use serde::Serialize;

use super::coop::{even_split, run_coop, Weights};
use super::{mean_snr_db, measurements_or_synth, Env, Truth};
use crate::config::BatchSize;
use crate::output::{csv_string, write_file};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Axis {
    #[value(name = "learning_rate", alias = "learning-rate", alias = "lr")]
    LearningRate,
    #[value(name = "batch_size", alias = "batch-size", alias = "batch")]
    BatchSize,
    #[value(name = "tx_power", alias = "tx-power", alias = "power")]
    TxPower,
    #[value(name = "weights")]
    Weights,
}

impl Axis {
    fn name(self) -> &'static str {
        match self {
            Self::LearningRate => "learning_rate",
            Self::BatchSize => "batch_size",
            Self::TxPower => "tx_power",
            Self::Weights => "weights",
        }
    }

    fn default_values(self) -> &'static str {
        match self {
            Self::LearningRate => "0.005,0.01,0.02,0.05,0.1",
            Self::BatchSize => "16,32,64,128,full",
            Self::TxPower => "-5,0,5,10,15,20,25,30",
            Self::Weights => "1:1:1,1:10:10,1:100:100,1:0.1:0.1,1:0.01:0.01",
        }
    }
}

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long, value_enum)]
    pub axis: Axis,
    /// Comma-separated points. Weight points list one coefficient per UE
    /// separated by colons, e.g. 1:10:10.
    #[arg(long)]
    pub values: Option<String>,
    /// Measurement manifest. Without it data is synthesised from the scenario;
    /// the power axis always synthesises.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Optimiser for the learning-rate, batch and power axes.
    #[arg(long, default_value = "gd-rel")]
    pub method: Method,
    /// Learning rate when it is not the swept axis.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Mini-batch size or "full".
    #[arg(long)]
    pub batch: Option<BatchSize>,
    /// Iteration cap per point.
    #[arg(long)]
    pub iters: Option<usize>,
    /// UEs for the weights axis.
    #[arg(long, default_value_t = 3)]
    pub ues: usize,
    /// Samples per UE for the weights axis.
    #[arg(long, value_delimiter = ',')]
    pub split: Vec<usize>,
    /// Fusion rounds for the weights axis.
    #[arg(long)]
    pub rounds: Option<usize>,
    /// Base name of the written files.
    #[arg(long, default_value = "sweep")]
    pub name: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub axis: &'static str,
    pub value: String,
    pub method: String,
    pub learning_rate: f64,
    pub batch_size: String,
    pub tx_power_dbm: f64,
    pub mean_snr_db: f64,
    pub iterations: Option<usize>,
    pub final_loss: Option<f64>,
    pub s_r: Option<f64>,
    pub e_a_rms_deg: f64,
    pub e_c_db: f64,
    pub oscillating: Option<bool>,
    pub tail_cv: Option<f64>,
    pub rise_share: Option<f64>,
}

/// Long-format curve: loss per iteration, or E_A per round on the weights axis.
#[derive(Debug, Clone, Serialize)]
pub struct TraceRow {
    pub value: String,
    pub step: usize,
    pub quantity: &'static str,
    pub y: f64,
}

#[derive(Serialize)]
struct Output {
    rows: Vec<SweepRow>,
}

struct Point<'a> {
    axis: Axis,
    value: &'a str,
    sc: &'a ScenarioConfig,
    meas: &'a MeasurementSet,
    truth: &'a Truth,
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| CalError::Config(format!("sweep value {s:?} is not a number")).into())
}

/// Base solver for the calibration axes, with command-line overrides.
fn base_solver(env: &Env, args: &Args, sc: &ScenarioConfig) -> SolverConfig {
    let mut cfg = env.cfg.solver(args.method, sc, env.seed());
    if let Some(v) = args.lr {
        cfg.learning_rate = v;
    }
    if let Some(v) = args.batch {
        cfg.batch_size = v.0;
    }
    if let Some(v) = args.iters {
        cfg.max_iters = v;
    }
    cfg
}

/// Starting state: the ideal codebook, or a response-error fit when the
/// method refines by angle error.
fn start(env: &Env, p: &Point, method: Method) -> Result<CalibrationState> {
    let init = initial_state(p.meas, &p.truth.geom, &p.truth.nominal)?;
    if method != Method::GdAel {
        return Ok(init);
    }
    Ok(calibrate(p.meas, &p.truth.geom, CalibrationModel::M4, &init, &env.cfg.rel(env.seed()))?)
}

fn calibrate_point(
    env: &Env,
    p: &Point,
    cfg: &SolverConfig,
    init: &CalibrationState,
    trace: &mut Vec<TraceRow>,
) -> Result<SweepRow> {
    let state = calibrate(p.meas, &p.truth.geom, CalibrationModel::M4, init, cfg)?;
    let report = evaluate(&state, p.meas, &p.truth.model, &p.truth.eval, env.cfg.similarity())?;
    let osc = detect_oscillation(&state.loss_trace, &OscillationTest::default());
    trace.extend(state.loss_trace.iter().map(|r| TraceRow {
        value: p.value.to_string(),
        step: r.iteration,
        quantity: "loss",
        y: r.value,
    }));
    Ok(SweepRow {
        axis: p.axis.name(),
        value: p.value.to_string(),
        method: cfg.method.to_string(),
        learning_rate: cfg.learning_rate,
        batch_size: BatchSize(cfg.batch_size).to_string(),
        tx_power_dbm: p.sc.tx_power_dbm,
        mean_snr_db: mean_snr_db(p.meas),
        iterations: state.loss_trace.last().map(|r| r.iteration),
        final_loss: state.final_loss(),
        s_r: Some(report.s_r),
        e_a_rms_deg: report.e_a_rms_deg,
        e_c_db: report.e_c_db,
        oscillating: Some(osc.oscillating),
        tail_cv: Some(osc.tail_cv),
        rise_share: Some(osc.rise_share),
    })
}

pub fn run(env: &Env, args: &Args) -> Result<()> {
    let values_text = args.values.as_deref().unwrap_or(args.axis.default_values());
    let values: Vec<&str> = values_text.split(',').map(str::trim).filter(|v| !v.is_empty()).collect();
    if values.is_empty() {
        return Err(CalError::Config("no sweep values given".into()).into());
    }
    let (meas, sc) = measurements_or_synth(env, args.input.as_deref())?;
    let mut rows = Vec::with_capacity(values.len());
    let mut trace = Vec::new();

    match args.axis {
        Axis::LearningRate | Axis::BatchSize => {
            let truth = Truth::new(&sc, &meas)?;
            let base = base_solver(env, args, &sc);
            let probe = Point { axis: args.axis, value: "", sc: &sc, meas: &meas, truth: &truth };
            let init = start(env, &probe, base.method)?;
            for v in &values {
                let mut cfg = base.clone();
                match args.axis {
                    Axis::LearningRate => cfg.learning_rate = parse_f64(v)?,
                    _ => cfg.batch_size = v.parse::<BatchSize>()?.0,
                }
                let p = Point { value: v, ..probe };
                rows.push(calibrate_point(env, &p, &cfg, &init, &mut trace)?);
            }
        }
        Axis::TxPower => {
            // The noise floor stays where the base scenario puts it.
            let noise = sc.build()?.thermal_equivalent()?;
            let base = base_solver(env, args, &sc);
            for v in &values {
                let mut point_sc = sc.clone();
                point_sc.tx_power_dbm = parse_f64(v)?;
                point_sc.noise = noise;
                let meas = beamcal::generate_measurements(&point_sc.build()?)?;
                let truth = Truth::new(&point_sc, &meas)?;
                let p = Point { axis: args.axis, value: v, sc: &point_sc, meas: &meas, truth: &truth };
                let init = start(env, &p, base.method)?;
                rows.push(calibrate_point(env, &p, &base, &init, &mut trace)?);
            }
        }
        Axis::Weights => {
            let truth = Truth::new(&sc, &meas)?;
            let sizes = if args.split.is_empty() { even_split(meas.n_samples(), args.ues) } else { args.split.clone() };
            let mut cfg = env.cfg.coop(env.seed());
            if let Some(r) = args.rounds {
                cfg.rounds = r;
            }
            for v in &values {
                let WeightScheme::Explicit { xi } = v.parse::<Weights>()?.0 else {
                    return Err(CalError::Config(format!("weight point {v:?} must list coefficients")).into());
                };
                let total: f64 = xi.iter().sum();
                if !(total > 0.0) {
                    return Err(CalError::Config(format!("weight point {v:?} sums to {total}")).into());
                }
                cfg.weights = WeightScheme::Explicit { xi: xi.iter().map(|x| x / total).collect() };
                let out = run_coop(&meas, &truth, &sizes, env.cfg.split_seed(env.seed()), &cfg)?;
                trace.extend(out.rows.iter().map(|r| TraceRow {
                    value: v.to_string(),
                    step: r.round,
                    quantity: "e_a_rms_deg",
                    y: r.e_a_rms_deg,
                }));
                let last = out.rows.last().expect("at least one round");
                rows.push(SweepRow {
                    axis: args.axis.name(),
                    value: v.to_string(),
                    method: cfg.local.method.to_string(),
                    learning_rate: cfg.local.learning_rate,
                    batch_size: BatchSize(cfg.local.batch_size).to_string(),
                    tx_power_dbm: sc.tx_power_dbm,
                    mean_snr_db: mean_snr_db(&meas),
                    iterations: None,
                    final_loss: None,
                    s_r: None,
                    e_a_rms_deg: last.e_a_rms_deg,
                    e_c_db: last.e_c_db,
                    oscillating: None,
                    tail_cv: None,
                    rise_share: None,
                });
            }
        }
    }

    let csv = csv_string(&rows)?;
    write_file(&env.out(&format!("{}.csv", args.name)), &csv)?;
    write_file(&env.out(&format!("{}-trace.csv", args.name)), &csv_string(&trace)?)?;
    crate::output::emit(env.json(), &Output { rows }, || csv)
}
