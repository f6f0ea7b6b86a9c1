use std::path::PathBuf;

use anyhow::Result;
use beamcal::io;
use beamcal::{
    calibrate, detect_oscillation, initial_state, CalibrationModel, CalibrationState, Method, OscillationReport,
    OscillationTest,
};
use serde::Serialize;

use super::{load_measurements, Env, Truth};
use crate::config::BatchSize;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Measurement manifest (or one of its payload files).
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Calibration model: m1, m2, m3 or m4.
    #[arg(long, default_value = "m4")]
    pub model: CalibrationModel,
    /// Optimiser for m4: ao, gd-rel or gd-ael.
    #[arg(long, default_value = "gd-ael")]
    pub method: Method,
    /// Starting state. Without it the ideal codebook is used, and gd-ael
    /// first runs gd-rel.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Output state manifest. Defaults to state-<model>[-<method>].json.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Learning rate for the gradient methods.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Mini-batch size or "full".
    #[arg(long)]
    pub batch: Option<BatchSize>,
    /// Iteration cap.
    #[arg(long)]
    pub iters: Option<usize>,
}

#[derive(Serialize)]
pub struct Summary {
    pub state: String,
    pub model: CalibrationModel,
    pub method: Option<Method>,
    pub iterations: usize,
    pub final_loss: Option<f64>,
    pub converged: bool,
    pub oscillation: OscillationReport,
}

pub fn run(env: &Env, args: &Args) -> Result<()> {
    let input = load_measurements(&args.input)?;
    let sc = env.scenario(Some(&input.manifest))?;
    let truth = Truth::new(&sc, &input.meas)?;
    let meas = &input.meas;

    let mut cfg = match args.model {
        CalibrationModel::M4 => env.cfg.solver(args.method, &sc, env.seed()),
        _ => env.cfg.ao(env.seed()),
    };
    if let Some(v) = args.lr {
        cfg.learning_rate = v;
    }
    if let Some(v) = args.batch {
        cfg.batch_size = v.0;
    }
    if let Some(v) = args.iters {
        cfg.max_iters = v;
    }

    let seeded = args.init.as_deref().map(|p| io::load_state(&io::resolve(p))).transpose()?;
    let state: CalibrationState = match (args.model, seeded) {
        (CalibrationModel::M1, _) => initial_state(meas, &truth.geom, &truth.nominal)?,
        (model, Some(init)) => calibrate(meas, &truth.geom, model, &init, &cfg)?,
        (CalibrationModel::M4, None) if args.method == Method::GdAel => {
            let init = initial_state(meas, &truth.geom, &truth.nominal)?;
            let rel = calibrate(meas, &truth.geom, CalibrationModel::M4, &init, &env.cfg.rel(env.seed()))?;
            calibrate(meas, &truth.geom, CalibrationModel::M4, &rel, &cfg)?
        }
        (model, None) => {
            let init = initial_state(meas, &truth.geom, &truth.nominal)?;
            calibrate(meas, &truth.geom, model, &init, &cfg)?
        }
    };

    let label = match (state.model, state.method) {
        (CalibrationModel::M4, Some(m)) => format!("state-m4-{m}"),
        (model, _) => format!("state-{}", model.to_string().to_lowercase()),
    };
    let path = env.out_or(args.out.as_deref(), &format!("{label}.json"));
    io::save_state(&path, &state, &env.save_opts(&sc)?)?;

    let summary = Summary {
        state: path.display().to_string(),
        model: state.model,
        method: state.method,
        iterations: state.loss_trace.last().map_or(0, |r| r.iteration),
        final_loss: state.final_loss(),
        converged: state.converged,
        oscillation: detect_oscillation(&state.loss_trace, &OscillationTest::default()),
    };
    crate::output::emit(env.json(), &summary, || {
        format!(
            "{} {}: {} iterations, final loss {:.6e}{}{}\nwrote {}\n",
            summary.model,
            summary.method.map(|m| m.to_string()).unwrap_or_default(),
            summary.iterations,
            summary.final_loss.unwrap_or(f64::NAN),
            if summary.converged { ", converged" } else { "" },
            if summary.oscillation.oscillating { ", loss oscillating" } else { "" },
            summary.state
        )
    })
}
