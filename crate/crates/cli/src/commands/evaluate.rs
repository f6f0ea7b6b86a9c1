use std::path::PathBuf;

use anyhow::Result;
use beamcal::io;
use beamcal::metrics::AngleErrorReport;
use beamcal::{
    angle_error, calibrate, calibrate_rel_then_ael, evaluate, initial_state, CalibrationModel, CalibrationState,
    MeasurementSet, MetricReport, SimilarityMode, REPORT_CSV_HEADER,
};
use serde::Serialize;

use super::{load_measurements, Env, Truth};
use crate::output::write_file;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Metric {
    /// One row per model with S_R, E_A and E_C.
    Table,
    /// Pseudo-true angle bias per evaluation angle.
    AngleBias,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Similarity {
    Magnitude,
    Complex,
}

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Measurement manifest (or one of its payload files).
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Calibration states to score. Without any, every model is fitted and scored.
    #[arg(long = "state")]
    pub states: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "table")]
    pub metric: Metric,
    /// Overrides the similarity mode from the config file.
    #[arg(long, value_enum)]
    pub similarity: Option<Similarity>,
    /// Base name of the written table.
    #[arg(long, default_value = "table")]
    pub name: String,
}

/// Fits every model the way the results table reports them.
pub fn fit_all(env: &Env, sc: &beamcal::ScenarioConfig, truth: &Truth, meas: &MeasurementSet) -> Result<Vec<CalibrationState>> {
    let seed = env.seed();
    let init = initial_state(meas, &truth.geom, &truth.nominal)?;
    let ao = env.cfg.ao(seed);
    let m2 = calibrate(meas, &truth.geom, CalibrationModel::M2, &init, &ao)?;
    let m3 = calibrate(meas, &truth.geom, CalibrationModel::M3, &init, &ao)?;
    let m4_ao = calibrate(meas, &truth.geom, CalibrationModel::M4, &init, &ao)?;
    let (rel, ael) = calibrate_rel_then_ael(meas, &truth.geom, &init, &env.cfg.rel(seed), &env.cfg.ael(sc, seed))?;
    Ok(vec![init, m2, m3, m4_ao, rel, ael])
}

#[derive(Serialize)]
struct AngleBias {
    label: String,
    #[serde(flatten)]
    report: AngleErrorReport,
}

pub fn run(env: &Env, args: &Args) -> Result<()> {
    let input = load_measurements(&args.input)?;
    let sc = env.scenario(Some(&input.manifest))?;
    let truth = Truth::new(&sc, &input.meas)?;
    let states = if args.states.is_empty() {
        fit_all(env, &sc, &truth, &input.meas)?
    } else {
        args.states
            .iter()
            .map(|p| io::load_state(&io::resolve(p)))
            .collect::<beamcal::Result<Vec<_>>>()?
    };
    let opts = env.save_opts(&sc)?;

    match args.metric {
        Metric::Table => {
            let mode = match args.similarity {
                Some(Similarity::Magnitude) => SimilarityMode::Magnitude,
                Some(Similarity::Complex) => SimilarityMode::Complex,
                None => env.cfg.similarity(),
            };
            let reports = states
                .iter()
                .map(|s| evaluate(s, &input.meas, &truth.model, &truth.eval, mode))
                .collect::<beamcal::Result<Vec<MetricReport>>>()?;
            let csv = table_csv(&reports);
            write_file(&env.out(&format!("{}.csv", args.name)), &csv)?;
            io::save_reports(&env.out(&format!("{}.json", args.name)), &reports, &opts)?;
            crate::output::emit(env.json(), &reports, || csv)
        }
        Metric::AngleBias => {
            let responses = truth.model.responses(&truth.eval)?;
            let rows = states
                .iter()
                .map(|s| {
                    let report = angle_error(s.codebook.weights(), &truth.geom, &responses, &truth.eval)?;
                    Ok(AngleBias { label: label(s), report })
                })
                .collect::<beamcal::Result<Vec<_>>>()?;
            let mut csv = String::from("az_deg,el_deg");
            for r in &rows {
                csv.push(',');
                csv.push_str(&r.label);
            }
            csv.push('\n');
            for (s, dir) in truth.eval.angles().iter().enumerate() {
                csv.push_str(&format!("{},{}", dir.azimuth_deg(), dir.elevation_deg()));
                for r in &rows {
                    csv.push_str(&format!(",{}", r.report.per_angle_deg[s]));
                }
                csv.push('\n');
            }
            write_file(&env.out(&format!("{}-angle-bias.csv", args.name)), &csv)?;
            crate::output::emit(env.json(), &rows, || csv)
        }
    }
}

pub fn label(s: &CalibrationState) -> String {
    match s.method {
        Some(m) => format!("{}-{}", s.model, m),
        None => s.model.to_string(),
    }
}

pub fn table_csv(reports: &[MetricReport]) -> String {
    let mut csv = format!("{REPORT_CSV_HEADER}\n");
    for r in reports {
        csv.push_str(&r.csv_row());
        csv.push('\n');
    }
    csv
}
