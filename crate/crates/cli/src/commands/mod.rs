pub mod calibrate;
pub mod coop;
pub mod evaluate;
pub mod report;
pub mod sweep;
pub mod synth;

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use beamcal::io;
use beamcal::{
    ArrayGeometry, BeamformingAngles, CalError, EvaluationAngleSet, Manifest, MeasurementSet, SaveOptions,
    ScenarioConfig, TruthModel,
};

use crate::config::RunConfig;
use crate::{Cli, Command};

pub fn run(cli: &Cli) -> Result<()> {
    let env = Env::new(cli)?;
    match &cli.command {
        Command::Synth(a) => synth::run(&env, a),
        Command::Calibrate(a) => calibrate::run(&env, a),
        Command::Evaluate(a) => evaluate::run(&env, a),
        Command::Coop(a) => coop::run(&env, a),
        Command::Sweep(a) => sweep::run(&env, a),
        Command::Report(a) => report::run(&env, a),
    }
}

/// Settings shared by every subcommand.
pub struct Env<'a> {
    pub cli: &'a Cli,
    pub cfg: RunConfig,
    pub out_dir: PathBuf,
}

impl<'a> Env<'a> {
    fn new(cli: &'a Cli) -> Result<Self> {
        let cfg = match &cli.config {
            Some(p) => RunConfig::load(&io::resolve(p))?,
            None => RunConfig::default(),
        };
        let out_dir = match &cli.out_dir {
            Some(d) => d.clone(),
            None => io::data_dir().unwrap_or_else(|| PathBuf::from(".")),
        };
        Ok(Self { cli, cfg, out_dir })
    }

    pub fn seed(&self) -> Option<u64> {
        self.cli.seed
    }

    pub fn json(&self) -> bool {
        self.cli.json
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    /// An explicit output path, or `default` inside the output directory.
    pub fn out_or(&self, explicit: Option<&Path>, default: &str) -> PathBuf {
        match explicit {
            Some(p) => io::resolve(p),
            None => self.out(default),
        }
    }

    pub fn scenario(&self, embedded: Option<&Manifest>) -> Result<ScenarioConfig> {
        self.cfg.scenario(self.cli.preset.as_deref(), embedded)
    }

    /// Manifest options echoing the resolved configuration.
    pub fn save_opts(&self, scenario: &ScenarioConfig) -> Result<SaveOptions> {
        Ok(SaveOptions {
            seed: Some(self.seed().unwrap_or(scenario.seed)),
            config: Some(self.cfg.resolved(scenario, self.seed()).to_toml()?),
        })
    }
}

/// Accepts a manifest or one of its payload files.
pub fn manifest_path(path: &Path) -> PathBuf {
    let p = io::resolve(path);
    if p.extension().is_some_and(|e| e == "json") {
        return p;
    }
    let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default();
    let stem = name.split('.').next().unwrap_or(name);
    p.with_file_name(format!("{stem}.json"))
}

pub struct Input {
    pub meas: MeasurementSet,
    pub manifest: Manifest,
}

pub fn load_measurements(path: &Path) -> Result<Input> {
    let path = manifest_path(path);
    let ctx = || format!("loading measurements from {}", path.display());
    let manifest = Manifest::read(&path).with_context(ctx)?;
    let meas = io::load_measurements(&path).with_context(ctx)?;
    Ok(Input { meas, manifest })
}

/// Measurements from `--in`, or freshly synthesised from the scenario.
pub fn measurements_or_synth(env: &Env, input: Option<&Path>) -> Result<(MeasurementSet, ScenarioConfig)> {
    match input {
        Some(p) => {
            let inp = load_measurements(p)?;
            let sc = env.scenario(Some(&inp.manifest))?;
            Ok((inp.meas, sc))
        }
        None => {
            let mut sc = env.scenario(None)?;
            if let Some(s) = env.seed() {
                sc.seed = s;
            }
            let meas = beamcal::generate_measurements(&sc.build()?)?;
            Ok((meas, sc))
        }
    }
}

/// Everything needed to score a codebook for one scenario.
pub struct Truth {
    pub geom: ArrayGeometry,
    pub nominal: BeamformingAngles,
    pub model: TruthModel,
    pub eval: EvaluationAngleSet,
}

impl Truth {
    pub fn new(sc: &ScenarioConfig, meas: &MeasurementSet) -> Result<Self> {
        sc.validate()?;
        let nominal = sc.nominal_angles()?;
        if nominal.len() != meas.n_beams() {
            return Err(CalError::Config(format!(
                "scenario has {} beams but the measurements have {}",
                nominal.len(),
                meas.n_beams()
            ))
            .into());
        }
        Ok(Self {
            geom: sc.array,
            nominal,
            model: sc.truth_model()?,
            eval: sc.evaluation.angle_set()?,
        })
    }
}

/// Mean of the per-sample linear SNRs, in dB; infinite when noise-free.
pub fn mean_snr_db(meas: &MeasurementSet) -> f64 {
    let finite: Vec<f64> = meas.snr_db.iter().copied().filter(|s| s.is_finite()).collect();
    if finite.is_empty() {
        return f64::INFINITY;
    }
    let lin = finite.iter().map(|s| 10f64.powf(s / 10.0)).sum::<f64>() / finite.len() as f64;
    10.0 * lin.log10()
}
