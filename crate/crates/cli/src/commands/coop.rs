use std::path::PathBuf;
use std::str::FromStr;

use anyhow::Result;
use beamcal::io::{self, Encoding};
use beamcal::{
    angle_error, gain_loss, initial_state, random_split, run_rounds, CVector, CalError, Codebook, CoopConfig,
    MeasurementSet, WeightScheme,
};
use serde::Serialize;

use super::{load_measurements, Env, Truth};
use crate::output::{csv_string, write_file};

/// Fusion weights as given on the command line.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights(pub WeightScheme);

impl FromStr for Weights {
    type Err = CalError;

    /// `equal`, `gain`, or a list of per-UE coefficients separated by
    /// commas or colons.
    fn from_str(s: &str) -> Result<Self, CalError> {
        match s.trim() {
            "equal" => Ok(Self(WeightScheme::Equal)),
            "gain" | "gain-proportional" => Ok(Self(WeightScheme::GainProportional)),
            list => {
                let xi = list
                    .split([',', ':'])
                    .map(|v| v.trim().parse::<f64>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|_| CalError::Config(format!("bad fusion weights {list:?}")))?;
                Ok(Self(WeightScheme::Explicit { xi }))
            }
        }
    }
}

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Measurement manifest (or one of its payload files).
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Number of UEs.
    #[arg(long, default_value_t = 3)]
    pub ues: usize,
    /// Samples per UE, comma separated. Defaults to an even split.
    #[arg(long, value_delimiter = ',')]
    pub split: Vec<usize>,
    /// equal, gain, or explicit coefficients such as 1,10,10.
    #[arg(long)]
    pub weights: Option<Weights>,
    /// Fusion rounds.
    #[arg(long)]
    pub rounds: Option<usize>,
    /// Local iterations between fusions.
    #[arg(long)]
    pub local_iters: Option<usize>,
    /// Base name of the written files.
    #[arg(long, default_value = "coop")]
    pub name: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RoundRow {
    pub round: usize,
    pub e_a_rms_deg: f64,
    pub e_c_db: f64,
    pub uplink_entries: usize,
    pub cumulative_uplink_entries: usize,
    pub centralized_entries: usize,
    pub weights: String,
    pub aborted_codewords: usize,
}

pub struct CoopRun {
    pub rows: Vec<RoundRow>,
    pub codebook: Codebook,
}

/// Sizes for `ues` parts of `total`, spreading the remainder over the first parts.
pub fn even_split(total: usize, ues: usize) -> Vec<usize> {
    (0..ues).map(|i| total / ues + usize::from(i < total % ues)).collect()
}

/// Splits the data, runs the rounds and scores every fused codebook.
pub fn run_coop(
    meas: &MeasurementSet,
    truth: &Truth,
    sizes: &[usize],
    split_seed: u64,
    cfg: &CoopConfig,
) -> Result<CoopRun> {
    let parts = random_split(meas.n_samples(), sizes, split_seed)?;
    let ues: Vec<MeasurementSet> = parts.iter().map(|ix| meas.subset(ix)).collect();
    let init = initial_state(meas, &truth.geom, &truth.nominal)?;
    let responses: Vec<CVector> = truth.model.responses(&truth.eval)?;
    let a = truth.geom.steering_matrix(truth.eval.angles());
    let proj_true = truth.model.weights.ad_mul(&a);
    let proj_ideal = truth.model.ideal.ad_mul(&a);
    let history = run_rounds(&ues, &truth.geom, &init.codebook, cfg, |_, cb| {
        let ea = angle_error(cb.weights(), &truth.geom, &responses, &truth.eval)?;
        let ec = gain_loss(&cb.weights().ad_mul(&a), &proj_true, &proj_ideal)?;
        Ok((ea.rms_deg, ec.db))
    })?;
    let mut cumulative = 0;
    let rows = history
        .rounds
        .iter()
        .map(|r| {
            cumulative += r.uplink_entries;
            RoundRow {
                round: r.round,
                e_a_rms_deg: r.metrics.0,
                e_c_db: r.metrics.1,
                uplink_entries: r.uplink_entries,
                cumulative_uplink_entries: cumulative,
                centralized_entries: history.log.centralized_entries,
                weights: r.weights.as_slice().iter().map(|w| w.to_string()).collect::<Vec<_>>().join(";"),
                aborted_codewords: r.aborted.len(),
            }
        })
        .collect();
    let codebook = history.rounds.last().map(|r| r.codebook.clone()).expect("at least one round");
    Ok(CoopRun { rows, codebook })
}

pub fn run(env: &Env, args: &Args) -> Result<()> {
    let input = load_measurements(&args.input)?;
    let sc = env.scenario(Some(&input.manifest))?;
    let truth = Truth::new(&sc, &input.meas)?;
    let sizes = if args.split.is_empty() {
        even_split(input.meas.n_samples(), args.ues)
    } else if args.split.len() != args.ues {
        return Err(CalError::Config(format!("--split lists {} sizes for {} UEs", args.split.len(), args.ues)).into());
    } else {
        args.split.clone()
    };
    let mut cfg = env.cfg.coop(env.seed());
    if let Some(w) = &args.weights {
        cfg.weights = w.0.clone();
    }
    if let Some(r) = args.rounds {
        cfg.rounds = r;
    }
    if let Some(i) = args.local_iters {
        cfg.local.max_iters = i;
    }
    let out = run_coop(&input.meas, &truth, &sizes, env.cfg.split_seed(env.seed()), &cfg)?;

    let csv = csv_string(&out.rows)?;
    write_file(&env.out(&format!("{}.csv", args.name)), &csv)?;
    io::save_codebook(
        &env.out(&format!("{}-codebook.json", args.name)),
        &out.codebook,
        Encoding::BinaryLe,
        &env.save_opts(&sc)?,
    )?;
    crate::output::emit(env.json(), &out.rows, || csv)
}
