use anyhow::Result;
use beamcal::io::{self, Encoding};
use beamcal::{generate_measurements, NoiseModel};
use serde::Serialize;

use super::Env;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Drop measurement noise.
    #[arg(long)]
    pub noiseless: bool,
    /// Payload encoding: bin or csv.
    #[arg(long, default_value = "bin")]
    pub encoding: Encoding,
    /// Base name of the measurement artifact.
    #[arg(long, default_value = "measurements")]
    pub name: String,
}

#[derive(Serialize)]
struct Summary {
    measurements: String,
    true_codebook: String,
    samples: usize,
    beams: usize,
    elements: usize,
    seed: u64,
    mean_snr_db: f64,
}

pub fn run(env: &Env, args: &Args) -> Result<()> {
    if args.encoding == Encoding::Json {
        return Err(beamcal::CalError::Config("measurements are stored as bin or csv".into()).into());
    }
    let mut sc = env.scenario(None)?;
    if let Some(s) = env.seed() {
        sc.seed = s;
    }
    if args.noiseless {
        sc.noise = NoiseModel::noiseless();
    }
    let scenario = sc.build()?;
    let meas = generate_measurements(&scenario)?;
    let opts = env.save_opts(&sc)?;
    let meas_path = env.out(&format!("{}.json", args.name));
    io::save_measurements(&meas_path, &meas, args.encoding, &opts)?;
    let cb_path = env.out(&format!("{}-true-codebook.json", args.name));
    io::save_codebook(&cb_path, &scenario.true_codebook, args.encoding, &opts)?;

    let summary = Summary {
        measurements: meas_path.display().to_string(),
        true_codebook: cb_path.display().to_string(),
        samples: meas.n_samples(),
        beams: meas.n_beams(),
        elements: sc.array.n_elements(),
        seed: sc.seed,
        mean_snr_db: super::mean_snr_db(&meas),
    };
    crate::output::emit(env.json(), &summary, || {
        format!(
            "wrote {} (T={}, G={}, N={}, seed {}, mean SNR {:.1} dB)\n",
            summary.measurements, summary.samples, summary.beams, summary.elements, summary.seed, summary.mean_snr_db
        )
    })
}
