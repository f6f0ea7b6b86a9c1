//! Cooperative calibration across several UEs.
//!
//! Each round the base station broadcasts the global codebook `W⁻`, every UE
//! calibrates locally from it and uploads only the difference
//! `Δ_m = W_m − W⁻`, and the base station fuses `W⁺ = W⁻ + Σ ξ_m Δ_m`
//! followed by per-codeword renormalisation. Gains never leave the UE.

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::array::{ArrayGeometry, CMatrix, Codebook, NormMode};
use crate::calibration::{
    calibrate, update_gamma_closed_form, CalibrationModel, CalibrationState, SolverConfig,
};
use crate::error::{check_dim, CalError, Result};
use crate::scenario::MeasurementSet;

#[derive(Debug, Clone, PartialEq)]
pub struct LocalUpdate {
    pub ue_id: usize,
    /// `N × G`, same layout as the codebook weights.
    pub delta_w: CMatrix,
    pub sample_count: usize,
    pub mean_gain_magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FusionWeights(Vec<f64>);

impl FusionWeights {
    pub fn new(xi: Vec<f64>) -> Result<Self> {
        if xi.is_empty() {
            return Err(CalError::Config("fusion needs at least one weight".into()));
        }
        if xi.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
            return Err(CalError::Config("fusion weights must be finite and non-negative".into()));
        }
        if xi.iter().sum::<f64>() <= 0.0 {
            return Err(CalError::Config("fusion weights must not all be zero".into()));
        }
        Ok(Self(xi))
    }

    pub fn equal(m: usize) -> Result<Self> {
        Self::new(vec![1.0 / m as f64; m])
    }

    /// Weights proportional to each UE's mean gain magnitude, summing to one.
    pub fn gain_proportional(updates: &[LocalUpdate]) -> Result<Self> {
        let total: f64 = updates.iter().map(|u| u.mean_gain_magnitude).sum();
        if !(total > 0.0) {
            return Err(CalError::Numeric("all local gains are zero".into()));
        }
        Self::new(updates.iter().map(|u| u.mean_gain_magnitude / total).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// How fusion weights are chosen each round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum WeightScheme {
    Equal,
    GainProportional,
    Explicit { xi: Vec<f64> },
}

impl WeightScheme {
    pub fn resolve(&self, updates: &[LocalUpdate]) -> Result<FusionWeights> {
        match self {
            Self::Equal => FusionWeights::equal(updates.len()),
            Self::GainProportional => FusionWeights::gain_proportional(updates),
            Self::Explicit { xi } => {
                check_dim("fusion weights vs UEs", updates.len(), xi.len())?;
                FusionWeights::new(xi.clone())
            }
        }
    }
}

/// Calibrates `M4` on local data starting from the broadcast codebook.
pub fn local_delta(
    global: &Codebook,
    local: &MeasurementSet,
    geom: &ArrayGeometry,
    ue_id: usize,
    cfg: &SolverConfig,
) -> Result<LocalUpdate> {
    if local.n_samples() == 0 {
        return Err(CalError::Domain(format!("UE {ue_id} has no measurements")));
    }
    let w0 = global.to_unit_norm();
    let a = geom.steering_matrix(&local.sample_angles);
    let gains = update_gamma_closed_form(&local.observations, w0.weights(), &a)?.gains;
    let init = CalibrationState {
        model: CalibrationModel::M4,
        method: None,
        codebook: w0.clone(),
        gains,
        beamforming_angles: None,
        beta: None,
        data_scale: 1.0,
        loss_trace: Vec::new(),
        converged: false,
    };
    let out = calibrate(local, geom, CalibrationModel::M4, &init, cfg)?;
    let mean_gain = out.gains.iter().map(|g| g.norm()).sum::<f64>() / out.gains.len() as f64;
    Ok(LocalUpdate {
        ue_id,
        delta_w: out.codebook.weights() - w0.weights(),
        sample_count: local.n_samples(),
        mean_gain_magnitude: mean_gain,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionOutcome {
    pub codebook: Codebook,
    /// Codewords that fused to zero and were left at their previous value.
    pub aborted: Vec<usize>,
}

/// `W⁺ = W⁻ + Σ ξ_m Δ_m`, then unit-norm columns.
pub fn fuse(global: &Codebook, updates: &[LocalUpdate], weights: &FusionWeights) -> Result<FusionOutcome> {
    check_dim("fusion weights vs updates", updates.len(), weights.0.len())?;
    let base = global.to_unit_norm().into_weights();
    let mut w = base.clone();
    for (u, &xi) in updates.iter().zip(&weights.0) {
        check_dim("delta rows", base.nrows(), u.delta_w.nrows())?;
        check_dim("delta columns", base.ncols(), u.delta_w.ncols())?;
        w += &u.delta_w * Complex64::new(xi, 0.0);
    }
    let mut aborted = Vec::new();
    for g in 0..w.ncols() {
        let n = w.column(g).norm();
        if n.is_finite() && n > 0.0 {
            w.column_mut(g).unscale_mut(n);
        } else {
            log::warn!("codeword {g} vanished during fusion; keeping the previous value");
            w.set_column(g, &base.column(g));
            aborted.push(g);
        }
    }
    Ok(FusionOutcome {
        codebook: Codebook::new(w, NormMode::PerCodewordUnitNorm)?,
        aborted,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Downlink,
    Uplink,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub round: usize,
    pub ue_id: usize,
    pub direction: Direction,
    pub complex_entries: usize,
}

/// In-process transport log used for overhead accounting.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CommunicationLog {
    pub messages: Vec<Message>,
    /// Entries a centralised scheme would upload once: `G · Σ T_m`.
    pub centralized_entries: usize,
}

impl CommunicationLog {
    pub fn uplink_in_round(&self, round: usize) -> usize {
        self.messages
            .iter()
            .filter(|m| m.round == round && m.direction == Direction::Uplink)
            .map(|m| m.complex_entries)
            .sum()
    }

    pub fn uplink_total(&self) -> usize {
        self.messages
            .iter()
            .filter(|m| m.direction == Direction::Uplink)
            .map(|m| m.complex_entries)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoopConfig {
    /// Local solver; `max_iters` is the number of local iterations between
    /// fusions.
    pub local: SolverConfig,
    pub rounds: usize,
    pub weights: WeightScheme,
}

impl Default for CoopConfig {
    fn default() -> Self {
        let mut local = SolverConfig::gd_rel(0.02);
        local.max_iters = 50;
        local.patience = usize::MAX;
        Self {
            local,
            rounds: 40,
            weights: WeightScheme::Equal,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord<R> {
    pub round: usize,
    pub codebook: Codebook,
    pub weights: FusionWeights,
    pub aborted: Vec<usize>,
    pub uplink_entries: usize,
    /// Whatever the caller's evaluator returned for this round.
    pub metrics: R,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoopHistory<R> {
    pub rounds: Vec<RoundRecord<R>>,
    pub log: CommunicationLog,
}

/// Random disjoint split of `0..total` into the given sizes; indices within
/// each part are sorted.
pub fn random_split(total: usize, sizes: &[usize], seed: u64) -> Result<Vec<Vec<usize>>> {
    if sizes.iter().sum::<usize>() != total {
        return Err(CalError::Config(format!(
            "split sizes {sizes:?} do not add up to {total}"
        )));
    }
    if sizes.contains(&0) {
        return Err(CalError::Config("every UE needs at least one sample".into()));
    }
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = Vec::with_capacity(sizes.len());
    let mut pos = 0;
    for &n in sizes {
        let mut part = order[pos..pos + n].to_vec();
        part.sort_unstable();
        out.push(part);
        pos += n;
    }
    Ok(out)
}

/// Runs `rounds` of broadcast, local calibration and fusion. `evaluate` is
/// called on the fused codebook after every round.
pub fn run_rounds<R>(
    ues: &[MeasurementSet],
    geom: &ArrayGeometry,
    init: &Codebook,
    cfg: &CoopConfig,
    mut evaluate: impl FnMut(usize, &Codebook) -> Result<R>,
) -> Result<CoopHistory<R>> {
    if cfg.rounds == 0 {
        return Err(CalError::Config("at least one round is required".into()));
    }
    if ues.is_empty() {
        return Err(CalError::Config("at least one UE is required".into()));
    }
    let entries = init.n_codewords() * init.n_elements();
    let mut log = CommunicationLog {
        messages: Vec::new(),
        centralized_entries: ues.iter().map(|u| u.n_beams() * u.n_samples()).sum(),
    };
    let mut global = init.to_unit_norm();
    let mut rounds = Vec::with_capacity(cfg.rounds);
    for round in 1..=cfg.rounds {
        for ue in 0..ues.len() {
            log.messages.push(Message {
                round,
                ue_id: ue,
                direction: Direction::Downlink,
                complex_entries: entries,
            });
        }
        // UEs are independent within a round; fusion waits for all of them.
        let updates: Vec<Result<LocalUpdate>> = std::thread::scope(|scope| {
            let handles: Vec<_> = ues
                .iter()
                .enumerate()
                .map(|(m, data)| {
                    let global = &global;
                    let local = local_config(&cfg.local, m, round);
                    scope.spawn(move || local_delta(global, data, geom, m, &local))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("local calibration thread panicked"))
                .collect()
        });
        let updates = updates.into_iter().collect::<Result<Vec<_>>>()?;
        for u in &updates {
            log.messages.push(Message {
                round,
                ue_id: u.ue_id,
                direction: Direction::Uplink,
                complex_entries: u.delta_w.len(),
            });
        }
        let weights = cfg.weights.resolve(&updates)?;
        let fused = fuse(&global, &updates, &weights)?;
        global = fused.codebook;
        let metrics = evaluate(round, &global)?;
        rounds.push(RoundRecord {
            round,
            codebook: global.clone(),
            weights,
            aborted: fused.aborted,
            uplink_entries: log.uplink_in_round(round),
            metrics,
        });
    }
    Ok(CoopHistory { rounds, log })
}

/// Per-UE, per-round mini-batch seed so UEs do not share shuffles.
fn local_config(base: &SolverConfig, ue: usize, round: usize) -> SolverConfig {
    let mut cfg = base.clone();
    cfg.seed = base
        .seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((ue as u64) << 32 | round as u64);
    cfg
}
