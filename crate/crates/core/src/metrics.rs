//! Calibration quality: response similarity, pseudo-true angle bias and
//! best-beam gain loss.

use serde::{Deserialize, Serialize};

use crate::array::{element_pattern, AngleDirection, ArrayGeometry, CMatrix, CVector};
use crate::calibration::{CalibrationModel, CalibrationState, Method};
use crate::error::{check_dim, CalError, Result};
use crate::estimation::{pseudo_true_with, PseudoTrueConfig};
use crate::scenario::MeasurementSet;

/// Evaluation directions `ϑ_s` with non-negative weights `ρ_s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationAngleSet {
    angles: Vec<AngleDirection>,
    weights: Vec<f64>,
}

impl EvaluationAngleSet {
    pub fn new(angles: Vec<AngleDirection>, weights: Option<Vec<f64>>) -> Result<Self> {
        if angles.is_empty() {
            return Err(CalError::Domain("evaluation set needs at least one angle".into()));
        }
        let weights = weights.unwrap_or_else(|| vec![1.0; angles.len()]);
        check_dim("evaluation weights", angles.len(), weights.len())?;
        if weights.iter().any(|&w| !(w >= 0.0)) || weights.iter().sum::<f64>() <= 0.0 {
            return Err(CalError::Domain("evaluation weights must be >= 0 with a positive sum".into()));
        }
        Ok(Self { angles, weights })
    }

    pub fn angles(&self) -> &[AngleDirection] {
        &self.angles
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    /// Short description such as `S=81 az[-40..40] el[0..0]`.
    pub fn descriptor(&self) -> String {
        let (mut az_lo, mut az_hi, mut el_lo, mut el_hi) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for a in &self.angles {
            az_lo = az_lo.min(a.azimuth_deg());
            az_hi = az_hi.max(a.azimuth_deg());
            el_lo = el_lo.min(a.elevation_deg());
            el_hi = el_hi.max(a.elevation_deg());
        }
        format!(
            "S={} az[{:.0}..{:.0}] el[{:.0}..{:.0}]",
            self.len(),
            az_lo,
            az_hi,
            el_lo,
            el_hi
        )
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityMode {
    /// Compare entry-wise magnitudes (power patterns).
    #[default]
    Magnitude,
    /// Compare complex responses, phase included.
    Complex,
}

/// `S_R = 1 − ½‖B̂/‖B̂‖_F − B̄/‖B̄‖_F‖_F`.
pub fn response_similarity(b_hat: &CMatrix, b_bar: &CMatrix, mode: SimilarityMode) -> Result<f64> {
    check_dim("similarity rows", b_bar.nrows(), b_hat.nrows())?;
    check_dim("similarity columns", b_bar.ncols(), b_hat.ncols())?;
    let (nh, nb) = (b_hat.norm(), b_bar.norm());
    if !(nh > 0.0) || !(nb > 0.0) {
        return Err(CalError::Domain("response similarity needs nonzero patterns".into()));
    }
    let dist_sq: f64 = match mode {
        SimilarityMode::Magnitude => b_hat
            .iter()
            .zip(b_bar.iter())
            .map(|(h, b)| (h.norm() / nh - b.norm() / nb).powi(2))
            .sum(),
        SimilarityMode::Complex => b_hat
            .iter()
            .zip(b_bar.iter())
            .map(|(h, b)| (h / nh - b / nb).norm_sqr())
            .sum(),
    };
    Ok((1.0 - 0.5 * dist_sq.sqrt()).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleErrorReport {
    /// Weighted mean of squared bias, degrees².
    pub mean_sq_deg2: f64,
    pub rms_deg: f64,
    /// Bias per evaluation angle, degrees.
    pub per_angle_deg: Vec<f64>,
}

/// Pseudo-true angle bias of a model codebook against noise-free truth
/// responses, one per evaluation angle.
pub fn angle_error(
    model_weights: &CMatrix,
    geom: &ArrayGeometry,
    truth: &[CVector],
    eval: &EvaluationAngleSet,
) -> Result<AngleErrorReport> {
    angle_error_with(model_weights, geom, truth, eval, &PseudoTrueConfig::default())
}

pub fn angle_error_with(
    model_weights: &CMatrix,
    geom: &ArrayGeometry,
    truth: &[CVector],
    eval: &EvaluationAngleSet,
    cfg: &PseudoTrueConfig,
) -> Result<AngleErrorReport> {
    check_dim("truth responses vs evaluation angles", eval.len(), truth.len())?;
    let mut per_angle = Vec::with_capacity(eval.len());
    let mut acc = 0.0;
    for (s, (dir, b)) in eval.angles.iter().zip(truth).enumerate() {
        let est = pseudo_true_with(b, model_weights, geom, dir, cfg).map_err(|e| {
            CalError::AngleFailure {
                index: s,
                source: Box::new(e),
            }
        })?;
        let sq = est.angle.sq_dist_deg(dir);
        acc += eval.weights[s] * sq;
        per_angle.push(sq.sqrt());
    }
    let mean = acc / eval.weights.iter().sum::<f64>();
    Ok(AngleErrorReport {
        mean_sq_deg2: mean,
        rms_deg: mean.sqrt(),
        per_angle_deg: per_angle,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainLossReport {
    pub db: f64,
    /// Angles skipped because the ideal best-beam gain was zero.
    pub excluded: usize,
}

fn argmax_abs(col: nalgebra::DVectorView<'_, num_complex::Complex64>) -> usize {
    // Strict comparison keeps the lowest index on ties.
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (g, z) in col.iter().enumerate() {
        let v = z.norm();
        if v > best_v {
            best_v = v;
            best = g;
        }
    }
    best
}

/// Mean over `s` of `|b̄_{ĝ*}(ϑ_s)|² / |b̃_{g̃*}(ϑ_s)|²` in dB, where `ĝ*`
/// is the best beam under the calibrated pattern and `g̃*` the best beam under
/// the ideal pattern. All inputs are `G × S`; `truth` and `ideal` hold the
/// true and ideal codebook projections `wᴴa(ϑ_s)`.
pub fn gain_loss(calibrated: &CMatrix, truth: &CMatrix, ideal: &CMatrix) -> Result<GainLossReport> {
    check_dim("gain loss truth rows", calibrated.nrows(), truth.nrows())?;
    check_dim("gain loss ideal rows", calibrated.nrows(), ideal.nrows())?;
    check_dim("gain loss truth columns", calibrated.ncols(), truth.ncols())?;
    check_dim("gain loss ideal columns", calibrated.ncols(), ideal.ncols())?;
    let mut acc = 0.0;
    let mut used = 0usize;
    let mut excluded = 0usize;
    for s in 0..calibrated.ncols() {
        let g_hat = argmax_abs(calibrated.column(s));
        let g_ideal = argmax_abs(ideal.column(s));
        let den = ideal[(g_ideal, s)].norm_sqr();
        if den == 0.0 {
            excluded += 1;
            continue;
        }
        acc += truth[(g_hat, s)].norm_sqr() / den;
        used += 1;
    }
    if used == 0 {
        return Err(CalError::Domain("every evaluation angle has a zero ideal gain".into()));
    }
    if excluded > 0 {
        log::warn!("gain loss skipped {excluded} angles with zero ideal gain");
    }
    Ok(GainLossReport {
        db: 10.0 * (acc / used as f64).log10(),
        excluded,
    })
}

/// Ground truth for synthetic evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthModel {
    pub geom: ArrayGeometry,
    /// True codebook, `N × G`.
    pub weights: CMatrix,
    pub element_beta: f64,
    /// Unit-norm ideal codebook, `N × G`.
    pub ideal: CMatrix,
}

impl TruthModel {
    pub fn new(geom: ArrayGeometry, weights: CMatrix, element_beta: f64, ideal: CMatrix) -> Result<Self> {
        check_dim("truth codebook elements", geom.n_elements(), weights.nrows())?;
        check_dim("ideal codebook elements", geom.n_elements(), ideal.nrows())?;
        check_dim("ideal codebook beams", weights.ncols(), ideal.ncols())?;
        Ok(Self {
            geom,
            weights,
            element_beta,
            ideal,
        })
    }

    /// `g(ϑ) W̄ᴴ a(ϑ)` for every evaluation angle, as columns.
    pub fn responses(&self, eval: &EvaluationAngleSet) -> Result<Vec<CVector>> {
        eval.angles
            .iter()
            .map(|d| {
                let g = element_pattern(d, self.element_beta)?;
                Ok(self.weights.ad_mul(&self.geom.steering_vector(d)) * num_complex::Complex64::new(g, 0.0))
            })
            .collect()
    }
}

/// One row of a results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub model: CalibrationModel,
    pub method: Option<Method>,
    pub s_r: f64,
    pub similarity_mode: SimilarityMode,
    pub e_a_mean_sq_deg2: f64,
    pub e_a_rms_deg: f64,
    pub e_c_db: f64,
    pub e_c_excluded: usize,
    pub eval_set: String,
}

pub const REPORT_CSV_HEADER: &str = "model,method,s_r,e_a_rms_deg,e_a_mean_sq_deg2,e_c_db,eval_set";

impl MetricReport {
    pub fn label(&self) -> String {
        match self.method {
            Some(m) => format!("{}-{}", self.model, m),
            None => self.model.to_string(),
        }
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.model,
            self.method.map(|m| m.to_string()).unwrap_or_default(),
            self.s_r,
            self.e_a_rms_deg,
            self.e_a_mean_sq_deg2,
            self.e_c_db,
            self.eval_set
        )
    }
}

/// Element gain estimate `|γ_t| r_t` at the sample nearest each angle.
fn estimated_element_gain(
    state: &CalibrationState,
    meas: &MeasurementSet,
    eval: &EvaluationAngleSet,
) -> Vec<f64> {
    eval.angles
        .iter()
        .map(|d| {
            let t = meas
                .sample_angles
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.sq_dist_deg(d).total_cmp(&b.1.sq_dist_deg(d)))
                .map(|(i, _)| i)
                .unwrap_or(0);
            state.gains.get(t).map(|g| g.norm()).unwrap_or(1.0) * meas.distances.get(t).copied().unwrap_or(1.0)
        })
        .collect()
}

/// Scores a calibration state against the truth.
pub fn evaluate(
    state: &CalibrationState,
    meas: &MeasurementSet,
    truth: &TruthModel,
    eval: &EvaluationAngleSet,
    mode: SimilarityMode,
) -> Result<MetricReport> {
    let geom = &truth.geom;
    let w_hat = state.codebook.weights();
    check_dim("calibrated codebook elements", geom.n_elements(), w_hat.nrows())?;
    check_dim("calibrated codebook beams", truth.weights.ncols(), w_hat.ncols())?;
    if meas.n_samples() == 0 {
        return Err(CalError::Domain("measurement set is empty".into()));
    }
    let a = geom.steering_matrix(eval.angles());
    let proj_hat = w_hat.ad_mul(&a);
    let proj_true = truth.weights.ad_mul(&a);
    let proj_ideal = truth.ideal.ad_mul(&a);

    let gains = estimated_element_gain(state, meas, eval);
    let mut b_hat = proj_hat.clone();
    let mut b_bar = proj_true.clone();
    for (s, d) in eval.angles.iter().enumerate() {
        b_hat.column_mut(s).scale_mut(gains[s]);
        b_bar.column_mut(s).scale_mut(element_pattern(d, truth.element_beta)?);
    }
    let s_r = response_similarity(&b_hat, &b_bar, mode)?;
    let truth_cols: Vec<CVector> = b_bar.column_iter().map(|c| c.into_owned()).collect();
    let ea = angle_error(w_hat, geom, &truth_cols, eval)?;
    let ec = gain_loss(&proj_hat, &proj_true, &proj_ideal)?;
    Ok(MetricReport {
        model: state.model,
        method: state.method,
        s_r,
        similarity_mode: mode,
        e_a_mean_sq_deg2: ea.mean_sq_deg2,
        e_a_rms_deg: ea.rms_deg,
        e_c_db: ec.db,
        e_c_excluded: ec.excluded,
        eval_set: eval.descriptor(),
    })
}
