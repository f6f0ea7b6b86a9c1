//! Codebook calibration from beam measurements.
//!
//! Four models of increasing freedom are supported:
//!
//! * `M1` keeps the ideal codebook and only fits per-sample gains.
//! * `M2` re-estimates each beam's steering direction.
//! * `M3` fits a full codebook with gains tied to a parametric element
//!   pattern and free-space path loss.
//! * `M4` fits a full codebook with unconstrained per-sample gains, by
//!   alternating optimisation or gradient descent on either loss.

pub mod loss;
mod oscillation;
mod solver;
pub mod trust_region;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::array::{BeamformingAngles, Codebook};
use crate::error::{CalError, Result};

pub use loss::{
    ael_gradients, ael_loss, rel_gradient_gamma, rel_gradient_w, rel_loss,
    update_gamma_closed_form, AelContext, AelGradients, AelValue, GammaUpdate,
};
pub use oscillation::{detect_oscillation, OscillationReport, OscillationTest};
pub use solver::{
    calibrate, calibrate_observed, calibrate_rel_then_ael, initial_state, resolve_anchors,
    IterationView,
};
pub use trust_region::{update_w_trust_region, CodewordUpdate, TrustRegionCase, TrustRegionOutput};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CalibrationModel {
    M1,
    M2,
    M3,
    M4,
}

impl std::fmt::Display for CalibrationModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Self::M1 => "M1",
            Self::M2 => "M2",
            Self::M3 => "M3",
            Self::M4 => "M4",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for CalibrationModel {
    type Err = CalError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "M1" => Ok(Self::M1),
            "M2" => Ok(Self::M2),
            "M3" => Ok(Self::M3),
            "M4" => Ok(Self::M4),
            other => Err(CalError::Config(format!("unknown model {other:?}"))),
        }
    }
}

/// Optimiser used by `M4` (and the codebook step of `M3`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Alternating closed-form gains and trust-region codebook updates.
    Ao,
    /// Stochastic gradient descent on the response-error loss.
    GdRel,
    /// Stochastic gradient descent on the angle-error loss.
    GdAel,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Self::Ao => "ao",
            Self::GdRel => "gd-rel",
            Self::GdAel => "gd-ael",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Method {
    type Err = CalError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "ao" => Ok(Self::Ao),
            "gd-rel" => Ok(Self::GdRel),
            "gd-ael" => Ok(Self::GdAel),
            other => Err(CalError::Config(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Rel,
    Ael,
}

/// One entry of a loss trace. Values are on the normalised data scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub iteration: usize,
    pub value: f64,
    pub kind: LossKind,
}

/// Which measurement samples act as anchors for the angle-error loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AnchorSpec {
    /// Samples nearest to each point of an angle grid (degrees).
    Grid {
        az_range_deg: (f64, f64),
        #[serde(default)]
        el_range_deg: (f64, f64),
        step_deg: f64,
        #[serde(default)]
        el_step_deg: Option<f64>,
    },
    Explicit { indices: Vec<usize> },
}

impl AnchorSpec {
    pub fn azimuth(lo: f64, hi: f64, step: f64) -> Self {
        Self::Grid {
            az_range_deg: (lo, hi),
            el_range_deg: (0.0, 0.0),
            step_deg: step,
            el_step_deg: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub method: Method,
    pub learning_rate: f64,
    /// Mini-batch size for gradient methods; `None` means full batch.
    pub batch_size: Option<usize>,
    pub max_iters: usize,
    /// Relative loss change below which an iteration counts as stalled.
    pub rel_tol: f64,
    /// Consecutive stalled iterations that end the run.
    pub patience: usize,
    pub seed: u64,
    pub anchors: AnchorSpec,
    /// Rescale observations to unit RMS column norm before fitting.
    pub normalize_data: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: Method::Ao,
            learning_rate: 0.02,
            batch_size: None,
            max_iters: 200,
            rel_tol: 1e-8,
            patience: 20,
            seed: 0,
            anchors: AnchorSpec::azimuth(-40.0, 40.0, 1.0),
            normalize_data: true,
        }
    }
}

/// Mini-batch size used by the gradient constructors. Per-sample gain steps
/// in the angle-error loss scale with `1/|B|`, so full-batch runs stall.
pub const DEFAULT_BATCH: usize = 64;

impl SolverConfig {
    pub fn ao() -> Self {
        Self::default()
    }

    pub fn gd_rel(learning_rate: f64) -> Self {
        Self {
            method: Method::GdRel,
            learning_rate,
            batch_size: Some(DEFAULT_BATCH),
            max_iters: 2000,
            ..Self::default()
        }
    }

    pub fn gd_ael(learning_rate: f64) -> Self {
        Self {
            method: Method::GdAel,
            learning_rate,
            batch_size: Some(DEFAULT_BATCH),
            max_iters: 2000,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(CalError::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == Some(0) {
            return Err(CalError::Config("batch size must be at least 1".into()));
        }
        if self.max_iters == 0 {
            return Err(CalError::Config("max_iters must be at least 1".into()));
        }
        if !(self.rel_tol >= 0.0) {
            return Err(CalError::Config("rel_tol must be non-negative".into()));
        }
        if let AnchorSpec::Grid { step_deg, el_step_deg, .. } = &self.anchors {
            if !(*step_deg > 0.0) || el_step_deg.is_some_and(|s| !(s > 0.0)) {
                return Err(CalError::Config("anchor grid step must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Result of a calibration run.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationState {
    pub model: CalibrationModel,
    pub method: Option<Method>,
    /// Unit-norm codebook.
    pub codebook: Codebook,
    /// Per-sample gains in the units of the input observations.
    pub gains: Vec<Complex64>,
    /// Fitted beam directions (`M2`).
    pub beamforming_angles: Option<BeamformingAngles>,
    /// Fitted element directivity (`M3`).
    pub beta: Option<f64>,
    /// Factor the observations were divided by during fitting.
    pub data_scale: f64,
    pub loss_trace: Vec<LossRecord>,
    pub converged: bool,
}

impl CalibrationState {
    pub fn final_loss(&self) -> Option<f64> {
        self.loss_trace.last().map(|r| r.value)
    }
}
