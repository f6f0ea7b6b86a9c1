//! Beam codebook calibration for phased arrays from UE measurements.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod array;
pub mod calibration;
pub mod cooperative;
pub mod error;
pub mod estimation;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod presets;
pub mod scenario;

pub use array::{
    beam_response, beam_responses, element_pattern, ideal_codebook, AngleDirection, ArrayGeometry,
    BeamformingAngles, CMatrix, CVector, Codebook, NormMode,
};
pub use calibration::{
    calibrate, calibrate_rel_then_ael, detect_oscillation, initial_state, AnchorSpec,
    CalibrationModel, CalibrationState, LossKind, LossRecord, Method, OscillationReport,
    OscillationTest, SolverConfig,
};
pub use cooperative::{fuse, random_split, run_rounds, CoopConfig, FusionWeights, WeightScheme};
pub use error::{CalError, Result};
pub use io::{Encoding, Manifest, SaveOptions};
pub use metrics::{
    angle_error, evaluate, gain_loss, EvaluationAngleSet, MetricReport, SimilarityMode, TruthModel,
    REPORT_CSV_HEADER,
};
pub use scenario::{generate_measurements, MeasurementSet, NoiseModel, Scenario};
pub use presets::ScenarioConfig;
