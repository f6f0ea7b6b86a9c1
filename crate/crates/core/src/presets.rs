//! Declarative scenario configuration (TOML/JSON) and the built-in presets.
//!
//! Angles are in degrees, power in dBm and distances in metres; everything
//! is converted to internal units when the scenario is built.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::array::{ideal_codebook, AngleDirection, ArrayGeometry, BeamformingAngles, Codebook};
use crate::calibration::AnchorSpec;
use crate::error::{CalError, Result};
use crate::estimation::grid_points;
use crate::metrics::{EvaluationAngleSet, TruthModel};
use crate::scenario::{
    perturb_codebook, NoiseModel, PerturbationKind, PerturbationSpec, Position, Scatterer, Scenario,
    SPEED_OF_LIGHT,
};

pub const PRESET_NAMES: [&str; 3] = ["2d-table2", "3d-table2", "mpc-fig8"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamGrid {
    pub az_deg: Vec<f64>,
    #[serde(default = "zero_list")]
    pub el_deg: Vec<f64>,
}

fn zero_list() -> Vec<f64> {
    vec![0.0]
}

/// How UE sample positions are laid out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrajectorySpec {
    /// Uniform angular grid at a fixed range, elevation-major.
    AngularGrid {
        az_range_deg: (f64, f64),
        az_step_deg: f64,
        #[serde(default)]
        el_range_deg: (f64, f64),
        #[serde(default)]
        el_step_deg: Option<f64>,
        range_m: f64,
    },
    /// Uniform steps along a straight segment.
    Line {
        start: Position,
        end: Position,
        step_m: f64,
    },
    Points { positions: Vec<Position> },
}

impl TrajectorySpec {
    pub fn positions(&self, bs: &Position) -> Result<Vec<Position>> {
        match self {
            Self::AngularGrid {
                az_range_deg,
                az_step_deg,
                el_range_deg,
                el_step_deg,
                range_m,
            } => {
                if !(*az_step_deg > 0.0) || !(*range_m > 0.0) {
                    return Err(CalError::Config("trajectory step and range must be positive".into()));
                }
                let az = grid_points(az_range_deg.0, az_range_deg.1, *az_step_deg);
                let el = match el_step_deg {
                    Some(s) if *s > 0.0 => grid_points(el_range_deg.0, el_range_deg.1, *s),
                    Some(_) => return Err(CalError::Config("elevation step must be positive".into())),
                    None => vec![el_range_deg.0],
                };
                let mut out = Vec::with_capacity(az.len() * el.len());
                for &e in &el {
                    for &a in &az {
                        let (a, e) = (a.to_radians(), e.to_radians());
                        out.push([
                            bs[0] + range_m * a.cos() * e.cos(),
                            bs[1] + range_m * a.sin() * e.cos(),
                            bs[2] + range_m * e.sin(),
                        ]);
                    }
                }
                Ok(out)
            }
            Self::Line { start, end, step_m } => {
                if !(*step_m > 0.0) {
                    return Err(CalError::Config("trajectory step must be positive".into()));
                }
                let d = [end[0] - start[0], end[1] - start[1], end[2] - start[2]];
                let len = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                let n = (len / step_m + 1e-9).floor() as usize;
                Ok((0..=n)
                    .map(|i| {
                        let f = if len > 0.0 { i as f64 * step_m / len } else { 0.0 };
                        [start[0] + f * d[0], start[1] + f * d[1], start[2] + f * d[2]]
                    })
                    .collect())
            }
            Self::Points { positions } => Ok(positions.clone()),
        }
    }
}

/// A cluster of point scatterers placed uniformly at random in a disc in the
/// horizontal plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterSpec {
    pub center: Position,
    pub points: usize,
    pub radius_m: f64,
    pub rcs: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScattererSpec {
    #[serde(default)]
    pub clusters: Vec<ClusterSpec>,
    #[serde(default)]
    pub points: Vec<Scatterer>,
}

/// Evaluation (and anchor) angle grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSpec {
    pub az_range_deg: (f64, f64),
    pub az_step_deg: f64,
    #[serde(default)]
    pub el_range_deg: (f64, f64),
    #[serde(default)]
    pub el_step_deg: Option<f64>,
}

impl EvalSpec {
    pub fn angle_set(&self) -> Result<EvaluationAngleSet> {
        if !(self.az_step_deg > 0.0) || self.el_step_deg.is_some_and(|s| !(s > 0.0)) {
            return Err(CalError::Config("evaluation step must be positive".into()));
        }
        let az = grid_points(self.az_range_deg.0, self.az_range_deg.1, self.az_step_deg);
        let el = match self.el_step_deg {
            Some(s) => grid_points(self.el_range_deg.0, self.el_range_deg.1, s),
            None => vec![self.el_range_deg.0],
        };
        let mut angles = Vec::with_capacity(az.len() * el.len());
        for &e in &el {
            for &a in &az {
                angles.push(AngleDirection::from_degrees(a, e)?);
            }
        }
        EvaluationAngleSet::new(angles, None)
    }

    pub fn anchor_spec(&self) -> AnchorSpec {
        AnchorSpec::Grid {
            az_range_deg: self.az_range_deg,
            el_range_deg: self.el_range_deg,
            step_deg: self.az_step_deg,
            el_step_deg: self.el_step_deg,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub array: ArrayGeometry,
    pub beams: BeamGrid,
    pub carrier_hz: f64,
    pub tx_power_dbm: f64,
    pub noise: NoiseModel,
    #[serde(default = "one")]
    pub subcarriers: usize,
    #[serde(default)]
    pub subcarrier_spacing_hz: f64,
    #[serde(default)]
    pub bs_position: Position,
    pub trajectory: TrajectorySpec,
    #[serde(default)]
    pub scatterers: ScattererSpec,
    pub element_beta: f64,
    pub perturbation: PerturbationSpec,
    pub seed: u64,
    pub evaluation: EvalSpec,
}

fn one() -> usize {
    1
}

/// Independent child seed for one purpose.
fn child_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1 << 32 | stream);
    rng.next_u64()
}

const PERTURBATION_STREAM: u64 = 1;
const SCATTERER_STREAM: u64 = 2;

impl ScenarioConfig {
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "2d-table2" => Ok(preset_2d()),
            "3d-table2" => Ok(preset_3d()),
            "mpc-fig8" => Ok(preset_mpc()),
            other => Err(CalError::Config(format!(
                "unknown preset {other:?}; expected one of {}",
                PRESET_NAMES.join(", ")
            ))),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CalError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CalError::Config(e.to_string()))
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    pub fn nominal_angles(&self) -> Result<BeamformingAngles> {
        BeamformingAngles::grid(&self.beams.az_deg, &self.beams.el_deg)
    }

    /// Unit-modulus steering codebook at the nominal angles.
    pub fn ideal_codebook(&self) -> Result<Codebook> {
        Ok(ideal_codebook(&self.array, &self.nominal_angles()?))
    }

    pub fn true_codebook(&self) -> Result<Codebook> {
        perturb_codebook(
            &self.ideal_codebook()?,
            &self.perturbation,
            child_seed(self.seed, PERTURBATION_STREAM),
        )
    }

    pub fn scatterers(&self) -> Result<Vec<Scatterer>> {
        let mut rng = ChaCha8Rng::seed_from_u64(child_seed(self.seed, SCATTERER_STREAM));
        let mut out = Vec::new();
        for c in &self.scatterers.clusters {
            if !(c.radius_m >= 0.0) {
                return Err(CalError::Config("cluster radius must be non-negative".into()));
            }
            for _ in 0..c.points {
                // Uniform in the disc.
                let r = c.radius_m * rng.random::<f64>().sqrt();
                let phi = rng.random_range(0.0..std::f64::consts::TAU);
                out.push(Scatterer {
                    position: [c.center[0] + r * phi.cos(), c.center[1] + r * phi.sin(), c.center[2]],
                    rcs: c.rcs,
                });
            }
        }
        out.extend(self.scatterers.points.iter().cloned());
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.carrier_hz > 0.0) {
            return Err(CalError::Config("carrier frequency must be positive".into()));
        }
        if self.beams.az_deg.is_empty() || self.beams.el_deg.is_empty() {
            return Err(CalError::Config("beam grid is empty".into()));
        }
        if !(self.element_beta >= 0.0) {
            return Err(CalError::Config("element_beta must be non-negative".into()));
        }
        self.perturbation.validate().map_err(|e| CalError::Config(e.to_string()))?;
        self.evaluation.angle_set()?;
        Ok(())
    }

    pub fn build(&self) -> Result<Scenario> {
        self.validate()?;
        let scenario = Scenario {
            geom: self.array,
            true_codebook: self.true_codebook()?,
            nominal_angles: self.nominal_angles()?,
            wavelength: self.wavelength(),
            tx_power_dbm: self.tx_power_dbm,
            noise: self.noise,
            subcarriers: self.subcarriers,
            subcarrier_spacing_hz: self.subcarrier_spacing_hz,
            bs_position: self.bs_position,
            ue_trajectory: self.trajectory.positions(&self.bs_position)?,
            scatterers: self.scatterers()?,
            element_beta: self.element_beta,
            rng_seed: self.seed,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn truth_model(&self) -> Result<TruthModel> {
        TruthModel::new(
            self.array,
            self.true_codebook()?.into_weights(),
            self.element_beta,
            self.ideal_codebook()?.to_unit_norm().into_weights(),
        )
    }
}

const CARRIER_HZ: f64 = 5.0e9;

fn standard_beams_az() -> Vec<f64> {
    (-5..=5).map(|k| 10.0 * k as f64).collect()
}

fn standard_perturbation() -> PerturbationSpec {
    PerturbationSpec {
        kind: PerturbationKind::Both,
        additive_sigma: 0.8,
        phase_bits: 2,
    }
}

fn preset_2d() -> ScenarioConfig {
    ScenarioConfig {
        array: ArrayGeometry::new(1, 16).expect("valid geometry"),
        beams: BeamGrid {
            az_deg: standard_beams_az(),
            el_deg: vec![0.0],
        },
        carrier_hz: CARRIER_HZ,
        tx_power_dbm: 15.0,
        noise: NoiseModel::AverageSnr { snr_db: 35.0 },
        subcarriers: 1,
        subcarrier_spacing_hz: 0.0,
        bs_position: [0.0; 3],
        trajectory: TrajectorySpec::AngularGrid {
            az_range_deg: (-70.0, 70.0),
            az_step_deg: 0.25,
            el_range_deg: (0.0, 0.0),
            el_step_deg: None,
            range_m: 10.0,
        },
        scatterers: ScattererSpec::default(),
        element_beta: 1.0,
        perturbation: standard_perturbation(),
        seed: 1,
        evaluation: EvalSpec {
            az_range_deg: (-40.0, 40.0),
            az_step_deg: 1.0,
            el_range_deg: (0.0, 0.0),
            el_step_deg: None,
        },
    }
}

fn preset_3d() -> ScenarioConfig {
    ScenarioConfig {
        array: ArrayGeometry::new(16, 16).expect("valid geometry"),
        beams: BeamGrid {
            az_deg: standard_beams_az(),
            el_deg: (0..6).map(|k| -50.0 + 10.0 * k as f64).collect(),
        },
        trajectory: TrajectorySpec::AngularGrid {
            az_range_deg: (-70.0, 70.0),
            az_step_deg: 1.0,
            el_range_deg: (-70.0, 20.0),
            el_step_deg: Some(1.0),
            range_m: 10.0,
        },
        evaluation: EvalSpec {
            az_range_deg: (-40.0, 40.0),
            az_step_deg: 5.0,
            el_range_deg: (-40.0, 10.0),
            el_step_deg: Some(50.0 / 6.0),
        },
        ..preset_2d()
    }
}

fn preset_mpc() -> ScenarioConfig {
    let cluster = |y: f64| ClusterSpec {
        center: [10.0, y, 0.0],
        points: 5,
        radius_m: 1.0,
        rcs: 10.0,
    };
    ScenarioConfig {
        noise: NoiseModel::Thermal { variance_w: 1e-10 },
        subcarriers: 64,
        subcarrier_spacing_hz: 120e3,
        trajectory: TrajectorySpec::Line {
            start: [10.0, -30.0, 0.0],
            end: [10.0, 30.0, 0.0],
            step_m: 0.2,
        },
        scatterers: ScattererSpec {
            clusters: vec![cluster(-20.0), cluster(0.0), cluster(20.0)],
            points: Vec::new(),
        },
        ..preset_2d()
    }
}
