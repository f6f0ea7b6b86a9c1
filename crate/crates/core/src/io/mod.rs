//! Versioned artifacts: a JSON manifest next to one or more payload files.
//!
//! The manifest records the artifact kind, shapes, units, seed, the
//! producing configuration and a SHA-256 of every payload. Loading checks
//! the checksum before parsing, so a truncated or edited payload is
//! rejected without building a partial value.

pub mod binary;
mod manifest;
pub mod text;

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub use manifest::{ArtifactKind, Encoding, Manifest, PayloadFile, Shapes, FORMAT_VERSION};
use manifest::{payload_entry, read_payload, write_atomic};

use crate::array::{AngleDirection, BeamformingAngles, CMatrix, Codebook, NormMode};
use crate::calibration::{CalibrationModel, CalibrationState, LossRecord, Method};
use crate::error::{check_dim, CalError, Result};
use crate::metrics::MetricReport;
use crate::scenario::MeasurementSet;

/// Environment variable naming the default directory for artifacts.
pub const DATA_DIR_ENV: &str = "BEAMCAL_DATA_DIR";

pub fn data_dir() -> Option<PathBuf> {
    std::env::var_os(DATA_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

/// Relative paths are taken relative to the data directory when one is set.
pub fn resolve(path: &Path) -> PathBuf {
    match data_dir() {
        Some(dir) if path.is_relative() => dir.join(path),
        _ => path.to_path_buf(),
    }
}

#[derive(Debug, Clone, Default)]
pub struct SaveOptions {
    pub seed: Option<u64>,
    /// Configuration text echoed into the manifest.
    pub config: Option<String>,
}

fn stem(path: &Path) -> Result<String> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_owned)
        .ok_or_else(|| CalError::Config(format!("bad artifact path {}", path.display())))
}

fn sibling(path: &Path, name: &str) -> PathBuf {
    path.with_file_name(name)
}

/// Writes payloads first and the manifest last.
fn commit(path: &Path, mut manifest: Manifest, payloads: Vec<(String, Vec<u8>)>, opts: &SaveOptions) -> Result<Manifest> {
    manifest.seed = opts.seed.or(manifest.seed);
    manifest.config = opts.config.clone();
    for (name, bytes) in payloads {
        write_atomic(&sibling(path, &name), &bytes)?;
        manifest.payload.push(payload_entry(name, &bytes));
    }
    let text = serde_json::to_string_pretty(&manifest)?;
    write_atomic(path, text.as_bytes())?;
    Ok(manifest)
}

fn payload(m: &Manifest, idx: usize) -> Result<&PayloadFile> {
    m.payload
        .get(idx)
        .ok_or_else(|| CalError::Format(format!("manifest lists {} payload files", m.payload.len())))
}

fn shape(value: Option<usize>, what: &str) -> Result<usize> {
    value.ok_or_else(|| CalError::Format(format!("manifest lacks shape {what}")))
}

pub fn save_measurements(path: &Path, m: &MeasurementSet, encoding: Encoding, opts: &SaveOptions) -> Result<Manifest> {
    m.validate()?;
    let name = stem(path)?;
    let shapes = Shapes {
        g: Some(m.n_beams()),
        t: Some(m.n_samples()),
        ..Shapes::default()
    };
    let mut manifest = Manifest::new(ArtifactKind::MeasurementSet, encoding, shapes)
        .unit("observation", "sqrt(W)")
        .unit("distance", "m")
        .unit("snr", "dB");
    manifest.seed = Some(m.seed);
    let payloads = match encoding {
        Encoding::BinaryLe => {
            manifest = manifest.unit("angle", "rad");
            vec![(format!("{name}.bin"), binary::encode_measurements(m))]
        }
        Encoding::Csv => {
            manifest = manifest.unit("angle", "deg");
            let (obs, samples) = text::encode_measurements(m)?;
            vec![(format!("{name}.csv"), obs), (format!("{name}.samples.csv"), samples)]
        }
        Encoding::Json => {
            return Err(CalError::Config("measurement sets are stored as csv or binary".into()))
        }
    };
    commit(path, manifest, payloads, opts)
}

pub fn load_measurements(path: &Path) -> Result<MeasurementSet> {
    let manifest = Manifest::read(path)?;
    manifest.expect(ArtifactKind::MeasurementSet)?;
    let g = shape(manifest.shapes.g, "g")?;
    let t = shape(manifest.shapes.t, "t")?;
    let m = match manifest.encoding {
        Encoding::BinaryLe => {
            let bytes = read_payload(path, payload(&manifest, 0)?)?;
            let (bg, bt) = binary::peek_dims(&bytes, ArtifactKind::MeasurementSet)?;
            check_dim("binary header beams", g, bg)?;
            check_dim("binary header samples", t, bt)?;
            binary::decode_measurements(&bytes)?
        }
        Encoding::Csv => {
            let obs = read_payload(path, payload(&manifest, 0)?)?;
            let samples = read_payload(path, payload(&manifest, 1)?)?;
            let seed = manifest.seed.unwrap_or(0);
            text::decode_measurements(&obs, &samples, g, seed)?
        }
        Encoding::Json => return Err(CalError::Format("measurement sets are not stored as json".into())),
    };
    check_dim("measurement samples", t, m.n_samples())?;
    Ok(m)
}

pub fn save_codebook(path: &Path, cb: &Codebook, encoding: Encoding, opts: &SaveOptions) -> Result<Manifest> {
    let name = stem(path)?;
    let shapes = Shapes {
        g: Some(cb.n_codewords()),
        n: Some(cb.n_elements()),
        ..Shapes::default()
    };
    let manifest = Manifest::new(ArtifactKind::Codebook, encoding, shapes)
        .unit("weight", "1")
        .unit("norm_mode", norm_label(cb.norm_mode()));
    let payloads = match encoding {
        Encoding::BinaryLe => vec![(format!("{name}.bin"), binary::encode_codebook(cb))],
        Encoding::Csv => vec![(format!("{name}.csv"), text::encode_codebook(cb)?)],
        Encoding::Json => vec![(
            format!("{name}.payload.json"),
            serde_json::to_vec(&CodebookWire::from(cb))?,
        )],
    };
    commit(path, manifest, payloads, opts)
}

pub fn load_codebook(path: &Path) -> Result<Codebook> {
    let manifest = Manifest::read(path)?;
    manifest.expect(ArtifactKind::Codebook)?;
    let g = shape(manifest.shapes.g, "g")?;
    let n = shape(manifest.shapes.n, "n")?;
    let bytes = read_payload(path, payload(&manifest, 0)?)?;
    let cb = match manifest.encoding {
        Encoding::BinaryLe => binary::decode_codebook(&bytes)?,
        Encoding::Csv => {
            let mode = manifest
                .units
                .get("norm_mode")
                .map(|s| parse_norm(s))
                .transpose()?
                .unwrap_or(NormMode::PerCodewordUnitNorm);
            text::decode_codebook(&bytes, n, g, mode)?
        }
        Encoding::Json => serde_json::from_slice::<CodebookWire>(&bytes)?.into_codebook()?,
    };
    check_dim("codebook codewords", g, cb.n_codewords())?;
    check_dim("codebook elements", n, cb.n_elements())?;
    Ok(cb)
}

pub fn save_state(path: &Path, state: &CalibrationState, opts: &SaveOptions) -> Result<Manifest> {
    let name = stem(path)?;
    let shapes = Shapes {
        g: Some(state.codebook.n_codewords()),
        n: Some(state.codebook.n_elements()),
        t: Some(state.gains.len()),
        ..Shapes::default()
    };
    let manifest = Manifest::new(ArtifactKind::CalibrationState, Encoding::Json, shapes)
        .unit("angle", "rad")
        .unit("gain", "sqrt(W)");
    let bytes = state_to_json(state)?.into_bytes();
    commit(path, manifest, vec![(format!("{name}.payload.json"), bytes)], opts)
}

pub fn load_state(path: &Path) -> Result<CalibrationState> {
    let manifest = Manifest::read(path)?;
    manifest.expect(ArtifactKind::CalibrationState)?;
    let bytes = read_payload(path, payload(&manifest, 0)?)?;
    let state = state_from_json(std::str::from_utf8(&bytes).map_err(|e| CalError::Format(e.to_string()))?)?;
    check_dim("state codewords", shape(manifest.shapes.g, "g")?, state.codebook.n_codewords())?;
    check_dim("state elements", shape(manifest.shapes.n, "n")?, state.codebook.n_elements())?;
    check_dim("state gains", shape(manifest.shapes.t, "t")?, state.gains.len())?;
    Ok(state)
}

pub fn save_reports(path: &Path, reports: &[MetricReport], opts: &SaveOptions) -> Result<Manifest> {
    let name = stem(path)?;
    let manifest = Manifest::new(ArtifactKind::MetricReport, Encoding::Json, Shapes::default())
        .unit("e_a", "deg")
        .unit("e_c", "dB");
    let bytes = serde_json::to_vec_pretty(reports)?;
    commit(path, manifest, vec![(format!("{name}.payload.json"), bytes)], opts)
}

pub fn load_reports(path: &Path) -> Result<Vec<MetricReport>> {
    let manifest = Manifest::read(path)?;
    manifest.expect(ArtifactKind::MetricReport)?;
    let bytes = read_payload(path, payload(&manifest, 0)?)?;
    Ok(serde_json::from_slice(&bytes)?)
}

fn norm_label(mode: NormMode) -> &'static str {
    match mode {
        NormMode::PerElementUnitModulus => "per_element_unit_modulus",
        NormMode::PerCodewordUnitNorm => "per_codeword_unit_norm",
    }
}

fn parse_norm(s: &str) -> Result<NormMode> {
    match s {
        "per_element_unit_modulus" => Ok(NormMode::PerElementUnitModulus),
        "per_codeword_unit_norm" => Ok(NormMode::PerCodewordUnitNorm),
        other => Err(CalError::Format(format!("unknown norm mode {other:?}"))),
    }
}

fn pairs(z: impl Iterator<Item = Complex64>) -> Vec<[f64; 2]> {
    z.map(|z| [z.re, z.im]).collect()
}

fn unpairs(v: &[[f64; 2]]) -> Vec<Complex64> {
    v.iter().map(|p| Complex64::new(p[0], p[1])).collect()
}

/// JSON form of a codebook: column-major `[re, im]` pairs.
#[derive(Debug, Serialize, Deserialize)]
struct CodebookWire {
    n: usize,
    g: usize,
    norm_mode: NormMode,
    weights: Vec<[f64; 2]>,
}

impl From<&Codebook> for CodebookWire {
    fn from(cb: &Codebook) -> Self {
        Self {
            n: cb.n_elements(),
            g: cb.n_codewords(),
            norm_mode: cb.norm_mode(),
            weights: pairs(cb.weights().iter().copied()),
        }
    }
}

impl CodebookWire {
    fn into_codebook(self) -> Result<Codebook> {
        check_dim("codebook entries", self.n * self.g, self.weights.len())?;
        Codebook::new(CMatrix::from_vec(self.n, self.g, unpairs(&self.weights)), self.norm_mode)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct StateWire {
    model: CalibrationModel,
    method: Option<Method>,
    codebook: CodebookWire,
    gains: Vec<[f64; 2]>,
    /// `[azimuth, elevation]` in radians, so the round trip is exact.
    beamforming_angles_rad: Option<Vec<[f64; 2]>>,
    beta: Option<f64>,
    data_scale: f64,
    loss_trace: Vec<LossRecord>,
    converged: bool,
}

pub fn state_to_json(state: &CalibrationState) -> Result<String> {
    let wire = StateWire {
        model: state.model,
        method: state.method,
        codebook: CodebookWire::from(&state.codebook),
        gains: pairs(state.gains.iter().copied()),
        beamforming_angles_rad: state
            .beamforming_angles
            .as_ref()
            .map(|a| a.0.iter().map(|d| [d.azimuth(), d.elevation()]).collect()),
        beta: state.beta,
        data_scale: state.data_scale,
        loss_trace: state.loss_trace.clone(),
        converged: state.converged,
    };
    Ok(serde_json::to_string_pretty(&wire)?)
}

pub fn state_from_json(text: &str) -> Result<CalibrationState> {
    let wire: StateWire = serde_json::from_str(text)?;
    let beamforming_angles = wire
        .beamforming_angles_rad
        .map(|v| {
            v.iter()
                .map(|p| AngleDirection::new(p[0], p[1]))
                .collect::<Result<Vec<_>>>()
                .map(BeamformingAngles)
        })
        .transpose()?;
    Ok(CalibrationState {
        model: wire.model,
        method: wire.method,
        codebook: wire.codebook.into_codebook()?,
        gains: unpairs(&wire.gains),
        beamforming_angles,
        beta: wire.beta,
        data_scale: wire.data_scale,
        loss_trace: wire.loss_trace,
        converged: wire.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::ScenarioConfig;
    use crate::scenario::generate_measurements;

    fn small() -> (ScenarioConfig, MeasurementSet) {
        let cfg = ScenarioConfig::preset("2d-table2").unwrap();
        let m = generate_measurements(&cfg.build().unwrap()).unwrap();
        (cfg, m)
    }

    #[test]
    fn measurement_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let (_, m) = small();
        let bin = dir.path().join("m_bin.json");
        let csv = dir.path().join("m_csv.json");
        save_measurements(&bin, &m, Encoding::BinaryLe, &SaveOptions::default()).unwrap();
        save_measurements(&csv, &m, Encoding::Csv, &SaveOptions::default()).unwrap();
        assert_eq!(load_measurements(&bin).unwrap(), m);
        let back = load_measurements(&csv).unwrap();
        assert_eq!(back.observations, m.observations);
        for (a, b) in back.sample_angles.iter().zip(&m.sample_angles) {
            assert!((a.azimuth() - b.azimuth()).abs() < 1e-15);
        }
    }

    #[test]
    fn truncated_payload_is_a_checksum_error() {
        let dir = tempfile::tempdir().unwrap();
        let (_, m) = small();
        let p = dir.path().join("m.json");
        save_measurements(&p, &m, Encoding::BinaryLe, &SaveOptions::default()).unwrap();
        let payload = dir.path().join("m.bin");
        let bytes = std::fs::read(&payload).unwrap();
        std::fs::write(&payload, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(load_measurements(&p), Err(CalError::Checksum { .. })));
    }

    #[test]
    fn version_and_shape_checks() {
        let dir = tempfile::tempdir().unwrap();
        let (cfg, _) = small();
        let cb = cfg.ideal_codebook().unwrap();
        let p = dir.path().join("cb.json");
        save_codebook(&p, &cb, Encoding::Csv, &SaveOptions::default()).unwrap();
        assert_eq!(load_codebook(&p).unwrap(), cb);

        let text = std::fs::read_to_string(&p).unwrap();
        std::fs::write(&p, text.replace("\"g\": 11", "\"g\": 12")).unwrap();
        assert!(load_codebook(&p).is_err());
        std::fs::write(&p, text.replace("\"format_version\": 1", "\"format_version\": 7")).unwrap();
        assert!(matches!(load_codebook(&p), Err(CalError::Version(7))));
        std::fs::write(&p, &text).unwrap();
        assert!(load_state(&p).is_err());
    }

    #[test]
    fn data_dir_resolution() {
        // Only the pure path logic; the variable itself is process-global.
        let abs = Path::new("/tmp/x.json");
        assert_eq!(resolve(abs), abs);
    }
}
