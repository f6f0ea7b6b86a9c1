use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CalError, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    MeasurementSet,
    Codebook,
    CalibrationState,
    MetricReport,
}

impl ArtifactKind {
    pub(crate) fn code(self) -> u32 {
        match self {
            Self::MeasurementSet => 1,
            Self::Codebook => 2,
            Self::CalibrationState => 3,
            Self::MetricReport => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Encoding {
    /// Raw little-endian IEEE-754 doubles behind a fixed header.
    BinaryLe,
    /// Comma-separated text with shortest round-trip decimal floats.
    Csv,
    Json,
}

impl std::str::FromStr for Encoding {
    type Err = CalError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bin" | "binary" | "binary-le" => Ok(Self::BinaryLe),
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(CalError::Config(format!("unknown encoding {other:?}"))),
        }
    }
}

/// Array sizes carried by an artifact. Absent entries do not apply.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shapes {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PayloadFile {
    /// File name relative to the manifest's directory.
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Sidecar JSON describing one artifact and its payload files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub kind: ArtifactKind,
    pub encoding: Encoding,
    pub shapes: Shapes,
    pub units: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub payload: Vec<PayloadFile>,
    /// Configuration that produced the artifact, verbatim.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<String>,
    pub producer: String,
}

impl Manifest {
    pub(crate) fn new(kind: ArtifactKind, encoding: Encoding, shapes: Shapes) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            kind,
            encoding,
            shapes,
            units: BTreeMap::new(),
            seed: None,
            payload: Vec::new(),
            config: None,
            producer: concat!("beamcal ", env!("CARGO_PKG_VERSION")).to_string(),
        }
    }

    pub(crate) fn unit(mut self, quantity: &str, unit: &str) -> Self {
        self.units.insert(quantity.into(), unit.into());
        self
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let m: Manifest = serde_json::from_str(&text)
            .map_err(|e| CalError::Format(format!("{}: {e}", path.display())))?;
        if m.format_version != FORMAT_VERSION {
            return Err(CalError::Version(m.format_version));
        }
        Ok(m)
    }

    pub(crate) fn expect(&self, kind: ArtifactKind) -> Result<()> {
        if self.kind != kind {
            return Err(CalError::Format(format!(
                "expected a {kind:?} artifact, found {:?}",
                self.kind
            )));
        }
        Ok(())
    }
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes via a temporary sibling and rename so readers never see a
/// partial file.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Reads a payload and checks it against its manifest entry.
pub(crate) fn read_payload(manifest_path: &Path, entry: &PayloadFile) -> Result<Vec<u8>> {
    let path = manifest_path
        .parent()
        .unwrap_or_else(|| Path::new(""))
        .join(&entry.file);
    let bytes = std::fs::read(&path)?;
    let actual = sha256_hex(&bytes);
    if actual != entry.sha256 {
        return Err(CalError::Checksum {
            expected: entry.sha256.clone(),
            actual,
        });
    }
    Ok(bytes)
}

pub(crate) fn payload_entry(name: String, bytes: &[u8]) -> PayloadFile {
    PayloadFile {
        file: name,
        bytes: bytes.len() as u64,
        sha256: sha256_hex(bytes),
    }
}
