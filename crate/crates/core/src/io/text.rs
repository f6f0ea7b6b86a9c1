//! CSV layouts. Floats use Rust's shortest round-trip formatting, so
//! parsing a written value recovers it exactly.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::array::{AngleDirection, CMatrix, Codebook, NormMode};
use crate::error::{CalError, Result};
use crate::scenario::MeasurementSet;

#[derive(Serialize, Deserialize)]
struct ObservationRow {
    t: usize,
    g: usize,
    re: f64,
    im: f64,
}

#[derive(Serialize, Deserialize)]
struct SampleRow {
    t: usize,
    az_deg: f64,
    el_deg: f64,
    distance_m: f64,
    snr_db: f64,
}

#[derive(Serialize, Deserialize)]
struct CodebookRow {
    g: usize,
    n: usize,
    re: f64,
    im: f64,
}

fn csv_err(e: csv::Error) -> CalError {
    CalError::Format(format!("csv: {e}"))
}

fn to_bytes<R: Serialize>(rows: impl Iterator<Item = R>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| CalError::Format(format!("csv: {e}")))
}

fn from_bytes<R: for<'de> Deserialize<'de>>(bytes: &[u8]) -> Result<Vec<R>> {
    csv::Reader::from_reader(bytes)
        .deserialize()
        .collect::<std::result::Result<Vec<R>, _>>()
        .map_err(csv_err)
}

/// Fills a `rows × cols` matrix from indexed entries, requiring each cell
/// exactly once.
fn assemble(
    rows: usize,
    cols: usize,
    entries: impl Iterator<Item = (usize, usize, Complex64)>,
) -> Result<CMatrix> {
    let mut m = CMatrix::zeros(rows, cols);
    let mut seen = vec![false; rows * cols];
    let mut count = 0;
    for (i, j, z) in entries {
        if i >= rows || j >= cols {
            return Err(CalError::Format(format!("index ({i}, {j}) outside {rows} x {cols}")));
        }
        if std::mem::replace(&mut seen[i + j * rows], true) {
            return Err(CalError::Format(format!("duplicate entry ({i}, {j})")));
        }
        m[(i, j)] = z;
        count += 1;
    }
    if count != rows * cols {
        return Err(CalError::Format(format!(
            "expected {} entries, found {count}",
            rows * cols
        )));
    }
    Ok(m)
}

/// Returns `(observations.csv, samples.csv)`.
pub fn encode_measurements(m: &MeasurementSet) -> Result<(Vec<u8>, Vec<u8>)> {
    let (g, t) = m.observations.shape();
    let obs = to_bytes((0..t).flat_map(|ti| {
        (0..g).map(move |gi| {
            let z = m.observations[(gi, ti)];
            ObservationRow { t: ti, g: gi, re: z.re, im: z.im }
        })
    }))?;
    let samples = to_bytes((0..t).map(|ti| SampleRow {
        t: ti,
        az_deg: m.sample_angles[ti].azimuth_deg(),
        el_deg: m.sample_angles[ti].elevation_deg(),
        distance_m: m.distances[ti],
        snr_db: m.snr_db[ti],
    }))?;
    Ok((obs, samples))
}

pub fn decode_measurements(obs: &[u8], samples: &[u8], g: usize, seed: u64) -> Result<MeasurementSet> {
    let samples: Vec<SampleRow> = from_bytes(samples)?;
    let t = samples.len();
    let rows: Vec<ObservationRow> = from_bytes(obs)?;
    let observations = assemble(g, t, rows.into_iter().map(|r| (r.g, r.t, Complex64::new(r.re, r.im))))?;
    let mut sample_angles = Vec::with_capacity(t);
    let mut distances = Vec::with_capacity(t);
    let mut snr_db = Vec::with_capacity(t);
    for (i, s) in samples.into_iter().enumerate() {
        if s.t != i {
            return Err(CalError::Format(format!("sample row {i} is labelled {}", s.t)));
        }
        sample_angles.push(AngleDirection::from_degrees(s.az_deg, s.el_deg)?);
        distances.push(s.distance_m);
        snr_db.push(s.snr_db);
    }
    Ok(MeasurementSet {
        observations,
        sample_angles,
        distances,
        snr_db,
        seed,
    })
}

pub fn encode_codebook(cb: &Codebook) -> Result<Vec<u8>> {
    let (n, g) = cb.weights().shape();
    to_bytes((0..g).flat_map(|gi| {
        (0..n).map(move |ni| {
            let z = cb.weights()[(ni, gi)];
            CodebookRow { g: gi, n: ni, re: z.re, im: z.im }
        })
    }))
}

pub fn decode_codebook(bytes: &[u8], n: usize, g: usize, mode: NormMode) -> Result<Codebook> {
    let rows: Vec<CodebookRow> = from_bytes(bytes)?;
    let w = assemble(n, g, rows.into_iter().map(|r| (r.n, r.g, Complex64::new(r.re, r.im))))?;
    Codebook::new(w, mode)
}
