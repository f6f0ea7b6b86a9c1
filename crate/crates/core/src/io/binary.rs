//! Raw little-endian layout: a 32-byte header followed by `f64` records.

use num_complex::Complex64;

use super::manifest::{ArtifactKind, FORMAT_VERSION};
use crate::array::{AngleDirection, CMatrix, Codebook, NormMode};
use crate::error::{CalError, Result};
use crate::scenario::MeasurementSet;

pub const MAGIC: [u8; 4] = *b"BCAL";
pub const HEADER_LEN: usize = 32;

struct Writer(Vec<u8>);

impl Writer {
    fn header(kind: ArtifactKind, flags: u32, d0: usize, d1: usize, body: usize) -> Self {
        let mut w = Writer(Vec::with_capacity(HEADER_LEN + body));
        w.0.extend_from_slice(&MAGIC);
        w.u32(FORMAT_VERSION);
        w.u32(kind.code());
        w.u32(flags);
        w.u64(d0 as u64);
        w.u64(d1 as u64);
        w
    }

    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn c64(&mut self, z: Complex64) {
        self.f64(z.re);
        self.f64(z.im);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take<const K: usize>(&mut self) -> Result<[u8; K]> {
        let end = self.pos + K;
        let slice = self
            .buf
            .get(self.pos..end)
            .ok_or_else(|| CalError::Format("binary payload is truncated".into()))?;
        self.pos = end;
        Ok(slice.try_into().expect("slice length checked"))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take()?))
    }

    fn c64(&mut self) -> Result<Complex64> {
        Ok(Complex64::new(self.f64()?, self.f64()?))
    }

    fn dim(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| CalError::Format("dimension overflows usize".into()))
    }

    /// Validates the header and returns `(flags, d0, d1)`.
    fn header(&mut self, kind: ArtifactKind) -> Result<(u32, usize, usize)> {
        if self.take::<4>()? != MAGIC {
            return Err(CalError::Format("bad magic bytes".into()));
        }
        let version = self.u32()?;
        if version != FORMAT_VERSION {
            return Err(CalError::Version(version));
        }
        let code = self.u32()?;
        if code != kind.code() {
            return Err(CalError::Format(format!("payload kind code {code}, expected {}", kind.code())));
        }
        let flags = self.u32()?;
        Ok((flags, self.dim()?, self.dim()?))
    }

    /// Fails early when the declared sizes cannot fit in the buffer, so a
    /// corrupt header never triggers a huge allocation.
    fn expect_remaining(&self, bytes: Option<usize>) -> Result<()> {
        match bytes {
            Some(b) if b == self.buf.len() - self.pos => Ok(()),
            _ => Err(CalError::Format("payload length does not match its header".into())),
        }
    }
}

/// Sum of `bytes × d0 × d1` terms, `None` on overflow.
fn body_len(terms: &[(usize, usize, usize)]) -> Option<usize> {
    terms.iter().try_fold(0usize, |acc, &(a, b, c)| {
        acc.checked_add(a.checked_mul(b)?.checked_mul(c)?)
    })
}

/// Observations column by column, then per-sample `az, el` (radians),
/// distance (m) and SNR (dB), then the seed.
pub fn encode_measurements(m: &MeasurementSet) -> Vec<u8> {
    let (g, t) = m.observations.shape();
    let mut w = Writer::header(ArtifactKind::MeasurementSet, 0, g, t, 16 * g * t + 32 * t + 8);
    for z in m.observations.iter() {
        w.c64(*z);
    }
    for i in 0..t {
        w.f64(m.sample_angles[i].azimuth());
        w.f64(m.sample_angles[i].elevation());
        w.f64(m.distances[i]);
        w.f64(m.snr_db[i]);
    }
    w.u64(m.seed);
    w.0
}

pub fn decode_measurements(buf: &[u8]) -> Result<MeasurementSet> {
    let mut r = Reader { buf, pos: 0 };
    let (_, g, t) = r.header(ArtifactKind::MeasurementSet)?;
    r.expect_remaining(body_len(&[(16, g, t), (32, t, 1), (8, 1, 1)]))?;
    let mut obs = Vec::with_capacity(g * t);
    for _ in 0..g * t {
        obs.push(r.c64()?);
    }
    let mut sample_angles = Vec::with_capacity(t);
    let mut distances = Vec::with_capacity(t);
    let mut snr_db = Vec::with_capacity(t);
    for _ in 0..t {
        sample_angles.push(AngleDirection::new(r.f64()?, r.f64()?)?);
        distances.push(r.f64()?);
        snr_db.push(r.f64()?);
    }
    let seed = r.u64()?;
    Ok(MeasurementSet {
        observations: CMatrix::from_vec(g, t, obs),
        sample_angles,
        distances,
        snr_db,
        seed,
    })
}

/// Header flag 0 for per-element unit modulus, 1 for unit-norm codewords.
pub fn encode_codebook(cb: &Codebook) -> Vec<u8> {
    let (n, g) = cb.weights().shape();
    let flags = match cb.norm_mode() {
        NormMode::PerElementUnitModulus => 0,
        NormMode::PerCodewordUnitNorm => 1,
    };
    let mut w = Writer::header(ArtifactKind::Codebook, flags, n, g, 16 * n * g);
    for z in cb.weights().iter() {
        w.c64(*z);
    }
    w.0
}

pub fn decode_codebook(buf: &[u8]) -> Result<Codebook> {
    let mut r = Reader { buf, pos: 0 };
    let (flags, n, g) = r.header(ArtifactKind::Codebook)?;
    let mode = match flags {
        0 => NormMode::PerElementUnitModulus,
        1 => NormMode::PerCodewordUnitNorm,
        other => return Err(CalError::Format(format!("unknown norm flag {other}"))),
    };
    r.expect_remaining(body_len(&[(16, n, g)]))?;
    let mut data = Vec::with_capacity(n * g);
    for _ in 0..n * g {
        data.push(r.c64()?);
    }
    Codebook::new(CMatrix::from_vec(n, g, data), mode)
}

/// Reads only the two header dimensions.
pub fn peek_dims(buf: &[u8], kind: ArtifactKind) -> Result<(usize, usize)> {
    let mut r = Reader { buf, pos: 0 };
    let (_, d0, d1) = r.header(kind)?;
    Ok((d0, d1))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> MeasurementSet {
        let obs = CMatrix::from_fn(3, 2, |i, j| Complex64::new(i as f64 + 0.1, -(j as f64) / 3.0));
        MeasurementSet {
            observations: obs,
            sample_angles: vec![
                AngleDirection::new(0.1, 0.0).unwrap(),
                AngleDirection::new(-0.7, 0.2).unwrap(),
            ],
            distances: vec![10.0, 11.5],
            snr_db: vec![f64::INFINITY, 30.0],
            seed: 42,
        }
    }

    #[test]
    fn round_trip_and_layout() {
        let m = sample();
        let bytes = encode_measurements(&m);
        assert_eq!(bytes.len(), HEADER_LEN + 16 * 6 + 32 * 2 + 8);
        assert_eq!(&bytes[..4], b"BCAL");
        assert_eq!(u64::from_le_bytes(bytes[16..24].try_into().unwrap()), 3);
        assert_eq!(f64::from_le_bytes(bytes[32..40].try_into().unwrap()), 0.1);
        assert_eq!(decode_measurements(&bytes).unwrap(), m);
    }

    #[test]
    fn rejects_bad_headers() {
        let bytes = encode_measurements(&sample());
        assert!(matches!(decode_measurements(&bytes[..bytes.len() - 1]), Err(CalError::Format(_))));
        let mut v = bytes.clone();
        v[4] = 9;
        assert!(matches!(decode_measurements(&v), Err(CalError::Version(9))));
        let mut v = bytes.clone();
        v[16..24].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(decode_measurements(&v).is_err());
        assert!(decode_codebook(&bytes).is_err());
        assert!(decode_measurements(b"BC").is_err());
    }
}
