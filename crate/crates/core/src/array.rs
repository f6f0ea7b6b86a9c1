//! Array geometry and the beam-pattern forward model.
//!
//! A uniform planar array has `rows × cols` elements. Its steering vector is
//! the Kronecker product `a_c(az, el) ⊗ a_r(el)`, so element `n` sits at
//! column `n / rows`, row `n % rows`. A codebook stores one beamforming
//! vector per beam and the response of beam `g` towards direction `ϑ` is
//! `g(ϑ) · w_gᴴ a(ϑ)`.
//!
//! Codebooks are held as an `N × G` column-major matrix: codeword `g` is the
//! contiguous column `g`. In memory this is identical to a codeword-major
//! `G × N` row-major table, which is what the CSV format exposes.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, CalError, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Tolerance on codeword norms for [`NormMode::PerCodewordUnitNorm`].
pub const UNIT_NORM_TOL: f64 = 1e-9;

/// Departure direction in the boresight hemisphere (radians internally).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AngleDegrees", into = "AngleDegrees")]
pub struct AngleDirection {
    azimuth: f64,
    elevation: f64,
}

/// Wire form of an [`AngleDirection`]; files carry degrees.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AngleDegrees {
    pub az_deg: f64,
    pub el_deg: f64,
}

impl AngleDirection {
    pub fn new(azimuth: f64, elevation: f64) -> Result<Self> {
        let inside = |x: f64| x.is_finite() && x > -FRAC_PI_2 && x < FRAC_PI_2;
        if !inside(azimuth) || !inside(elevation) {
            return Err(CalError::Domain(format!(
                "direction ({azimuth}, {elevation}) rad is outside the open hemisphere"
            )));
        }
        Ok(Self { azimuth, elevation })
    }

    pub fn from_degrees(az_deg: f64, el_deg: f64) -> Result<Self> {
        Self::new(az_deg.to_radians(), el_deg.to_radians())
    }

    /// Boresight.
    pub fn zero() -> Self {
        Self {
            azimuth: 0.0,
            elevation: 0.0,
        }
    }

    pub fn azimuth(&self) -> f64 {
        self.azimuth
    }

    pub fn elevation(&self) -> f64 {
        self.elevation
    }

    pub fn azimuth_deg(&self) -> f64 {
        self.azimuth.to_degrees()
    }

    pub fn elevation_deg(&self) -> f64 {
        self.elevation.to_degrees()
    }

    /// Squared angular distance in degrees², as used by the angle-bias metric.
    pub fn sq_dist_deg(&self, other: &AngleDirection) -> f64 {
        let daz = self.azimuth_deg() - other.azimuth_deg();
        let del = self.elevation_deg() - other.elevation_deg();
        daz * daz + del * del
    }
}

impl TryFrom<AngleDegrees> for AngleDirection {
    type Error = CalError;

    fn try_from(value: AngleDegrees) -> Result<Self> {
        Self::from_degrees(value.az_deg, value.el_deg)
    }
}

impl From<AngleDirection> for AngleDegrees {
    fn from(value: AngleDirection) -> Self {
        AngleDegrees {
            az_deg: value.azimuth_deg(),
            el_deg: value.elevation_deg(),
        }
    }
}

/// Uniform planar array with `rows × cols` elements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GeometryRepr", into = "GeometryRepr")]
pub struct ArrayGeometry {
    rows: usize,
    cols: usize,
    spacing: f64,
}

#[derive(Serialize, Deserialize)]
struct GeometryRepr {
    rows: usize,
    cols: usize,
    #[serde(default = "default_spacing")]
    element_spacing: f64,
}

fn default_spacing() -> f64 {
    0.5
}

impl TryFrom<GeometryRepr> for ArrayGeometry {
    type Error = CalError;

    fn try_from(value: GeometryRepr) -> Result<Self> {
        Self::with_spacing(value.rows, value.cols, value.element_spacing)
    }
}

impl From<ArrayGeometry> for GeometryRepr {
    fn from(value: ArrayGeometry) -> Self {
        GeometryRepr {
            rows: value.rows,
            cols: value.cols,
            element_spacing: value.spacing,
        }
    }
}

impl ArrayGeometry {
    /// Half-wavelength spaced array.
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        Self::with_spacing(rows, cols, 0.5)
    }

    /// `spacing` is in wavelengths.
    pub fn with_spacing(rows: usize, cols: usize, spacing: f64) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(CalError::Domain(format!(
                "array must have at least one element, got {rows}x{cols}"
            )));
        }
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(CalError::Domain(format!(
                "element spacing must be positive, got {spacing}"
            )));
        }
        Ok(Self {
            rows,
            cols,
            spacing,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn n_elements(&self) -> usize {
        self.rows * self.cols
    }

    /// Linear array along the azimuth axis (single row).
    pub fn is_linear(&self) -> bool {
        self.rows == 1
    }

    pub fn steering_vector(&self, dir: &AngleDirection) -> CVector {
        let mut out = CVector::zeros(self.n_elements());
        self.steering_into(dir, out.as_mut_slice());
        out
    }

    /// Writes `a(dir)` into `out`, which must hold `N` entries.
    pub fn steering_into(&self, dir: &AngleDirection, out: &mut [Complex64]) {
        debug_assert_eq!(out.len(), self.n_elements());
        let k = 2.0 * PI * self.spacing;
        let (s_az, _) = dir.azimuth.sin_cos();
        let (s_el, c_el) = dir.elevation.sin_cos();
        let col_phase = k * s_az * c_el;
        let row_phase = k * s_el;
        for c in 0..self.cols {
            for r in 0..self.rows {
                let phase = col_phase * c as f64 + row_phase * r as f64;
                out[c * self.rows + r] = Complex64::from_polar(1.0, phase);
            }
        }
    }

    /// Steering matrix `A(Θ)` with one column per direction.
    pub fn steering_matrix(&self, dirs: &[AngleDirection]) -> CMatrix {
        let n = self.n_elements();
        let mut a = CMatrix::zeros(n, dirs.len());
        for (t, dir) in dirs.iter().enumerate() {
            let col = &mut a.as_mut_slice()[t * n..(t + 1) * n];
            self.steering_into(dir, col);
        }
        a
    }
}

/// Patch-antenna element gain `(cos θ_az · cos θ_el)^β`.
pub fn element_pattern(dir: &AngleDirection, beta: f64) -> Result<f64> {
    if !(beta.is_finite() && beta > 0.0) {
        return Err(CalError::Domain(format!(
            "directivity must be positive, got {beta}"
        )));
    }
    let base = (dir.azimuth.cos() * dir.elevation.cos()).max(0.0);
    Ok(base.powf(beta))
}

/// How codeword magnitudes are constrained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormMode {
    /// `|w_{g,n}| = 1`: the ideal steering-vector codebook.
    PerElementUnitModulus,
    /// `‖w_g‖₂ = 1`: the practical, calibrated codebook.
    PerCodewordUnitNorm,
}

/// A set of `G` beamforming vectors over `N` elements.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    weights: CMatrix,
    norm_mode: NormMode,
}

impl Codebook {
    /// Wraps an `N × G` matrix, checking the norm convention.
    pub fn new(weights: CMatrix, norm_mode: NormMode) -> Result<Self> {
        let cb = Self { weights, norm_mode };
        cb.validate()?;
        Ok(cb)
    }

    /// Normalises every column of `weights` to unit norm. Zero columns are
    /// rejected.
    pub fn normalized(mut weights: CMatrix) -> Result<Self> {
        for g in 0..weights.ncols() {
            let norm = weights.column(g).norm();
            if !(norm.is_finite() && norm > 0.0) {
                return Err(CalError::Numeric(format!(
                    "codeword {g} has norm {norm} and cannot be normalised"
                )));
            }
            weights.column_mut(g).unscale_mut(norm);
        }
        Ok(Self {
            weights,
            norm_mode: NormMode::PerCodewordUnitNorm,
        })
    }

    /// Builds from a codeword-major `G × N` table.
    pub fn from_codeword_major(table: &CMatrix, norm_mode: NormMode) -> Result<Self> {
        Self::new(table.transpose(), norm_mode)
    }

    pub fn to_codeword_major(&self) -> CMatrix {
        self.weights.transpose()
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(CalError::Numeric("codebook has non-finite entries".into()));
        }
        match self.norm_mode {
            NormMode::PerElementUnitModulus => {
                for (i, z) in self.weights.iter().enumerate() {
                    if (z.norm() - 1.0).abs() > UNIT_NORM_TOL {
                        return Err(CalError::Domain(format!(
                            "entry {i} has modulus {} in a unit-modulus codebook",
                            z.norm()
                        )));
                    }
                }
            }
            NormMode::PerCodewordUnitNorm => {
                for g in 0..self.weights.ncols() {
                    let norm = self.weights.column(g).norm();
                    if (norm - 1.0).abs() > UNIT_NORM_TOL {
                        return Err(CalError::Domain(format!(
                            "codeword {g} has norm {norm} in a unit-norm codebook"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// `N × G` weight matrix (the `W` of `WᴴA`).
    pub fn weights(&self) -> &CMatrix {
        &self.weights
    }

    pub fn into_weights(self) -> CMatrix {
        self.weights
    }

    pub fn norm_mode(&self) -> NormMode {
        self.norm_mode
    }

    pub fn n_codewords(&self) -> usize {
        self.weights.ncols()
    }

    pub fn n_elements(&self) -> usize {
        self.weights.nrows()
    }

    pub fn entry(&self, g: usize, n: usize) -> Complex64 {
        self.weights[(n, g)]
    }

    /// Same beams rescaled to unit norm.
    pub fn to_unit_norm(&self) -> Codebook {
        match self.norm_mode {
            NormMode::PerCodewordUnitNorm => self.clone(),
            // Unit-modulus columns have norm √N, never zero.
            NormMode::PerElementUnitModulus => {
                Codebook::normalized(self.weights.clone()).expect("unit-modulus columns are nonzero")
            }
        }
    }
}

/// Manufacturer beamforming directions, one per codeword.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BeamformingAngles(pub Vec<AngleDirection>);

impl BeamformingAngles {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Azimuth-only grid at zero elevation.
    pub fn azimuth_grid(az_deg: &[f64]) -> Result<Self> {
        az_deg
            .iter()
            .map(|&az| AngleDirection::from_degrees(az, 0.0))
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }

    /// Full azimuth × elevation grid, elevation-major.
    pub fn grid(az_deg: &[f64], el_deg: &[f64]) -> Result<Self> {
        let mut out = Vec::with_capacity(az_deg.len() * el_deg.len());
        for &el in el_deg {
            for &az in az_deg {
                out.push(AngleDirection::from_degrees(az, el)?);
            }
        }
        Ok(Self(out))
    }
}

/// Steering-vector codebook: codeword `g` equals `a(φ̄_g)`.
pub fn ideal_codebook(geom: &ArrayGeometry, angles: &BeamformingAngles) -> Codebook {
    Codebook {
        weights: geom.steering_matrix(&angles.0),
        norm_mode: NormMode::PerElementUnitModulus,
    }
}

/// `Wᴴ a` for one steering vector.
pub fn project(weights: &CMatrix, a: &CVector) -> CVector {
    weights.ad_mul(a)
}

/// Beam response `g(ϑ) · Wᴴ a(ϑ)`. Without `element_beta` the element
/// pattern is taken as unity, which is all angle estimation needs.
pub fn beam_response(
    cb: &Codebook,
    geom: &ArrayGeometry,
    dir: &AngleDirection,
    element_beta: Option<f64>,
) -> Result<CVector> {
    check_dim("beam_response", geom.n_elements(), cb.n_elements())?;
    let a = geom.steering_vector(dir);
    let mut b = project(&cb.weights, &a);
    if let Some(beta) = element_beta {
        b *= Complex64::from(element_pattern(dir, beta)?);
    }
    Ok(b)
}

/// Beam responses for several directions as a `G × S` matrix.
pub fn beam_responses(
    weights: &CMatrix,
    geom: &ArrayGeometry,
    dirs: &[AngleDirection],
) -> Result<CMatrix> {
    check_dim("beam_responses", geom.n_elements(), weights.nrows())?;
    Ok(weights.ad_mul(&geom.steering_matrix(dirs)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn deg(az: f64, el: f64) -> AngleDirection {
        AngleDirection::from_degrees(az, el).unwrap()
    }

    // Direct per-element phase accumulation, written independently of
    // `steering_into`.
    fn phase_oracle(rows: usize, cols: usize, d: f64, dir: &AngleDirection) -> Vec<Complex64> {
        let mut out = Vec::new();
        for c in 0..cols {
            for r in 0..rows {
                let x = c as f64 * d;
                let z = r as f64 * d;
                // Path difference projected on the direction cosines.
                let path = x * dir.azimuth().sin() * dir.elevation().cos() + z * dir.elevation().sin();
                out.push(Complex64::new(0.0, 2.0 * PI * path).exp());
            }
        }
        out
    }

    #[test]
    fn single_element_is_one() {
        let g = ArrayGeometry::new(1, 1).unwrap();
        let a = g.steering_vector(&deg(33.0, -12.0));
        assert_eq!(a.len(), 1);
        assert_abs_diff_eq!(a[0].re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(a[0].im, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn two_element_quarter_turn() {
        let g = ArrayGeometry::new(1, 2).unwrap();
        let a = g.steering_vector(&deg(30.0, 0.0));
        assert!((a[0] - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        assert!((a[1] - Complex64::new(0.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn planar_matches_phase_oracle() {
        for &d in &[0.5, 0.37] {
            let g = ArrayGeometry::with_spacing(4, 4, d).unwrap();
            let dir = deg(20.0, -10.0);
            let a = g.steering_vector(&dir);
            let o = phase_oracle(4, 4, d, &dir);
            let err = a.iter().zip(&o).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
            assert!(err < 1e-12, "spacing {d}: {err}");
        }
    }

    #[test]
    fn wrong_kronecker_order_is_detected() {
        let g = ArrayGeometry::new(2, 3).unwrap();
        let dir = deg(25.0, 15.0);
        let a = g.steering_vector(&dir);
        let o = phase_oracle(2, 3, 0.5, &dir);
        // Row-major (a_r ⊗ a_c) ordering of the same phases.
        let swapped: Vec<_> = (0..2)
            .flat_map(|r| (0..3).map(move |c| (r, c)))
            .map(|(r, c)| o[c * 2 + r])
            .collect();
        let err = a.iter().zip(&swapped).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        assert!(err > 1e-3);
    }

    #[test]
    fn boresight_all_ones_and_unit_modulus() {
        let g = ArrayGeometry::new(3, 5).unwrap();
        assert!(g.steering_vector(&AngleDirection::zero()).iter().all(|z| (z - Complex64::new(1.0, 0.0)).norm() < 1e-15));
        let a = g.steering_vector(&deg(-61.0, 44.0));
        assert!(a.iter().all(|z| (z.norm() - 1.0).abs() < 1e-14));
    }

    #[test]
    fn angle_domain_checks() {
        assert!(AngleDirection::from_degrees(90.0, 0.0).is_err());
        assert!(AngleDirection::from_degrees(0.0, -90.0).is_err());
        assert!(AngleDirection::new(f64::NAN, 0.0).is_err());
        assert!(AngleDirection::from_degrees(89.9, -89.9).is_ok());
    }

    #[test]
    fn element_pattern_values() {
        assert_abs_diff_eq!(element_pattern(&deg(0.0, 0.0), 3.3).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(element_pattern(&deg(60.0, 0.0), 1.0).unwrap(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(element_pattern(&deg(30.0, 30.0), 2.0).unwrap(), 0.5625, epsilon = 1e-12);
        assert!(element_pattern(&deg(0.0, 0.0), 0.0).is_err());
        assert!(element_pattern(&deg(0.0, 0.0), -1.0).is_err());
    }

    #[test]
    fn element_pattern_decreases_off_boresight() {
        let mut prev = 2.0;
        for k in 0..89 {
            let v = element_pattern(&deg(k as f64, 0.0), 1.7).unwrap();
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn ideal_codebook_rows_are_steering_vectors() {
        let g = ArrayGeometry::new(1, 16).unwrap();
        let az: Vec<f64> = (-5..=5).map(|k| 10.0 * k as f64).collect();
        let angles = BeamformingAngles::azimuth_grid(&az).unwrap();
        let cb = ideal_codebook(&g, &angles);
        assert_eq!((cb.n_codewords(), cb.n_elements()), (11, 16));
        for (gi, dir) in angles.0.iter().enumerate() {
            let a = g.steering_vector(dir);
            for n in 0..16 {
                assert!((cb.entry(gi, n) - a[n]).norm() < 1e-15);
            }
        }
        cb.validate().unwrap();

        let single = ideal_codebook(&g, &BeamformingAngles(vec![AngleDirection::zero()]));
        assert!(single.weights().iter().all(|z| (z - Complex64::new(1.0, 0.0)).norm() < 1e-15));
    }

    #[test]
    fn ideal_codebook_3d_grid_shape() {
        let g = ArrayGeometry::new(16, 16).unwrap();
        let az: Vec<f64> = (-5..=5).map(|k| 10.0 * k as f64).collect();
        let el: Vec<f64> = (-5..=0).map(|k| 10.0 * k as f64).collect();
        let cb = ideal_codebook(&g, &BeamformingAngles::grid(&az, &el).unwrap());
        assert_eq!(cb.to_codeword_major().shape(), (66, 256));
    }

    #[test]
    fn codeword_major_round_trip() {
        let g = ArrayGeometry::new(2, 3).unwrap();
        let angles = BeamformingAngles::azimuth_grid(&[-20.0, 5.0, 40.0, 60.0]).unwrap();
        let cb = ideal_codebook(&g, &angles).to_unit_norm();
        let table = cb.to_codeword_major();
        assert_eq!(table.shape(), (4, 6));
        assert_eq!(table[(2, 5)], cb.entry(2, 5));
        let back = Codebook::from_codeword_major(&table, NormMode::PerCodewordUnitNorm).unwrap();
        assert_eq!(back, cb);
    }

    #[test]
    fn matched_unit_codeword_attains_cauchy_schwarz() {
        let g = ArrayGeometry::new(2, 4).unwrap();
        let dir = deg(12.0, -7.0);
        let a = g.steering_vector(&dir);
        let cb = Codebook::normalized(CMatrix::from_column_slice(8, 1, a.as_slice())).unwrap();
        let b = beam_response(&cb, &g, &dir, None).unwrap();
        assert_abs_diff_eq!(b[0].norm(), a.norm(), epsilon = 1e-12);
    }

    #[test]
    fn ideal_codebook_peaks_at_own_direction() {
        let g = ArrayGeometry::new(1, 16).unwrap();
        let az: Vec<f64> = (-5..=5).map(|k| 10.0 * k as f64).collect();
        let angles = BeamformingAngles::azimuth_grid(&az).unwrap();
        let cb = ideal_codebook(&g, &angles);
        // Grid scan oracle over every beam: the strongest beam at φ̄_g is g.
        for (gi, dir) in angles.0.iter().enumerate() {
            let b = beam_response(&cb, &g, dir, None).unwrap();
            let best = (0..b.len())
                .max_by(|&i, &j| b[i].norm().partial_cmp(&b[j].norm()).unwrap())
                .unwrap();
            assert_eq!(best, gi);
        }
    }

    #[test]
    fn beam_response_matches_naive_loops() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let g = ArrayGeometry::new(3, 4).unwrap();
        let w = CMatrix::from_fn(12, 5, |_, _| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        let cb = Codebook::normalized(w).unwrap();
        let dir = deg(rng.random_range(-60.0..60.0), rng.random_range(-60.0..60.0));
        let a = g.steering_vector(&dir);
        let b = beam_response(&cb, &g, &dir, Some(1.3)).unwrap();
        let gain = element_pattern(&dir, 1.3).unwrap();
        for gi in 0..5 {
            let mut acc = Complex64::new(0.0, 0.0);
            for n in 0..12 {
                acc += cb.entry(gi, n).conj() * a[n];
            }
            assert!((b[gi] - acc * gain).norm() < 1e-12);
        }
    }

    #[test]
    fn beam_response_conjugate_linear_in_codebook() {
        let g = ArrayGeometry::new(2, 2).unwrap();
        let angles = BeamformingAngles::azimuth_grid(&[-10.0, 25.0]).unwrap();
        let cb = ideal_codebook(&g, &angles).to_unit_norm();
        let c = Complex64::new(0.3, -1.7);
        let scaled = CMatrix::from_iterator(4, 2, cb.weights().iter().map(|z| z * c));
        let dir = deg(7.0, 3.0);
        let a = g.steering_vector(&dir);
        let b0 = project(cb.weights(), &a);
        let b1 = project(&scaled, &a);
        for i in 0..2 {
            assert!((b1[i] - c.conj() * b0[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let g = ArrayGeometry::new(1, 4).unwrap();
        let cb = ideal_codebook(&ArrayGeometry::new(1, 3).unwrap(), &BeamformingAngles(vec![AngleDirection::zero()]));
        assert!(matches!(
            beam_response(&cb, &g, &AngleDirection::zero(), None),
            Err(CalError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn unit_norm_violation_rejected() {
        let w = CMatrix::from_element(3, 2, Complex64::new(1.0, 0.0));
        assert!(Codebook::new(w.clone(), NormMode::PerCodewordUnitNorm).is_err());
        assert!(Codebook::new(w, NormMode::PerElementUnitModulus).is_ok());
    }
}
