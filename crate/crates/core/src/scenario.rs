//! Synthetic ground truth: perturbed codebooks and multipath pilot
//! observations after LOS de-rotation and subcarrier combining.
//!
//! Subcarrier combining averages over the `K` subcarriers, so the LOS term
//! carries the free-space gain unchanged and a thermal noise variance of
//! `σ_n²` per subcarrier becomes `σ_n² / K` per combined entry.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::array::{
    element_pattern, ArrayGeometry, AngleDirection, BeamformingAngles, CMatrix, CVector, Codebook,
    NormMode,
};
use crate::error::{check_dim, CalError, Result};

/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Smallest UE-to-scatterer distance used in the two-hop gain. Scattering
/// points closer than this are treated as being at this range.
pub const MIN_SCATTER_RANGE: f64 = 1.0;

pub type Position = [f64; 3];

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

fn sub(a: &Position, b: &Position) -> Position {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn norm3(v: &Position) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Departure direction and range from an array at `from` (boresight +x,
/// columns along +y, rows along +z) towards `to`.
pub fn direction_between(from: &Position, to: &Position) -> Result<(AngleDirection, f64)> {
    let d = sub(to, from);
    let r = norm3(&d);
    if !(r > 0.0) {
        return Err(CalError::Geometry("target coincides with the array".into()));
    }
    if d[0] <= 0.0 {
        return Err(CalError::Geometry(format!(
            "target at {to:?} is behind the array plane"
        )));
    }
    let az = d[1].atan2(d[0]);
    let el = d[2].atan2(d[0].hypot(d[1]));
    Ok((AngleDirection::new(az, el)?, r))
}

/// Point scatterer with radar cross-section coefficient `rcs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scatterer {
    pub position: Position,
    pub rcs: f64,
}

/// Receiver noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModel {
    /// Per-subcarrier thermal variance `σ_n²` in watts.
    Thermal { variance_w: f64 },
    /// A single variance chosen so the mean per-sample SNR equals `snr_db`.
    AverageSnr { snr_db: f64 },
}

impl NoiseModel {
    pub fn noiseless() -> Self {
        NoiseModel::Thermal { variance_w: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKind {
    AdditiveGaussian,
    PhaseQuantization,
    Both,
}

/// Hardware impairment `Δ_W` applied to an ideal codebook.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub kind: PerturbationKind,
    #[serde(default)]
    pub additive_sigma: f64,
    #[serde(default = "default_bits")]
    pub phase_bits: u32,
}

fn default_bits() -> u32 {
    2
}

impl PerturbationSpec {
    pub fn none() -> Self {
        Self {
            kind: PerturbationKind::AdditiveGaussian,
            additive_sigma: 0.0,
            phase_bits: 2,
        }
    }

    fn quantizes(&self) -> bool {
        matches!(self.kind, PerturbationKind::PhaseQuantization | PerturbationKind::Both)
    }

    fn adds_noise(&self) -> bool {
        matches!(self.kind, PerturbationKind::AdditiveGaussian | PerturbationKind::Both)
    }

    pub fn validate(&self) -> Result<()> {
        if self.quantizes() && self.phase_bits == 0 {
            return Err(CalError::Config("phase_bits must be at least 1".into()));
        }
        if !(self.additive_sigma.is_finite() && self.additive_sigma >= 0.0) {
            return Err(CalError::Config(format!(
                "additive_sigma must be non-negative, got {}",
                self.additive_sigma
            )));
        }
        Ok(())
    }
}

fn complex_normal<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(s * re, s * im)
}

/// Phase of `z` rounded to the nearest of `2^bits` levels, unit magnitude.
pub fn quantize_phase(z: Complex64, bits: u32) -> Complex64 {
    let levels = (1u64 << bits) as f64;
    let step = 2.0 * PI / levels;
    let q = (z.arg() / step).round() * step;
    Complex64::from_polar(1.0, q)
}

/// Applies `spec` to an ideal unit-modulus codebook and renormalises each
/// codeword. Output depends only on `(ideal, spec, seed)`.
pub fn perturb_codebook(ideal: &Codebook, spec: &PerturbationSpec, seed: u64) -> Result<Codebook> {
    spec.validate()?;
    if ideal.norm_mode() != NormMode::PerElementUnitModulus {
        return Err(CalError::Domain(
            "perturbation expects an ideal unit-modulus codebook".into(),
        ));
    }
    let mut w = ideal.weights().clone();
    if spec.quantizes() {
        w.apply(|z| *z = quantize_phase(*z, spec.phase_bits));
    }
    if spec.adds_noise() && spec.additive_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let var = spec.additive_sigma * spec.additive_sigma;
        // Column-major walk: codeword by codeword.
        for z in w.iter_mut() {
            *z += complex_normal(&mut rng, var);
        }
    }
    Codebook::normalized(w)
}

/// Free-space LOS gain `√P · λ / (4π r) · e^{jφ}` with `P` in watts.
pub fn los_gain(tx_power_w: f64, wavelength: f64, distance: f64, phase: f64) -> Result<Complex64> {
    if !(distance > 0.0) {
        return Err(CalError::Domain(format!("distance must be positive, got {distance}")));
    }
    if !(tx_power_w >= 0.0) {
        return Err(CalError::Domain(format!("transmit power must be non-negative, got {tx_power_w}")));
    }
    let mag = tx_power_w.sqrt() * wavelength / (4.0 * PI * distance);
    Ok(Complex64::from_polar(mag, phase))
}

/// Two-hop scatterer gain `√P · c/√(4π) · λ / (4π r₁ r₂) · e^{jφ}`.
pub fn scatter_gain(
    tx_power_w: f64,
    wavelength: f64,
    rcs: f64,
    r_bs: f64,
    r_ue: f64,
    phase: f64,
) -> Complex64 {
    let r_ue = r_ue.max(MIN_SCATTER_RANGE);
    let mag = tx_power_w.sqrt() * rcs / (4.0 * PI).sqrt() * wavelength / (4.0 * PI * r_bs * r_ue);
    Complex64::from_polar(mag, phase)
}

/// Residual of the subcarrier phase ramp after de-rotating by the LOS delay
/// and averaging: `(1/K) Σ_k e^{j2πkΔ_f δτ}`. Equals one when `δτ = 0`.
pub fn derotation_factor(subcarriers: usize, spacing_hz: f64, delay_offset_s: f64) -> Complex64 {
    let step = 2.0 * PI * spacing_hz * delay_offset_s;
    let sum: Complex64 = (0..subcarriers)
        .map(|k| Complex64::from_polar(1.0, step * k as f64))
        .sum();
    sum / subcarriers as f64
}

/// Full synthetic world for one UE.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub geom: ArrayGeometry,
    pub true_codebook: Codebook,
    pub nominal_angles: BeamformingAngles,
    /// Carrier wavelength in metres.
    pub wavelength: f64,
    pub tx_power_dbm: f64,
    pub noise: NoiseModel,
    pub subcarriers: usize,
    pub subcarrier_spacing_hz: f64,
    pub bs_position: Position,
    pub ue_trajectory: Vec<Position>,
    pub scatterers: Vec<Scatterer>,
    /// Directivity of the true element pattern.
    pub element_beta: f64,
    pub rng_seed: u64,
}

/// Pilot observations after combining, ready for calibration.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    /// `G × T` observations.
    pub observations: CMatrix,
    pub sample_angles: Vec<AngleDirection>,
    /// BS–UE distance per sample, metres.
    pub distances: Vec<f64>,
    /// Per-sample SNR in dB; infinite when noiseless.
    pub snr_db: Vec<f64>,
    pub seed: u64,
}

impl MeasurementSet {
    pub fn n_beams(&self) -> usize {
        self.observations.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.observations.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.observations.ncols();
        check_dim("measurement angles", t, self.sample_angles.len())?;
        check_dim("measurement distances", t, self.distances.len())?;
        check_dim("measurement snr", t, self.snr_db.len())?;
        Ok(())
    }

    /// Keeps the listed columns, in order.
    pub fn subset(&self, indices: &[usize]) -> MeasurementSet {
        let obs = self.observations.select_columns(indices.iter());
        MeasurementSet {
            observations: obs,
            sample_angles: indices.iter().map(|&i| self.sample_angles[i]).collect(),
            distances: indices.iter().map(|&i| self.distances[i]).collect(),
            snr_db: indices.iter().map(|&i| self.snr_db[i]).collect(),
            seed: self.seed,
        }
    }
}

/// Per-sample random stream, independent of how samples are scheduled.
fn sample_rng(seed: u64, t: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(t as u64 + 1);
    rng
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.ue_trajectory.is_empty() {
            return Err(CalError::Config("trajectory must contain at least one position".into()));
        }
        if self.subcarriers == 0 {
            return Err(CalError::Config("at least one subcarrier is required".into()));
        }
        check_dim("scenario codebook", self.geom.n_elements(), self.true_codebook.n_elements())?;
        check_dim("scenario beams", self.true_codebook.n_codewords(), self.nominal_angles.len())?;
        match self.noise {
            NoiseModel::Thermal { variance_w } if !(variance_w >= 0.0) => {
                return Err(CalError::Config(format!("noise variance must be >= 0, got {variance_w}")))
            }
            NoiseModel::AverageSnr { snr_db } if !snr_db.is_finite() => {
                return Err(CalError::Config("snr_db must be finite".into()))
            }
            _ => {}
        }
        for p in &self.ue_trajectory {
            direction_between(&self.bs_position, p)?;
        }
        for s in &self.scatterers {
            if !(s.rcs >= 0.0) {
                return Err(CalError::Config(format!("rcs must be >= 0, got {}", s.rcs)));
            }
            direction_between(&self.bs_position, &s.position)?;
        }
        Ok(())
    }

    pub fn tx_power_w(&self) -> f64 {
        dbm_to_watts(self.tx_power_dbm)
    }

    /// Angle and range of every trajectory point.
    pub fn sample_geometry(&self) -> Result<Vec<(AngleDirection, f64)>> {
        self.ue_trajectory
            .iter()
            .map(|p| direction_between(&self.bs_position, p))
            .collect()
    }

    /// Per-entry LOS signal power of every sample, `|γ_t|² ‖b_t‖² / G`.
    fn los_signal_power(&self) -> Result<Vec<f64>> {
        let g = self.true_codebook.n_codewords() as f64;
        let p = self.tx_power_w();
        self.sample_geometry()?
            .iter()
            .map(|(dir, r)| {
                let gamma = los_gain(p, self.wavelength, *r, 0.0)? * element_pattern(dir, self.element_beta)?;
                let b = self.true_codebook.weights().ad_mul(&self.geom.steering_vector(dir));
                Ok(gamma.norm_sqr() * b.norm_squared() / g)
            })
            .collect()
    }

    /// Thermal noise model giving the same noise draws at the current
    /// transmit power. Holding it fixed while the power changes keeps the
    /// noise floor put.
    pub fn thermal_equivalent(&self) -> Result<NoiseModel> {
        match self.noise {
            NoiseModel::Thermal { .. } => Ok(self.noise),
            NoiseModel::AverageSnr { snr_db } => {
                let power = self.los_signal_power()?;
                if power.is_empty() {
                    return Err(CalError::Domain("trajectory is empty".into()));
                }
                let mean = power.iter().sum::<f64>() / power.len() as f64;
                Ok(NoiseModel::Thermal {
                    variance_w: mean / 10f64.powf(snr_db / 10.0) * self.subcarriers as f64,
                })
            }
        }
    }

    /// Noise-free true beam response including the element pattern.
    pub fn true_response(&self, dir: &AngleDirection) -> Result<CVector> {
        crate::array::beam_response(&self.true_codebook, &self.geom, dir, Some(self.element_beta))
    }

    /// Combined NLOS contribution at sample `t`, with the scatterer phases
    /// drawn from `phases` (one per scatterer).
    pub fn nlos_residual_with_phases(&self, t: usize, phases: &[f64]) -> Result<CVector> {
        let g = self.true_codebook.n_codewords();
        let mut out = CVector::zeros(g);
        if self.scatterers.is_empty() {
            return Ok(out);
        }
        let ue = self.ue_trajectory.get(t).ok_or_else(|| {
            CalError::Domain(format!("sample index {t} out of range"))
        })?;
        let r0 = norm3(&sub(ue, &self.bs_position));
        let p = self.tx_power_w();
        for (s, &phase) in self.scatterers.iter().zip(phases) {
            let (dir, r1) = direction_between(&self.bs_position, &s.position)?;
            let r2 = norm3(&sub(ue, &s.position));
            let alpha = scatter_gain(p, self.wavelength, s.rcs, r1, r2, phase);
            let excess = (r1 + r2 - r0) / SPEED_OF_LIGHT;
            let d = derotation_factor(self.subcarriers, self.subcarrier_spacing_hz, excess);
            let b = self.true_response(&dir)?;
            out.axpy(alpha * d, &b, Complex64::new(1.0, 0.0));
        }
        Ok(out)
    }

    /// NLOS residual at sample `t` using the same phase draws as
    /// [`generate_measurements`].
    pub fn nlos_residual(&self, t: usize) -> Result<CVector> {
        let mut rng = sample_rng(self.rng_seed, t);
        let _los_phase: f64 = rng.random_range(0.0..2.0 * PI);
        let phases: Vec<f64> = (0..self.scatterers.len())
            .map(|_| rng.random_range(0.0..2.0 * PI))
            .collect();
        self.nlos_residual_with_phases(t, &phases)
    }
}

/// Synthesises `Y = Wᴴ A Γ + NLOS + N` for the scenario trajectory.
pub fn generate_measurements(scenario: &Scenario) -> Result<MeasurementSet> {
    scenario.validate()?;
    let geo = scenario.sample_geometry()?;
    let t_len = geo.len();
    let g = scenario.true_codebook.n_codewords();
    let p = scenario.tx_power_w();
    let w = scenario.true_codebook.weights();

    let mut clean = CMatrix::zeros(g, t_len);
    let mut signal_power = vec![0.0; t_len];
    let mut rngs = Vec::with_capacity(t_len);
    for (t, (dir, r)) in geo.iter().enumerate() {
        let mut rng = sample_rng(scenario.rng_seed, t);
        let los_phase: f64 = rng.random_range(0.0..2.0 * PI);
        let phases: Vec<f64> = (0..scenario.scatterers.len())
            .map(|_| rng.random_range(0.0..2.0 * PI))
            .collect();
        let gamma = los_gain(p, scenario.wavelength, *r, los_phase)?
            * element_pattern(dir, scenario.element_beta)?;
        let a = scenario.geom.steering_vector(dir);
        let b = w.ad_mul(&a);
        signal_power[t] = gamma.norm_sqr() * b.norm_squared() / g as f64;
        let mut y = b * gamma;
        if !scenario.scatterers.is_empty() {
            y += scenario.nlos_residual_with_phases(t, &phases)?;
        }
        clean.set_column(t, &y);
        rngs.push(rng);
    }

    let noise_var = match scenario.noise {
        NoiseModel::Thermal { variance_w } => variance_w / scenario.subcarriers as f64,
        NoiseModel::AverageSnr { snr_db } => {
            let mean = signal_power.iter().sum::<f64>() / t_len as f64;
            mean / 10f64.powf(snr_db / 10.0)
        }
    };
    if noise_var > 0.0 {
        for (t, rng) in rngs.iter_mut().enumerate() {
            for gi in 0..g {
                clean[(gi, t)] += complex_normal(rng, noise_var);
            }
        }
    }
    let snr_db = signal_power
        .iter()
        .map(|&s| {
            if noise_var > 0.0 {
                10.0 * (s / noise_var).log10()
            } else {
                f64::INFINITY
            }
        })
        .collect();

    Ok(MeasurementSet {
        observations: clean,
        sample_angles: geo.iter().map(|(d, _)| *d).collect(),
        distances: geo.iter().map(|(_, r)| *r).collect(),
        snr_db,
        seed: scenario.rng_seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::ideal_codebook;

    fn line_scenario(noise: NoiseModel, scatterers: Vec<Scatterer>, seed: u64) -> Scenario {
        let geom = ArrayGeometry::new(1, 8).unwrap();
        let angles = BeamformingAngles::azimuth_grid(&[-40.0, -20.0, 0.0, 20.0, 40.0]).unwrap();
        let ideal = ideal_codebook(&geom, &angles);
        let spec = PerturbationSpec {
            kind: PerturbationKind::Both,
            additive_sigma: 0.2,
            phase_bits: 2,
        };
        let true_codebook = perturb_codebook(&ideal, &spec, 3).unwrap();
        let ue_trajectory = (0..41).map(|i| [10.0, -20.0 + i as f64, 0.0]).collect();
        Scenario {
            geom,
            true_codebook,
            nominal_angles: angles,
            wavelength: 0.06,
            tx_power_dbm: 15.0,
            noise,
            subcarriers: 32,
            subcarrier_spacing_hz: 1.0e6,
            bs_position: [0.0; 3],
            ue_trajectory,
            scatterers,
            element_beta: 1.5,
            rng_seed: seed,
        }
    }

    #[test]
    fn unperturbed_codebook_is_row_normalised_ideal() {
        let geom = ArrayGeometry::new(2, 3).unwrap();
        let angles = BeamformingAngles::azimuth_grid(&[-10.0, 30.0]).unwrap();
        let ideal = ideal_codebook(&geom, &angles);
        let out = perturb_codebook(&ideal, &PerturbationSpec::none(), 1).unwrap();
        assert_eq!(out.norm_mode(), NormMode::PerCodewordUnitNorm);
        let expect = ideal.to_unit_norm();
        assert!((out.weights() - expect.weights()).norm() < 1e-14);
    }

    #[test]
    fn two_bit_quantisation_levels() {
        let geom = ArrayGeometry::new(1, 16).unwrap();
        let angles = BeamformingAngles::azimuth_grid(&[-50.0, -13.0, 0.0, 27.0]).unwrap();
        let ideal = ideal_codebook(&geom, &angles);
        let spec = PerturbationSpec {
            kind: PerturbationKind::PhaseQuantization,
            additive_sigma: 0.0,
            phase_bits: 2,
        };
        let out = perturb_codebook(&ideal, &spec, 0).unwrap();
        for z in out.weights().iter() {
            let deg = z.arg().to_degrees().rem_euclid(360.0);
            let nearest = (deg / 90.0).round() * 90.0;
            assert!((deg - nearest).abs() < 1e-9, "phase {deg}");
            assert!((z.norm() - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_bits_rejected() {
        let geom = ArrayGeometry::new(1, 2).unwrap();
        let ideal = ideal_codebook(&geom, &BeamformingAngles(vec![AngleDirection::zero()]));
        let spec = PerturbationSpec {
            kind: PerturbationKind::PhaseQuantization,
            additive_sigma: 0.0,
            phase_bits: 0,
        };
        assert!(perturb_codebook(&ideal, &spec, 0).is_err());
        let not_ideal = ideal.to_unit_norm();
        assert!(perturb_codebook(&not_ideal, &PerturbationSpec::none(), 0).is_err());
    }

    #[test]
    fn perturbation_is_seed_deterministic() {
        let geom = ArrayGeometry::new(1, 16).unwrap();
        let ideal = ideal_codebook(&geom, &BeamformingAngles::azimuth_grid(&[0.0, 10.0]).unwrap());
        let spec = PerturbationSpec {
            kind: PerturbationKind::AdditiveGaussian,
            additive_sigma: 0.3,
            phase_bits: 2,
        };
        let a = perturb_codebook(&ideal, &spec, 7).unwrap();
        let b = perturb_codebook(&ideal, &spec, 7).unwrap();
        let c = perturb_codebook(&ideal, &spec, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn los_gain_free_space() {
        let p = dbm_to_watts(15.0);
        let g1 = los_gain(p, 0.06, 10.0, 0.4).unwrap();
        let expect = p.sqrt() * 0.06 / (4.0 * PI * 10.0);
        assert!((g1.norm() - expect).abs() / expect < 1e-12);
        assert!((g1.arg() - 0.4).abs() < 1e-12);
        let g2 = los_gain(p, 0.06, 20.0, 0.4).unwrap();
        assert!((g2.norm() * 2.0 - g1.norm()).abs() < 1e-15);
        assert_eq!(los_gain(0.0, 0.06, 10.0, 1.0).unwrap().norm(), 0.0);
        assert!(los_gain(p, 0.06, 0.0, 0.0).is_err());
        assert!(los_gain(p, 0.06, -1.0, 0.0).is_err());
    }

    #[test]
    fn derotation_factor_bounds() {
        assert!((derotation_factor(64, 1e6, 0.0) - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        // Geometric-series closed form |sin(Kx/2) / (K sin(x/2))|.
        for &(k, df, dt) in &[(64usize, 1.25e6, 40e-9), (128, 2e6, 3e-7), (16, 5e5, 1e-8)] {
            let x = 2.0 * PI * df * dt;
            let closed = ((k as f64 * x / 2.0).sin() / (k as f64 * (x / 2.0).sin())).abs();
            let f = derotation_factor(k, df, dt).norm();
            assert!((f - closed).abs() < 1e-12);
            assert!(f <= 1.0 + 1e-12);
        }
        // Large delay-bandwidth product suppresses the path.
        assert!(derotation_factor(256, 1.5e6, 1.03e-6).norm() < 0.05);
    }

    #[test]
    fn noiseless_los_matches_compact_model() {
        let sc = line_scenario(NoiseModel::noiseless(), vec![], 5);
        let m = generate_measurements(&sc).unwrap();
        assert_eq!(m.n_samples(), 41);
        assert!(m.snr_db.iter().all(|s| s.is_infinite()));
        // Y = Wᴴ A Γ column by column with Γ recomputed from geometry.
        let a = sc.geom.steering_matrix(&m.sample_angles);
        let wa = sc.true_codebook.weights().ad_mul(&a);
        for t in 0..m.n_samples() {
            let col = m.observations.column(t);
            let b = wa.column(t);
            let gamma = b.dotc(&col) / b.dotc(&b);
            let expect_mag = dbm_to_watts(15.0).sqrt() * 0.06 / (4.0 * PI * m.distances[t])
                * element_pattern(&m.sample_angles[t], 1.5).unwrap();
            assert!((gamma.norm() - expect_mag).abs() / expect_mag < 1e-12);
            let resid = (col - b * gamma).norm();
            assert!(resid < 1e-12 * col.norm());
        }
    }

    #[test]
    fn measurements_are_seed_deterministic() {
        let scat = vec![Scatterer { position: [12.0, 3.0, 0.0], rcs: 2.0 }];
        let sc = line_scenario(NoiseModel::AverageSnr { snr_db: 20.0 }, scat, 9);
        let a = generate_measurements(&sc).unwrap();
        let b = generate_measurements(&sc).unwrap();
        assert_eq!(a, b);
        let mut sc2 = sc.clone();
        sc2.rng_seed = 10;
        assert_ne!(a.observations, generate_measurements(&sc2).unwrap().observations);
    }

    #[test]
    fn average_snr_is_exact() {
        let sc = line_scenario(NoiseModel::AverageSnr { snr_db: 35.0 }, vec![], 1);
        let m = generate_measurements(&sc).unwrap();
        let mean_lin: f64 = m.snr_db.iter().map(|s| 10f64.powf(s / 10.0)).sum::<f64>() / m.snr_db.len() as f64;
        assert!((10.0 * mean_lin.log10() - 35.0).abs() < 1e-9);
    }

    #[test]
    fn thermal_equivalent_matches_average_snr() {
        let sc = line_scenario(NoiseModel::AverageSnr { snr_db: 25.0 }, vec![], 3);
        let a = generate_measurements(&sc).unwrap();
        let mut th = sc.clone();
        th.noise = sc.thermal_equivalent().unwrap();
        assert!(matches!(th.noise, NoiseModel::Thermal { .. }));
        let b = generate_measurements(&th).unwrap();
        assert!((&a.observations - &b.observations).norm() < 1e-12 * a.observations.norm());
    }

    #[test]
    fn tx_power_sweep_raises_snr_linearly() {
        let var = 1e-12;
        let mut prev: Option<Vec<f64>> = None;
        for p in [-5.0, 30.0] {
            let mut sc = line_scenario(NoiseModel::Thermal { variance_w: var }, vec![], 2);
            sc.tx_power_dbm = p;
            let m = generate_measurements(&sc).unwrap();
            if let Some(low) = prev.take() {
                for (hi, lo) in m.snr_db.iter().zip(&low) {
                    assert!((hi - lo - 35.0).abs() < 1e-9);
                }
            } else {
                prev = Some(m.snr_db);
            }
        }
    }

    #[test]
    fn nlos_residual_cases() {
        let sc = line_scenario(NoiseModel::noiseless(), vec![], 1);
        assert!(sc.nlos_residual(3).unwrap().iter().all(|z| z.norm() == 0.0));

        let scat = vec![Scatterer { position: [15.0, -5.0, 0.0], rcs: 10.0 }];
        let sc = line_scenario(NoiseModel::noiseless(), scat, 4);
        let m = generate_measurements(&sc).unwrap();
        // Observations minus the LOS fit recompute the residual.
        let t = 7;
        let nlos = sc.nlos_residual(t).unwrap();
        assert!(nlos.norm() > 0.0);
        let los = m.observations.column(t) - &nlos;
        let b = sc.true_codebook.weights().ad_mul(&sc.geom.steering_vector(&m.sample_angles[t]));
        let gamma = b.dotc(&los) / b.dotc(&b);
        assert!((los - b * gamma).norm() < 1e-12 * m.observations.column(t).norm());
    }

    #[test]
    fn ue_at_bs_is_degenerate() {
        let mut sc = line_scenario(NoiseModel::noiseless(), vec![], 1);
        sc.ue_trajectory.push([0.0, 0.0, 0.0]);
        assert!(matches!(generate_measurements(&sc), Err(CalError::Geometry(_))));
    }

    #[test]
    fn direction_from_geometry() {
        let (dir, r) = direction_between(&[0.0; 3], &[10.0, 30.0, 0.0]).unwrap();
        assert!((dir.azimuth_deg() - 71.565_051_177_077_99).abs() < 1e-9);
        assert!((r - 1000f64.sqrt()).abs() < 1e-12);
    }
}
