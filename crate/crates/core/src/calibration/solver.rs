use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::{rel_gradient_w, rel_loss, update_gamma_closed_form, AelContext};
use super::trust_region::update_w_trust_region;
use super::{AnchorSpec, CalibrationModel, CalibrationState, LossKind, LossRecord, Method, SolverConfig};
use crate::array::{element_pattern, ArrayGeometry, AngleDirection, BeamformingAngles, CMatrix, Codebook};
use crate::error::{check_dim, CalError, Result};
use crate::estimation::grid_points;
use crate::scenario::MeasurementSet;

const BETA_RANGE: (f64, f64) = (0.0, 20.0);
const BETA_TOL: f64 = 1e-6;
const PATTERN_START_DEG: f64 = 1.0;
const PATTERN_END_DEG: f64 = 0.01;

/// Snapshot handed to observers after every accepted iteration. Gains are on
/// the normalised data scale.
#[derive(Debug)]
pub struct IterationView<'a> {
    pub iteration: usize,
    pub weights: &'a CMatrix,
    pub gains: &'a [Complex64],
    pub loss: f64,
    pub kind: LossKind,
}

/// Nearest measurement sample to every anchor grid point, deduplicated in
/// grid order.
pub fn resolve_anchors(sample_angles: &[AngleDirection], spec: &AnchorSpec) -> Result<Vec<usize>> {
    if sample_angles.is_empty() {
        return Err(CalError::Domain("no samples to anchor on".into()));
    }
    match spec {
        AnchorSpec::Explicit { indices } => {
            if indices.is_empty() {
                return Err(CalError::Config("explicit anchor list is empty".into()));
            }
            if let Some(&bad) = indices.iter().find(|&&i| i >= sample_angles.len()) {
                return Err(CalError::Config(format!("anchor index {bad} out of range")));
            }
            Ok(indices.clone())
        }
        AnchorSpec::Grid {
            az_range_deg,
            el_range_deg,
            step_deg,
            el_step_deg,
        } => {
            if !(*step_deg > 0.0) {
                return Err(CalError::Config("anchor step must be positive".into()));
            }
            let az = grid_points(az_range_deg.0, az_range_deg.1, *step_deg);
            let el = match el_step_deg {
                Some(s) => grid_points(el_range_deg.0, el_range_deg.1, *s),
                None => vec![el_range_deg.0],
            };
            let mut out: Vec<usize> = Vec::new();
            for &e in &el {
                for &a in &az {
                    let target = AngleDirection::from_degrees(a, e)?;
                    let best = sample_angles
                        .iter()
                        .enumerate()
                        .min_by(|x, y| {
                            x.1.sq_dist_deg(&target).total_cmp(&y.1.sq_dist_deg(&target))
                        })
                        .map(|(i, _)| i)
                        .expect("non-empty");
                    if !out.contains(&best) {
                        out.push(best);
                    }
                }
            }
            Ok(out)
        }
    }
}

/// Ideal codebook (unit norm) at the nominal angles with closed-form gains.
pub fn initial_state(
    meas: &MeasurementSet,
    geom: &ArrayGeometry,
    nominal: &BeamformingAngles,
) -> Result<CalibrationState> {
    meas.validate()?;
    check_dim("nominal angles vs beams", meas.n_beams(), nominal.len())?;
    let cb = Codebook::normalized(geom.steering_matrix(&nominal.0))?;
    let a = geom.steering_matrix(&meas.sample_angles);
    let gains = update_gamma_closed_form(&meas.observations, cb.weights(), &a)?.gains;
    let loss = rel_loss(&meas.observations, cb.weights(), &gains, &a)?;
    Ok(CalibrationState {
        model: CalibrationModel::M1,
        method: None,
        codebook: cb,
        gains,
        beamforming_angles: Some(nominal.clone()),
        beta: None,
        data_scale: 1.0,
        loss_trace: vec![LossRecord {
            iteration: 0,
            value: loss,
            kind: LossKind::Rel,
        }],
        converged: true,
    })
}

/// Runs one calibration model from `init`.
pub fn calibrate(
    meas: &MeasurementSet,
    geom: &ArrayGeometry,
    model: CalibrationModel,
    init: &CalibrationState,
    cfg: &SolverConfig,
) -> Result<CalibrationState> {
    calibrate_observed(meas, geom, model, init, cfg, &mut |_| {})
}

/// Fits `M4` by response-error descent, then refines by angle-error descent
/// from the result. Returns both states.
pub fn calibrate_rel_then_ael(
    meas: &MeasurementSet,
    geom: &ArrayGeometry,
    init: &CalibrationState,
    rel_cfg: &SolverConfig,
    ael_cfg: &SolverConfig,
) -> Result<(CalibrationState, CalibrationState)> {
    let rel = calibrate(meas, geom, CalibrationModel::M4, init, rel_cfg)?;
    let ael = calibrate(meas, geom, CalibrationModel::M4, &rel, ael_cfg)?;
    Ok((rel, ael))
}

/// As [`calibrate`], calling `observer` after every iteration.
pub fn calibrate_observed(
    meas: &MeasurementSet,
    geom: &ArrayGeometry,
    model: CalibrationModel,
    init: &CalibrationState,
    cfg: &SolverConfig,
    observer: &mut dyn FnMut(&IterationView<'_>),
) -> Result<CalibrationState> {
    cfg.validate()?;
    meas.validate()?;
    check_dim("initial codebook elements", geom.n_elements(), init.codebook.n_elements())?;
    check_dim("initial codebook beams", meas.n_beams(), init.codebook.n_codewords())?;
    check_dim("initial gains", meas.n_samples(), init.gains.len())?;
    if meas.observations.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(CalError::Numeric("observations contain non-finite values".into()));
    }

    let t_len = meas.n_samples() as f64;
    let scale = if cfg.normalize_data {
        let s = (meas.observations.norm_squared() / t_len).sqrt();
        if s > 0.0 {
            s
        } else {
            1.0
        }
    } else {
        1.0
    };
    let ctx = Ctx {
        y: meas.observations.unscale(scale),
        a: geom.steering_matrix(&meas.sample_angles),
        geom,
        meas,
        cfg,
    };
    let w0 = init.codebook.to_unit_norm().into_weights();
    let g0: Vec<Complex64> = init.gains.iter().map(|g| g / scale).collect();
    let mut run = Run {
        trace: Vec::new(),
        stalled: 0,
        converged: false,
    };

    let mut state = match model {
        CalibrationModel::M1 => ctx.m1(w0, &mut run, observer)?,
        CalibrationModel::M2 => {
            let angles = init
                .beamforming_angles
                .clone()
                .ok_or_else(|| CalError::Config("M2 needs initial beamforming angles".into()))?;
            check_dim("beamforming angles vs beams", meas.n_beams(), angles.len())?;
            ctx.m2(angles, &mut run, observer)?
        }
        CalibrationModel::M3 => ctx.m3(w0, init.beta.unwrap_or(1.0), &mut run, observer)?,
        CalibrationModel::M4 => match cfg.method {
            Method::Ao => ctx.m4_ao(w0, &mut run, observer)?,
            Method::GdRel => ctx.m4_gd_rel(w0, &mut run, observer)?,
            Method::GdAel => ctx.m4_gd_ael(w0, g0, &mut run, observer)?,
        },
    };
    state.model = model;
    state.method = match model {
        CalibrationModel::M4 => Some(cfg.method),
        CalibrationModel::M3 => Some(Method::Ao),
        _ => None,
    };
    for g in &mut state.gains {
        *g *= scale;
    }
    state.data_scale = scale;
    state.loss_trace = run.trace;
    state.converged = run.converged;
    Ok(state)
}

struct Ctx<'a> {
    y: CMatrix,
    a: CMatrix,
    geom: &'a ArrayGeometry,
    meas: &'a MeasurementSet,
    cfg: &'a SolverConfig,
}

struct Run {
    trace: Vec<LossRecord>,
    stalled: usize,
    converged: bool,
}

impl Run {
    /// Records a loss; returns `true` once the run should stop.
    fn push(
        &mut self,
        cfg: &SolverConfig,
        iteration: usize,
        value: f64,
        kind: LossKind,
    ) -> Result<bool> {
        let prev = self.trace.last().map(|r| r.value);
        self.trace.push(LossRecord {
            iteration,
            value,
            kind,
        });
        if !value.is_finite() {
            return Err(CalError::Diverged {
                iteration,
                trace: std::mem::take(&mut self.trace),
            });
        }
        if let Some(p) = prev {
            let rel = (p - value).abs() / p.abs().max(f64::MIN_POSITIVE);
            if rel < cfg.rel_tol {
                self.stalled += 1;
            } else {
                self.stalled = 0;
            }
            if self.stalled >= cfg.patience.max(1) {
                self.converged = true;
                return Ok(true);
            }
        }
        Ok(iteration >= cfg.max_iters)
    }
}

fn state(w: CMatrix, gains: Vec<Complex64>) -> Result<CalibrationState> {
    Ok(CalibrationState {
        model: CalibrationModel::M4,
        method: None,
        codebook: Codebook::normalized(w)?,
        gains,
        beamforming_angles: None,
        beta: None,
        data_scale: 1.0,
        loss_trace: Vec::new(),
        converged: false,
    })
}

fn normalize_columns(w: &mut CMatrix, iteration: usize, run: &mut Run) -> Result<()> {
    for g in 0..w.ncols() {
        let n = w.column(g).norm();
        if !(n.is_finite() && n > 0.0) {
            return Err(CalError::Diverged {
                iteration,
                trace: std::mem::take(&mut run.trace),
            });
        }
        w.column_mut(g).unscale_mut(n);
    }
    Ok(())
}

impl Ctx<'_> {
    fn gamma(&self, w: &CMatrix) -> Result<Vec<Complex64>> {
        Ok(update_gamma_closed_form(&self.y, w, &self.a)?.gains)
    }

    fn emit(
        observer: &mut dyn FnMut(&IterationView<'_>),
        iteration: usize,
        w: &CMatrix,
        gains: &[Complex64],
        loss: f64,
        kind: LossKind,
    ) {
        observer(&IterationView {
            iteration,
            weights: w,
            gains,
            loss,
            kind,
        });
    }

    fn m1(
        &self,
        w: CMatrix,
        run: &mut Run,
        observer: &mut dyn FnMut(&IterationView<'_>),
    ) -> Result<CalibrationState> {
        let gains = self.gamma(&w)?;
        let loss = rel_loss(&self.y, &w, &gains, &self.a)?;
        Self::emit(observer, 0, &w, &gains, loss, LossKind::Rel);
        run.push(self.cfg, 0, loss, LossKind::Rel)?;
        run.converged = true;
        state(w, gains)
    }

    fn m2(
        &self,
        mut angles: BeamformingAngles,
        run: &mut Run,
        observer: &mut dyn FnMut(&IterationView<'_>),
    ) -> Result<CalibrationState> {
        let root_n = (self.geom.n_elements() as f64).sqrt();
        let steer = |angles: &BeamformingAngles| {
            self.geom.steering_matrix(&angles.0).unscale(root_n)
        };
        let mut w = steer(&angles);
        let mut gains = self.gamma(&w)?;
        let loss = rel_loss(&self.y, &w, &gains, &self.a)?;
        Self::emit(observer, 0, &w, &gains, loss, LossKind::Rel);
        run.push(self.cfg, 0, loss, LossKind::Rel)?;
        for it in 1..=self.cfg.max_iters {
            for g in 0..angles.len() {
                angles.0[g] = self.pattern_search(g, angles.0[g], &gains, root_n);
            }
            w = steer(&angles);
            gains = self.gamma(&w)?;
            let loss = rel_loss(&self.y, &w, &gains, &self.a)?;
            Self::emit(observer, it, &w, &gains, loss, LossKind::Rel);
            if run.push(self.cfg, it, loss, LossKind::Rel)? {
                break;
            }
        }
        let mut st = state(w, gains)?;
        st.beamforming_angles = Some(angles);
        Ok(st)
    }

    /// Per-beam cost `Σ_t |y_{g,t} − γ_t wᴴ a_t|²` for a steered codeword.
    fn beam_cost(&self, g: usize, dir: &AngleDirection, gains: &[Complex64], root_n: f64) -> f64 {
        let w = self.geom.steering_vector(dir).unscale(root_n);
        let proj = self.a.ad_mul(&w); // a_tᴴ w
        (0..self.y.ncols())
            .map(|t| (self.y[(g, t)] - proj[t].conj() * gains[t]).norm_sqr())
            .sum()
    }

    fn pattern_search(
        &self,
        g: usize,
        start: AngleDirection,
        gains: &[Complex64],
        root_n: f64,
    ) -> AngleDirection {
        let planar = !self.geom.is_linear();
        let mut cur = start;
        let mut best = self.beam_cost(g, &cur, gains, root_n);
        let mut step = PATTERN_START_DEG;
        while step >= PATTERN_END_DEG {
            let mut moved = false;
            let mut moves = vec![(step, 0.0), (-step, 0.0)];
            if planar {
                moves.extend([(0.0, step), (0.0, -step)]);
            }
            for (da, de) in moves {
                let Ok(cand) = AngleDirection::from_degrees(
                    cur.azimuth_deg() + da,
                    cur.elevation_deg() + de,
                ) else {
                    continue;
                };
                let c = self.beam_cost(g, &cand, gains, root_n);
                if c < best {
                    best = c;
                    cur = cand;
                    moved = true;
                    break;
                }
            }
            if !moved {
                step *= 0.5;
            }
        }
        cur
    }

    /// Structured gains for `M3`: `γ_t = κ · m_t · e^{j∠(b_tᴴ y_t)}` with
    /// `m_t = g(ϑ_t, β)/r_t`, returning the gains and the response-error loss.
    fn m3_gains(&self, wa: &CMatrix, beta: f64) -> Result<(Vec<Complex64>, f64)> {
        let t_len = self.y.ncols();
        let mut m = Vec::with_capacity(t_len);
        for t in 0..t_len {
            let r = self.meas.distances[t];
            if !(r > 0.0) {
                return Err(CalError::Domain(format!("sample {t} has distance {r}")));
            }
            m.push(element_pattern(&self.meas.sample_angles[t], beta)? / r);
        }
        let mut h = Vec::with_capacity(t_len);
        let mut num = 0.0;
        let mut den = 0.0;
        for t in 0..t_len {
            let b = wa.column(t);
            let ht = b.dotc(&self.y.column(t));
            num += m[t] * ht.norm();
            den += m[t] * m[t] * b.norm_squared();
            h.push(ht);
        }
        let kappa = if den > 0.0 { num / den } else { 0.0 };
        let gains: Vec<Complex64> = (0..t_len)
            .map(|t| {
                let phase = if h[t].norm() > 0.0 { h[t] / h[t].norm() } else { Complex64::new(1.0, 0.0) };
                phase * kappa * m[t]
            })
            .collect();
        let mut acc = 0.0;
        for t in 0..t_len {
            let b = wa.column(t);
            acc += self.y.column(t).norm_squared() - 2.0 * (gains[t].conj() * h[t]).re
                + gains[t].norm_sqr() * b.norm_squared();
        }
        Ok((gains, (acc / t_len as f64).max(0.0)))
    }

    fn best_beta(&self, wa: &CMatrix, start: f64) -> Result<f64> {
        let f = |b: f64| self.m3_gains(wa, b).map(|(_, l)| l);
        let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
        let (mut lo, mut hi) = BETA_RANGE;
        let mut c = hi - inv_phi * (hi - lo);
        let mut d = lo + inv_phi * (hi - lo);
        let (mut fc, mut fd) = (f(c)?, f(d)?);
        while hi - lo > BETA_TOL {
            if fc <= fd {
                hi = d;
                d = c;
                fd = fc;
                c = hi - inv_phi * (hi - lo);
                fc = f(c)?;
            } else {
                lo = c;
                c = d;
                fc = fd;
                d = lo + inv_phi * (hi - lo);
                fd = f(d)?;
            }
        }
        let cand = 0.5 * (lo + hi);
        // Keep the previous value unless the search found something better.
        Ok(if f(cand)? <= f(start)? { cand } else { start })
    }

    fn m3(
        &self,
        mut w: CMatrix,
        mut beta: f64,
        run: &mut Run,
        observer: &mut dyn FnMut(&IterationView<'_>),
    ) -> Result<CalibrationState> {
        let mut wa = w.ad_mul(&self.a);
        beta = self.best_beta(&wa, beta)?;
        let (mut gains, loss) = self.m3_gains(&wa, beta)?;
        Self::emit(observer, 0, &w, &gains, loss, LossKind::Rel);
        run.push(self.cfg, 0, loss, LossKind::Rel)?;
        for it in 1..=self.cfg.max_iters {
            w = update_w_trust_region(&self.y, &gains, &self.a, &w)?.weights;
            wa = w.ad_mul(&self.a);
            beta = self.best_beta(&wa, beta)?;
            let (g, loss) = self.m3_gains(&wa, beta)?;
            gains = g;
            Self::emit(observer, it, &w, &gains, loss, LossKind::Rel);
            if run.push(self.cfg, it, loss, LossKind::Rel)? {
                break;
            }
        }
        let mut st = state(w, gains)?;
        st.beta = Some(beta);
        Ok(st)
    }

    fn m4_ao(
        &self,
        mut w: CMatrix,
        run: &mut Run,
        observer: &mut dyn FnMut(&IterationView<'_>),
    ) -> Result<CalibrationState> {
        let mut gains = self.gamma(&w)?;
        let loss = rel_loss(&self.y, &w, &gains, &self.a)?;
        Self::emit(observer, 0, &w, &gains, loss, LossKind::Rel);
        run.push(self.cfg, 0, loss, LossKind::Rel)?;
        for it in 1..=self.cfg.max_iters {
            w = update_w_trust_region(&self.y, &gains, &self.a, &w)?.weights;
            gains = self.gamma(&w)?;
            let loss = rel_loss(&self.y, &w, &gains, &self.a)?;
            Self::emit(observer, it, &w, &gains, loss, LossKind::Rel);
            if run.push(self.cfg, it, loss, LossKind::Rel)? {
                break;
            }
        }
        state(w, gains)
    }

    fn m4_gd_rel(
        &self,
        mut w: CMatrix,
        run: &mut Run,
        observer: &mut dyn FnMut(&IterationView<'_>),
    ) -> Result<CalibrationState> {
        let mut gains = self.gamma(&w)?;
        let loss = rel_loss(&self.y, &w, &gains, &self.a)?;
        Self::emit(observer, 0, &w, &gains, loss, LossKind::Rel);
        run.push(self.cfg, 0, loss, LossKind::Rel)?;
        let mut batches = Batches::new(self.y.ncols(), self.cfg.batch_size, self.cfg.seed);
        for it in 1..=self.cfg.max_iters {
            let batch = batches.next_batch();
            let grad = rel_gradient_w(&self.y, &w, &gains, &self.a, batch)?;
            w -= grad * Complex64::new(self.cfg.learning_rate, 0.0);
            normalize_columns(&mut w, it, run)?;
            gains = self.gamma(&w)?;
            let loss = rel_loss(&self.y, &w, &gains, &self.a)?;
            Self::emit(observer, it, &w, &gains, loss, LossKind::Rel);
            if run.push(self.cfg, it, loss, LossKind::Rel)? {
                break;
            }
        }
        state(w, gains)
    }

    fn m4_gd_ael(
        &self,
        mut w: CMatrix,
        mut gains: Vec<Complex64>,
        run: &mut Run,
        observer: &mut dyn FnMut(&IterationView<'_>),
    ) -> Result<CalibrationState> {
        let anchors = resolve_anchors(&self.meas.sample_angles, &self.cfg.anchors)?;
        let ctx = AelContext::new(&self.y, &anchors, None)?;
        let lr = self.cfg.learning_rate;
        let mut batches = Batches::new(self.y.ncols(), self.cfg.batch_size, self.cfg.seed);
        let mut batch = batches.next_batch().to_vec();
        let (val, mut grads) = ctx.loss_and_gradients(&w, &gains, &self.a, &batch)?;
        Self::emit(observer, 0, &w, &gains, val.loss, LossKind::Ael);
        run.push(self.cfg, 0, val.loss, LossKind::Ael)?;
        for it in 1..=self.cfg.max_iters {
            w -= &grads.w * Complex64::new(lr, 0.0);
            for &t in &batch {
                gains[t] -= grads.gamma[t] * lr;
            }
            normalize_columns(&mut w, it, run)?;
            batch = batches.next_batch().to_vec();
            let (val, g) = ctx.loss_and_gradients(&w, &gains, &self.a, &batch)?;
            grads = g;
            Self::emit(observer, it, &w, &gains, val.loss, LossKind::Ael);
            if run.push(self.cfg, it, val.loss, LossKind::Ael)? {
                break;
            }
        }
        state(w, gains)
    }
}

/// Epoch-shuffled mini-batches over `0..n`.
pub(crate) struct Batches {
    order: Vec<usize>,
    pos: usize,
    size: usize,
    rng: ChaCha8Rng,
}

impl Batches {
    pub(crate) fn new(n: usize, size: Option<usize>, seed: u64) -> Self {
        let size = size.unwrap_or(n).clamp(1, n.max(1));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..n).collect();
        if size < n {
            order.shuffle(&mut rng);
        }
        Self {
            order,
            pos: 0,
            size,
            rng,
        }
    }

    pub(crate) fn next_batch(&mut self) -> &[usize] {
        if self.pos + self.size > self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
        let out = &self.order[self.pos..self.pos + self.size];
        self.pos += self.size;
        out
    }
}
