//! Response-error and angle-error losses with their Wirtinger gradients.
//!
//! Shapes: `Y` is `G × T`, `W` is `N × G`, `A` is `N × T` and `γ` has `T`
//! entries, so the model is `Y ≈ Wᴴ A diag(γ)`. Gradients are taken with
//! respect to the conjugate variables and share the shape of the variable.

use num_complex::Complex64;

use crate::array::CMatrix;
use crate::error::{check_dim, CalError, Result};
use crate::linalg;

fn check_shapes(y: &CMatrix, w: &CMatrix, gamma: &[Complex64], a: &CMatrix) -> Result<()> {
    check_dim("codebook elements vs steering rows", a.nrows(), w.nrows())?;
    check_dim("codebook beams vs observation rows", y.nrows(), w.ncols())?;
    check_dim("steering columns vs samples", y.ncols(), a.ncols())?;
    check_dim("gains vs samples", y.ncols(), gamma.len())?;
    Ok(())
}

/// `L_R = ‖Y − Wᴴ A Γ‖_F² / T`.
pub fn rel_loss(y: &CMatrix, w: &CMatrix, gamma: &[Complex64], a: &CMatrix) -> Result<f64> {
    check_shapes(y, w, gamma, a)?;
    let wa = linalg::ad_mul(w, a);
    let t_len = y.ncols();
    let mut acc = 0.0;
    for t in 0..t_len {
        let g = gamma[t];
        for (yv, bv) in y.column(t).iter().zip(wa.column(t).iter()) {
            acc += (yv - g * bv).norm_sqr();
        }
    }
    Ok(acc / t_len as f64)
}

/// `∂L_R/∂W*` over the samples in `batch`, normalised by the batch size:
/// `−(1/|B|) Σ γ_t a_t e_tᴴ` with `e_t = y_t − γ_t Wᴴ a_t`.
pub fn rel_gradient_w(
    y: &CMatrix,
    w: &CMatrix,
    gamma: &[Complex64],
    a: &CMatrix,
    batch: &[usize],
) -> Result<CMatrix> {
    check_shapes(y, w, gamma, a)?;
    if batch.is_empty() {
        return Err(CalError::Domain("gradient batch is empty".into()));
    }
    if let Some(&bad) = batch.iter().find(|&&t| t >= y.ncols()) {
        return Err(CalError::Domain(format!("sample {bad} out of range")));
    }
    let a_b = a.select_columns(batch.iter());
    let b0 = linalg::ad_mul(w, &a_b);
    // Σ γ_t a_t e_tᴴ = A_B Fᴴ with f_t = γ̄_t e_t.
    let mut f = CMatrix::zeros(w.ncols(), batch.len());
    for (i, &t) in batch.iter().enumerate() {
        let gt = gamma[t];
        let mut col = f.column_mut(i);
        col.zip_zip_apply(&y.column(t), &b0.column(i), |o, yv, bv| {
            *o = (yv - gt * bv) * gt.conj();
        });
    }
    Ok(linalg::mul_ad(&a_b, &f) * Complex64::new(-1.0 / batch.len() as f64, 0.0))
}

/// `∂L_R/∂γ_t* = (1/T)(−a_tᴴ W y_t + γ_t ‖Wᴴ a_t‖²)`.
pub fn rel_gradient_gamma(
    y: &CMatrix,
    w: &CMatrix,
    gamma: &[Complex64],
    a: &CMatrix,
    t: usize,
) -> Result<Complex64> {
    check_shapes(y, w, gamma, a)?;
    if t >= y.ncols() {
        return Err(CalError::Domain(format!("sample {t} out of range")));
    }
    let b0 = w.ad_mul(&a.column(t));
    let yt = y.column(t);
    let grad = -b0.dotc(&yt) + gamma[t] * b0.norm_squared();
    Ok(grad / y.ncols() as f64)
}

/// Closed-form per-sample gains `γ_t = b_tᴴ y_t / b_tᴴ b_t` with
/// `b_t = Wᴴ a_t`. Samples whose beam vanishes get `γ_t = 0` and are listed
/// in `zero_beam`.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaUpdate {
    pub gains: Vec<Complex64>,
    pub zero_beam: Vec<usize>,
}

pub fn update_gamma_closed_form(y: &CMatrix, w: &CMatrix, a: &CMatrix) -> Result<GammaUpdate> {
    check_dim("codebook elements vs steering rows", a.nrows(), w.nrows())?;
    check_dim("codebook beams vs observation rows", y.nrows(), w.ncols())?;
    check_dim("steering columns vs samples", y.ncols(), a.ncols())?;
    let wa = linalg::ad_mul(w, a);
    let mut gains = Vec::with_capacity(y.ncols());
    let mut zero_beam = Vec::new();
    for t in 0..y.ncols() {
        let b = wa.column(t);
        let nb = b.norm_squared();
        if nb == 0.0 {
            gains.push(Complex64::new(0.0, 0.0));
            zero_beam.push(t);
        } else {
            gains.push(b.dotc(&y.column(t)) / nb);
        }
    }
    Ok(GammaUpdate { gains, zero_beam })
}

/// Precomputed data side of the angle-error loss.
///
/// For anchors `s ∈ S` the loss compares `u_{t,s} = b_tᴴ y_s / ‖b_t‖` with
/// the data-only target `ǔ_{t,s} = y_tᴴ y_s / ‖y_t‖`, so `ǔ` is fixed for a
/// measurement set and computed once here.
#[derive(Debug, Clone)]
pub struct AelContext {
    anchors: Vec<usize>,
    weights: Vec<f64>,
    /// `G × S` anchor observations.
    y_anchor: CMatrix,
    /// `T × S` targets `ǔ`.
    target: CMatrix,
    /// Samples with `‖y_t‖ = 0`.
    dead_samples: Vec<bool>,
}

/// Loss value with the samples that had to be skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct AelValue {
    pub loss: f64,
    pub excluded: Vec<usize>,
}

/// Both AEL gradients. `gamma_skipped` lists samples with `γ_t = 0`, where
/// the gain gradient is undefined and reported as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct AelGradients {
    pub w: CMatrix,
    pub gamma: Vec<Complex64>,
    pub excluded: Vec<usize>,
    pub gamma_skipped: Vec<usize>,
}

impl AelContext {
    /// Anchors index columns of `y`; `weights` are the per-anchor `ρ_s`
    /// (all ones when `None`).
    pub fn new(y: &CMatrix, anchors: &[usize], weights: Option<&[f64]>) -> Result<Self> {
        if anchors.is_empty() {
            return Err(CalError::Domain("anchor set is empty".into()));
        }
        if let Some(&bad) = anchors.iter().find(|&&s| s >= y.ncols()) {
            return Err(CalError::Domain(format!(
                "anchor index {bad} outside {} samples",
                y.ncols()
            )));
        }
        let weights = match weights {
            Some(wts) => {
                check_dim("anchor weights", anchors.len(), wts.len())?;
                if wts.iter().any(|&r| !(r >= 0.0)) {
                    return Err(CalError::Domain("anchor weights must be non-negative".into()));
                }
                wts.to_vec()
            }
            None => vec![1.0; anchors.len()],
        };
        let y_anchor = y.select_columns(anchors.iter());
        // yᴴ Y_S gives y_tᴴ y_s for all pairs at once.
        let mut target = linalg::ad_mul(y, &y_anchor);
        let mut dead_samples = vec![false; y.ncols()];
        for t in 0..y.ncols() {
            let ny = y.column(t).norm();
            if ny == 0.0 {
                dead_samples[t] = true;
                target.row_mut(t).fill(Complex64::new(0.0, 0.0));
            } else {
                target.row_mut(t).unscale_mut(ny);
            }
        }
        Ok(Self {
            anchors: anchors.to_vec(),
            weights,
            y_anchor,
            target,
            dead_samples,
        })
    }

    pub fn anchors(&self) -> &[usize] {
        &self.anchors
    }

    pub fn n_samples(&self) -> usize {
        self.target.nrows()
    }

    fn n_anchors(&self) -> usize {
        self.anchors.len()
    }

    fn check(&self, w: &CMatrix, gamma: &[Complex64], a: &CMatrix) -> Result<()> {
        check_dim("codebook elements vs steering rows", a.nrows(), w.nrows())?;
        check_dim("codebook beams vs anchors", self.y_anchor.nrows(), w.ncols())?;
        check_dim("steering columns vs samples", self.n_samples(), a.ncols())?;
        check_dim("gains vs samples", self.n_samples(), gamma.len())?;
        Ok(())
    }

    /// `Wᴴa_t`, `q_t = |γ_t|‖Wᴴa_t‖` and the rows `u_{t,·}` for the samples in
    /// `cols`. Samples with `q_t = 0` or `‖y_t‖ = 0` are marked invalid.
    fn terms(&self, w: &CMatrix, gamma: &[Complex64], a: &CMatrix, cols: &[usize]) -> Terms {
        let a_b = a.select_columns(cols.iter());
        let b0 = linalg::ad_mul(w, &a_b);
        // v_{i,s} = b0_iᴴ y_s
        let mut u = linalg::ad_mul(&b0, &self.y_anchor);
        let mut q = Vec::with_capacity(cols.len());
        let mut valid = Vec::with_capacity(cols.len());
        let mut k = Vec::with_capacity(cols.len());
        for (i, &t) in cols.iter().enumerate() {
            let qt = gamma[t].norm() * b0.column(i).norm();
            let ok = !self.dead_samples[t] && qt > 0.0;
            k.push(if ok { gamma[t].conj() / qt } else { Complex64::new(0.0, 0.0) });
            q.push(qt);
            valid.push(ok);
        }
        for mut col in u.column_iter_mut() {
            for (z, ki) in col.iter_mut().zip(&k) {
                *z *= ki;
            }
        }
        Terms { a_b, b0, q, u, valid }
    }

    /// `L_A = Σ_{t,s} ρ_s |u_{t,s} − ǔ_{t,s}|² / (T_valid S)`.
    pub fn loss(&self, w: &CMatrix, gamma: &[Complex64], a: &CMatrix) -> Result<AelValue> {
        self.check(w, gamma, a)?;
        let all: Vec<usize> = (0..self.n_samples()).collect();
        let terms = self.terms(w, gamma, a, &all);
        Ok(self.loss_from(&terms))
    }

    fn loss_from(&self, terms: &Terms) -> AelValue {
        let mut acc = 0.0;
        for s in 0..self.n_anchors() {
            let (u, target) = (terms.u.column(s), self.target.column(s));
            let mut col = 0.0;
            for t in 0..self.n_samples() {
                if terms.valid[t] {
                    col += (u[t] - target[t]).norm_sqr();
                }
            }
            acc += self.weights[s] * col;
        }
        let excluded: Vec<usize> = (0..self.n_samples()).filter(|&t| !terms.valid[t]).collect();
        let valid = self.n_samples() - excluded.len();
        let loss = if valid == 0 {
            0.0
        } else {
            acc / (valid * self.n_anchors()) as f64
        };
        AelValue { loss, excluded }
    }

    /// Gradients over the samples in `batch`, normalised by `|B| · S`.
    pub fn gradients(
        &self,
        w: &CMatrix,
        gamma: &[Complex64],
        a: &CMatrix,
        batch: &[usize],
    ) -> Result<AelGradients> {
        self.check(w, gamma, a)?;
        if batch.is_empty() {
            return Err(CalError::Domain("gradient batch is empty".into()));
        }
        if let Some(&bad) = batch.iter().find(|&&t| t >= self.n_samples()) {
            return Err(CalError::Domain(format!("sample {bad} out of range")));
        }
        let terms = self.terms(w, gamma, a, batch);
        let rows: Vec<usize> = (0..batch.len()).collect();
        Ok(self.gradients_from(&terms, &rows, gamma, batch))
    }

    /// Loss over all samples and gradients over `batch` from one forward
    /// pass; both are evaluated at the same `(W, γ)`.
    pub fn loss_and_gradients(
        &self,
        w: &CMatrix,
        gamma: &[Complex64],
        a: &CMatrix,
        batch: &[usize],
    ) -> Result<(AelValue, AelGradients)> {
        self.check(w, gamma, a)?;
        if batch.is_empty() {
            return Err(CalError::Domain("gradient batch is empty".into()));
        }
        if let Some(&bad) = batch.iter().find(|&&t| t >= self.n_samples()) {
            return Err(CalError::Domain(format!("sample {bad} out of range")));
        }
        let all: Vec<usize> = (0..self.n_samples()).collect();
        let terms = self.terms(w, gamma, a, &all);
        Ok((self.loss_from(&terms), self.gradients_from(&terms, batch, gamma, batch)))
    }

    /// `rows[i]` is the row of `terms` holding sample `batch[i]`.
    fn gradients_from(
        &self,
        terms: &Terms,
        rows: &[usize],
        gamma: &[Complex64],
        batch: &[usize],
    ) -> AelGradients {
        let s_len = self.n_anchors();
        let norm = 1.0 / (batch.len() * s_len) as f64;
        let mut grad_gamma = vec![Complex64::new(0.0, 0.0); self.n_samples()];
        let mut excluded = Vec::new();
        let mut gamma_skipped = Vec::new();

        // With p_{i,s} = ρ_s e_{i,s}: z_i = Σ_s p*_{i,s} y_s.
        let mut p = CMatrix::zeros(batch.len(), s_len);
        let mut re_sum = vec![0.0; batch.len()];
        let mut im_sum = vec![0.0; batch.len()];
        for s in 0..s_len {
            let rho = self.weights[s];
            let target = self.target.column(s);
            let u = terms.u.column(s);
            let mut pc = p.column_mut(s);
            for (i, &t) in batch.iter().enumerate() {
                if !terms.valid[rows[i]] {
                    continue;
                }
                let e = u[rows[i]] - target[t];
                re_sum[i] += rho * (e * u[rows[i]].conj()).re;
                im_sum[i] += rho * (e.conj() * u[rows[i]]).im;
                pc[i] = e * rho;
            }
        }
        for (i, &t) in batch.iter().enumerate() {
            if !terms.valid[rows[i]] {
                excluded.push(t);
                if gamma[t] == Complex64::new(0.0, 0.0) {
                    gamma_skipped.push(t);
                }
                continue;
            }
            grad_gamma[t] = Complex64::new(0.0, im_sum[i]) / gamma[t].conj() * norm;
        }
        let z = linalg::mul_ad(&self.y_anchor, &p);
        // r_i = (γ*/q) z_i − (|γ|²/q²) Σ_s ρ Re(e u*) b0_i, and ∂L/∂W* = Σ_i a_i r_iᴴ.
        let mut r = CMatrix::zeros(z.nrows(), batch.len());
        for (i, &t) in batch.iter().enumerate() {
            if !terms.valid[rows[i]] {
                continue;
            }
            let q = terms.q[rows[i]];
            let k1 = gamma[t].conj() / q;
            let k2 = gamma[t].norm_sqr() / (q * q) * re_sum[i];
            let mut col = r.column_mut(i);
            col.zip_zip_apply(&z.column(i), &terms.b0.column(rows[i]), |o, zv, bv| {
                *o = zv * k1 - bv * k2;
            });
        }
        let grad_w = if rows.len() == terms.a_b.ncols() {
            linalg::mul_ad(&terms.a_b, &r)
        } else {
            linalg::mul_ad(&terms.a_b.select_columns(rows.iter()), &r)
        } * Complex64::new(norm, 0.0);
        AelGradients {
            w: grad_w,
            gamma: grad_gamma,
            excluded,
            gamma_skipped,
        }
    }
}

struct Terms {
    a_b: CMatrix,
    b0: CMatrix,
    q: Vec<f64>,
    u: CMatrix,
    valid: Vec<bool>,
}

/// Angle-error loss with unit anchor weights.
pub fn ael_loss(
    y: &CMatrix,
    w: &CMatrix,
    gamma: &[Complex64],
    a: &CMatrix,
    anchors: &[usize],
) -> Result<AelValue> {
    AelContext::new(y, anchors, None)?.loss(w, gamma, a)
}

/// Full-batch AEL gradients with unit anchor weights.
pub fn ael_gradients(
    y: &CMatrix,
    w: &CMatrix,
    gamma: &[Complex64],
    a: &CMatrix,
    anchors: &[usize],
) -> Result<AelGradients> {
    let ctx = AelContext::new(y, anchors, None)?;
    let all: Vec<usize> = (0..y.ncols()).collect();
    ctx.gradients(w, gamma, a, &all)
}
