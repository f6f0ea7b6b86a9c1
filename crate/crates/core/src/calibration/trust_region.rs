//! Per-codeword least squares on the unit sphere.
//!
//! With gains fixed, each codeword solves
//! `min_w ‖y_gᴴ − (AΓ)ᴴ w‖²  s.t. ‖w‖ = 1`, i.e. minimise
//! `wᴴQw − 2Re(wᴴb_g)` with `Q = Σ|γ_t|² a_t a_tᴴ` and `b_g = Σ γ_t a_t ȳ_{g,t}`.
//! The global minimiser satisfies `(Q + λI)w = b_g` with `Q + λI ⪰ 0`; the
//! multiplier is found by bisection on the secular equation `‖w(λ)‖ = 1`.

use nalgebra::SymmetricEigen;
use num_complex::Complex64;

use crate::array::{CMatrix, CVector};
use crate::error::{check_dim, CalError, Result};

const BISECTION_TOL: f64 = 1e-10;
const MAX_BISECTIONS: usize = 400;

/// How a codeword update was resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrustRegionCase {
    /// Secular equation solved by bisection.
    Interior,
    /// `b_g` has no component along the smallest eigenvector; the null
    /// direction fills the remaining norm.
    Hard,
    /// `b_g = 0`: the previous codeword is kept (renormalised).
    ZeroRhs,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodewordUpdate {
    pub lambda: f64,
    pub case: TrustRegionCase,
}

#[derive(Debug, Clone)]
pub struct TrustRegionOutput {
    /// `N × G`, unit-norm columns.
    pub weights: CMatrix,
    pub codewords: Vec<CodewordUpdate>,
}

/// Solves every codeword given observations `y` (`G × T`), gains and
/// steering matrix `a` (`N × T`). `prev` supplies codewords for the `b_g = 0`
/// fallback.
pub fn update_w_trust_region(
    y: &CMatrix,
    gamma: &[Complex64],
    a: &CMatrix,
    prev: &CMatrix,
) -> Result<TrustRegionOutput> {
    check_dim("steering columns vs samples", y.ncols(), a.ncols())?;
    check_dim("gains vs samples", y.ncols(), gamma.len())?;
    check_dim("previous codebook elements", a.nrows(), prev.nrows())?;
    check_dim("previous codebook beams", y.nrows(), prev.ncols())?;

    let n = a.nrows();
    let mut ag = a.clone();
    for (t, mut col) in ag.column_iter_mut().enumerate() {
        col *= gamma[t];
    }
    let q = &ag * ag.adjoint();
    let rhs = &ag * y.adjoint(); // column g is b_g
    if !q.iter().all(|z| z.re.is_finite() && z.im.is_finite())
        || !rhs.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    {
        return Err(CalError::Numeric("non-finite trust-region system".into()));
    }
    let eig = SymmetricEigen::new(q);
    let lam: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let u = eig.eigenvectors;
    let lam_min = lam.iter().copied().fold(f64::INFINITY, f64::min);
    let scale = lam.iter().fold(0.0f64, |m, &l| m.max(l.abs())).max(1.0);

    let mut weights = CMatrix::zeros(n, y.nrows());
    let mut codewords = Vec::with_capacity(y.nrows());
    for g in 0..y.nrows() {
        let b = rhs.column(g);
        let b_norm = b.norm();
        if b_norm == 0.0 {
            let p = prev.column(g);
            let pn = p.norm();
            if pn == 0.0 {
                return Err(CalError::Numeric(format!(
                    "codeword {g}: zero right-hand side and zero previous codeword"
                )));
            }
            weights.set_column(g, &(p / Complex64::new(pn, 0.0)));
            codewords.push(CodewordUpdate {
                lambda: 0.0,
                case: TrustRegionCase::ZeroRhs,
            });
            continue;
        }
        let c = u.ad_mul(&b);
        let (w, lambda, case) = solve_secular(&lam, lam_min, scale, &c, &u);
        weights.set_column(g, &w);
        codewords.push(CodewordUpdate { lambda, case });
    }
    Ok(TrustRegionOutput { weights, codewords })
}

/// Returns the unit-norm solution in the original basis.
fn solve_secular(
    lam: &[f64],
    lam_min: f64,
    scale: f64,
    c: &CVector,
    u: &CMatrix,
) -> (CVector, f64, TrustRegionCase) {
    // Work with μ = λ + λ_min so the smallest shifted eigenvalue is exact.
    let gap: Vec<f64> = lam.iter().map(|&l| l - lam_min).collect();
    let degenerate_tol = 1e-12 * scale;
    let is_min: Vec<bool> = gap.iter().map(|&d| d <= degenerate_tol).collect();
    let c_min_sq: f64 = c
        .iter()
        .zip(&is_min)
        .filter(|(_, &m)| m)
        .map(|(z, _)| z.norm_sqr())
        .sum();
    let c_norm = c.norm();

    let norm_sq_at = |mu: f64| -> f64 {
        c.iter()
            .zip(&gap)
            .map(|(z, &d)| z.norm_sqr() / (d + mu).powi(2))
            .sum()
    };

    // Hard case: ‖w‖ stays below one as μ → 0⁺ with the singular part removed.
    if c_min_sq <= (1e-14 * c_norm).powi(2) {
        let rest: f64 = c
            .iter()
            .zip(&gap)
            .zip(&is_min)
            .filter(|(_, &m)| !m)
            .map(|((z, &d), _)| z.norm_sqr() / (d * d))
            .sum();
        if rest <= 1.0 {
            let mut coef = CVector::zeros(c.len());
            for i in 0..c.len() {
                if !is_min[i] {
                    coef[i] = c[i] / gap[i];
                }
            }
            let fill = (1.0 - rest).max(0.0).sqrt();
            let idx = is_min.iter().position(|&m| m).unwrap_or(0);
            coef[idx] = Complex64::new(fill, 0.0);
            let w = u * coef;
            return (normalise(w), -lam_min, TrustRegionCase::Hard);
        }
    }

    // ‖w(μ)‖ ≤ ‖c‖/μ, so μ = ‖c‖ brackets from above.
    let mut lo = 0.0f64;
    let mut hi = c_norm;
    let mut mu = hi;
    for _ in 0..MAX_BISECTIONS {
        mu = 0.5 * (lo + hi);
        if mu <= lo || mu >= hi {
            break;
        }
        let f = norm_sq_at(mu).sqrt();
        if (f - 1.0).abs() < BISECTION_TOL * 1e-2 {
            break;
        }
        if f > 1.0 {
            lo = mu;
        } else {
            hi = mu;
        }
        if hi - lo <= BISECTION_TOL * mu.max(1e-300) * 1e-3 {
            break;
        }
    }
    let coef = CVector::from_iterator(
        c.len(),
        c.iter().zip(&gap).map(|(z, &d)| z / (d + mu)),
    );
    let w = u * coef;
    (normalise(w), mu - lam_min, TrustRegionCase::Interior)
}

fn normalise(w: CVector) -> CVector {
    let n = w.norm();
    w / Complex64::new(n, 0.0)
}
