//! Single-source angle estimation and pseudo-true angles under a
//! mismatched beam model.
//!
//! Both estimators maximise the normalised projection
//! `|bᴴ(ϑ) y|² / ‖b(ϑ)‖²` with `b(ϑ) = Wᴴ a(ϑ)`, which is the concentrated
//! form of `min_{ϑ,α} ‖y − α b(ϑ)‖²`. Linear arrays (one row) search
//! azimuth only with elevation pinned at zero.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::array::{ArrayGeometry, AngleDirection, CMatrix, CVector};
use crate::error::{check_dim, CalError, Result};

/// Largest magnitude, in degrees, a search coordinate may take.
const HEMISPHERE_LIMIT_DEG: f64 = 89.999;

/// Golden-section bracket width (radians) at which refinement stops.
const GOLDEN_TOL_RAD: f64 = 1e-10;

/// Relative gain below which an ascent pass counts as converged.
const ASCENT_RTOL: f64 = 1e-14;

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Search grid for [`mle_angle`], in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub az_range: (f64, f64),
    pub el_range: (f64, f64),
    pub step: f64,
    pub refine_iters: usize,
}

impl GridSpec {
    /// Azimuth-only grid.
    pub fn azimuth(lo: f64, hi: f64, step: f64) -> Self {
        Self {
            az_range: (lo, hi),
            el_range: (0.0, 0.0),
            step,
            refine_iters: 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) {
            return Err(CalError::Config(format!("grid step must be positive, got {}", self.step)));
        }
        for &(lo, hi) in &[self.az_range, self.el_range] {
            if !(lo <= hi) || lo.abs() >= 90.0 || hi.abs() >= 90.0 {
                return Err(CalError::Config(format!(
                    "grid range [{lo}, {hi}] must be ordered and inside (-90, 90)"
                )));
            }
        }
        Ok(())
    }
}

/// Inclusive grid of points from `lo` to `hi`.
pub(crate) fn grid_points(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    let mut pts: Vec<f64> = (0..=n).map(|i| lo + i as f64 * step).collect();
    if let Some(last) = pts.last() {
        if hi - last > 1e-9 {
            pts.push(hi);
        }
    }
    pts
}

/// Concentrated least-squares objective for one observation vector.
pub struct ProjectionObjective<'a> {
    weights: &'a CMatrix,
    geom: &'a ArrayGeometry,
    y: &'a CVector,
    a: std::cell::RefCell<CVector>,
}

impl<'a> ProjectionObjective<'a> {
    pub fn new(weights: &'a CMatrix, geom: &'a ArrayGeometry, y: &'a CVector) -> Result<Self> {
        check_dim("objective elements", geom.n_elements(), weights.nrows())?;
        check_dim("objective beams", weights.ncols(), y.len())?;
        Ok(Self {
            weights,
            geom,
            y,
            a: std::cell::RefCell::new(CVector::zeros(geom.n_elements())),
        })
    }

    fn response(&self, az: f64, el: f64) -> CVector {
        let dir = AngleDirection::new(az, el).expect("search stays in hemisphere");
        let mut a = self.a.borrow_mut();
        self.geom.steering_into(&dir, a.as_mut_slice());
        self.weights.ad_mul(&*a)
    }

    /// `|bᴴy|² / ‖b‖²` at `(az, el)` in radians; zero when `b` vanishes.
    pub fn value(&self, az: f64, el: f64) -> f64 {
        let b = self.response(az, el);
        let nb = b.norm_squared();
        if nb == 0.0 {
            return 0.0;
        }
        b.dotc(self.y).norm_sqr() / nb
    }

    /// Closed-form gain and residual `‖y − α b‖²` at a direction.
    pub fn fit(&self, dir: &AngleDirection) -> (Complex64, f64) {
        let b = self.response(dir.azimuth(), dir.elevation());
        let nb = b.norm_squared();
        if nb == 0.0 {
            return (Complex64::new(0.0, 0.0), self.y.norm_squared());
        }
        let gain = b.dotc(self.y) / nb;
        let resid = (self.y - b * gain).norm_squared();
        (gain, resid)
    }
}

/// Maximises `f` on `[lo, hi]` by golden-section search. Returns the
/// best point seen, including `start` when it beats the interior.
fn golden_max(f: impl Fn(f64) -> f64, lo: f64, hi: f64, start: f64, f_start: f64) -> (f64, f64) {
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    let (mut best_x, mut best_f) = (start, f_start);
    for (x, fx) in [(c, fc), (d, fd)] {
        if fx > best_f {
            best_x = x;
            best_f = fx;
        }
    }
    while b - a > GOLDEN_TOL_RAD {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
            if fc > best_f {
                best_x = c;
                best_f = fc;
            }
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
            if fd > best_f {
                best_x = d;
                best_f = fd;
            }
        }
    }
    (best_x, best_f)
}

fn clamp_deg(x: f64) -> f64 {
    x.clamp(-HEMISPHERE_LIMIT_DEG, HEMISPHERE_LIMIT_DEG)
}

/// Coordinate-wise golden-section ascent, each pass searching `±half_width_deg`
/// around the current point, until a pass stops improving or `passes` run
/// out. Never returns a worse point than the start.
fn refine(
    obj: &ProjectionObjective<'_>,
    planar: bool,
    mut az: f64,
    mut el: f64,
    mut best: f64,
    half_width_deg: f64,
    passes: usize,
) -> (f64, f64, f64) {
    let hw = half_width_deg.to_radians();
    let lim = HEMISPHERE_LIMIT_DEG.to_radians();
    for _ in 0..passes.max(1) {
        let before = best;
        let e = el;
        let (x, fx) = golden_max(|x| obj.value(x, e), (az - hw).max(-lim), (az + hw).min(lim), az, best);
        az = x;
        best = fx;
        if planar {
            let a = az;
            let (x, fx) = golden_max(|x| obj.value(a, x), (el - hw).max(-lim), (el + hw).min(lim), el, best);
            el = x;
            best = fx;
        }
        if best - before <= ASCENT_RTOL * best.abs() {
            break;
        }
    }
    (az, el, best)
}

/// Result of [`mle_angle`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MleEstimate {
    pub angle: AngleDirection,
    /// Nuisance gain `α = bᴴy / bᴴb` at the estimate.
    pub gain: Complex64,
    pub objective: f64,
    /// The objective was identically zero over the grid, so any direction
    /// is as good as another.
    pub ambiguous: bool,
}

/// Grid-then-refine maximum-likelihood direction of a single LOS source.
pub fn mle_angle(
    y: &CVector,
    weights: &CMatrix,
    geom: &ArrayGeometry,
    grid: &GridSpec,
) -> Result<MleEstimate> {
    grid.validate()?;
    if !(y.norm() > 0.0) || y.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(CalError::Domain("observation must be finite and nonzero".into()));
    }
    let obj = ProjectionObjective::new(weights, geom, y)?;
    let planar = !geom.is_linear();
    let azs = grid_points(clamp_deg(grid.az_range.0), clamp_deg(grid.az_range.1), grid.step);
    let els = if planar {
        grid_points(clamp_deg(grid.el_range.0), clamp_deg(grid.el_range.1), grid.step)
    } else {
        vec![0.0]
    };
    // Strict comparison keeps the smallest azimuth, then elevation, on ties.
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    for &az in &azs {
        for &el in &els {
            let v = obj.value(az.to_radians(), el.to_radians());
            if v > best.0 {
                best = (v, az.to_radians(), el.to_radians());
            }
        }
    }
    let ambiguous = best.0 <= 0.0;
    let (az, el, value) = if ambiguous {
        (best.1, best.2, best.0)
    } else {
        refine(&obj, planar, best.1, best.2, best.0, grid.step, grid.refine_iters)
    };
    let angle = AngleDirection::new(az, el)?;
    let (gain, _) = obj.fit(&angle);
    Ok(MleEstimate {
        angle,
        gain,
        objective: value,
        ambiguous,
    })
}

/// Pseudo-true parameter of a mismatched model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PseudoTrueEstimate {
    pub gain: Complex64,
    pub angle: AngleDirection,
    /// `‖b̄ − γ Wᴴ a(ϑ)‖²` at the returned point.
    pub residual: f64,
}

/// Neighbourhood scanned around the initial direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PseudoTrueConfig {
    pub window_deg: f64,
    pub step_deg: f64,
    /// Scan step used for planar arrays, where the scan is two-dimensional.
    pub planar_step_deg: f64,
    /// Cap on ascent passes per refinement.
    pub refine_passes: usize,
}

impl Default for PseudoTrueConfig {
    fn default() -> Self {
        Self {
            window_deg: 5.0,
            step_deg: 0.1,
            planar_step_deg: 0.5,
            refine_passes: 1000,
        }
    }
}

/// Direction minimising `‖b̄ − γ Wᴴa(ϑ)‖²` near `init`, with `γ`
/// eliminated in closed form.
pub fn pseudo_true(
    truth: &CVector,
    weights: &CMatrix,
    geom: &ArrayGeometry,
    init: &AngleDirection,
) -> Result<PseudoTrueEstimate> {
    pseudo_true_with(truth, weights, geom, init, &PseudoTrueConfig::default())
}

pub fn pseudo_true_with(
    truth: &CVector,
    weights: &CMatrix,
    geom: &ArrayGeometry,
    init: &AngleDirection,
    cfg: &PseudoTrueConfig,
) -> Result<PseudoTrueEstimate> {
    if truth.iter().any(|z| !z.re.is_finite() || !z.im.is_finite())
        || weights.iter().any(|z| !z.re.is_finite() || !z.im.is_finite())
    {
        return Err(CalError::Numeric("pseudo-true inputs must be finite".into()));
    }
    let obj = ProjectionObjective::new(weights, geom, truth)?;
    let planar = !geom.is_linear();
    let (az0, el0) = (init.azimuth(), if planar { init.elevation() } else { 0.0 });
    let f0 = obj.value(az0, el0);

    // Local ascent from the initial point.
    let step = if planar { cfg.planar_step_deg } else { cfg.step_deg };
    let local = refine(&obj, planar, az0, el0, f0, step, cfg.refine_passes);

    // Neighbourhood scan guards against converging on a sidelobe shoulder.
    let azs = grid_points(
        clamp_deg(init.azimuth_deg() - cfg.window_deg),
        clamp_deg(init.azimuth_deg() + cfg.window_deg),
        step,
    );
    let els = if planar {
        grid_points(
            clamp_deg(init.elevation_deg() - cfg.window_deg),
            clamp_deg(init.elevation_deg() + cfg.window_deg),
            step,
        )
    } else {
        vec![0.0]
    };
    let mut scan = (f64::NEG_INFINITY, az0, el0);
    for &az in &azs {
        for &el in &els {
            let v = obj.value(az.to_radians(), el.to_radians());
            if v > scan.0 {
                scan = (v, az.to_radians(), el.to_radians());
            }
        }
    }
    let scanned = refine(&obj, planar, scan.1, scan.2, scan.0, step, cfg.refine_passes);

    let (az, el, _) = if scanned.2 > local.2 { scanned } else { local };
    let angle = AngleDirection::new(az, el)?;
    let (gain, residual) = obj.fit(&angle);
    if !residual.is_finite() {
        return Err(CalError::Numeric("pseudo-true residual is not finite".into()));
    }
    Ok(PseudoTrueEstimate {
        gain,
        angle,
        residual,
    })
}

/// SNR degradation, in positive dB, of a half-wavelength `N`-element ULA
/// steered at `θ + Δθ` while the user sits at `θ`.
pub fn snr_loss(delta_theta: f64, n_elements: usize, theta: f64) -> Result<f64> {
    if n_elements == 0 {
        return Err(CalError::Domain("array must have at least one element".into()));
    }
    let x = std::f64::consts::PI * (theta.sin() - (theta + delta_theta).sin());
    let sum: Complex64 = (0..n_elements)
        .map(|n| Complex64::from_polar(1.0, x * n as f64))
        .sum();
    let gain = (sum / n_elements as f64).norm_sqr();
    Ok(-10.0 * gain.log10())
}

/// Lateral position error `r |tan(θ + Δθ) − tan θ|` at range `r`.
pub fn position_error(range: f64, theta: f64, delta_theta: f64) -> f64 {
    range * ((theta + delta_theta).tan() - theta.tan()).abs()
}
