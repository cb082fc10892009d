//! Saddlepoint solvers and Barndorff-Nielsen tail approximations.
//!
//! Continuity-corrected methods solve the saddlepoint equation at `u - 1/2`
//! and use `v = 2 sinh(t/2) * sqrt(hessian factor)`; the continuous single
//! saddlepoint (ESPA) solves at `u` with `v = t sqrt(K''(t))`.

use crate::cgf::{CgfEvaluation, MultivariateCgf, UnivariateCgf};
use crate::error::RangeSide;
use crate::exact::LATTICE_TOLERANCE;
use crate::model::NullFit;
use crate::numeric::{normal_cdf, normal_pdf, normal_sf};
use crate::pvalue::Method;
use crate::variant::VariantTest;
use crate::{Error, Result};
use nalgebra::DVector;

/// Below this `|t_hat|` or `|w|` the saddlepoint formula (which has a
/// removable singularity at zero) is not evaluated directly.
pub const NEAR_ZERO: f64 = 1e-4;
const MAX_DOUBLE_ITERATIONS: usize = 100;
const MAX_SINGLE_ITERATIONS: usize = 200;
const MAX_HALVINGS: usize = 60;
/// Largest safe `|t'z|`; beyond it the target is treated as unattainable.
const MAX_LINEAR_PREDICTOR: f64 = 700.0;
/// Largest Newton step (max-norm) of the double saddlepoint solver near the
/// origin; flat regions of the CGF otherwise throw iterates far past the
/// root. Further out the cap is `|t|`, so unattainable targets still escape
/// geometrically.
const MAX_DOUBLE_STEP: f64 = 8.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SaddleSolution {
    pub t_hat: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
}

/// Solution of the double saddlepoint equation together with the CGF
/// evaluated there.
#[derive(Debug, Clone, PartialEq)]
pub struct DoubleSaddle {
    pub solution: SaddleSolution,
    pub evaluation: CgfEvaluation,
}

fn side_of(x: f64) -> RangeSide {
    if x > 0.0 {
        RangeSide::Above
    } else {
        RangeSide::Below
    }
}

/// Solve `grad K(t) = (0, ..., 0, target)` by Newton's method from `t = 0`.
///
/// Steps are halved until the convex objective `K(t) - t'b` decreases (or,
/// where it is flat to rounding, the residual norm does). Iterates running off towards infinity mean the
/// target is outside the attainable range of the gradient.
pub fn solve_double<C: MultivariateCgf + ?Sized>(cgf: &C, target: f64) -> Result<DoubleSaddle> {
    let dim = cgf.dim();
    let last = dim - 1;
    let tolerance = 1e-10 * (1.0 + target.abs());
    let row_norm = cgf.max_row_norm();
    let t_limit = if row_norm > 0.0 {
        MAX_LINEAR_PREDICTOR / row_norm
    } else {
        f64::INFINITY
    };
    let mut b = DVector::zeros(dim);
    b[last] = target;

    let mut t = DVector::zeros(dim);
    let mut eval = cgf.evaluate(t.as_slice());
    let mut resid = &eval.gradient - &b;
    let mut res = resid.amax();
    let mut objective = eval.value - t.dot(&b);

    for iteration in 0..=MAX_DOUBLE_ITERATIONS {
        if res <= tolerance {
            return Ok(DoubleSaddle {
                solution: SaddleSolution {
                    t_hat: t.as_slice().to_vec(),
                    converged: true,
                    iterations: iteration,
                    residual: res,
                },
                evaluation: eval,
            });
        }
        if iteration == MAX_DOUBLE_ITERATIONS {
            break;
        }
        let Some(chol) = eval.hessian.clone().cholesky() else {
            return Err(Error::OutsideRange {
                target,
                side: side_of(if t[last] != 0.0 { t[last] } else { target }),
            });
        };
        let mut step = -chol.solve(&resid);
        let (step_norm, cap) = (step.amax(), MAX_DOUBLE_STEP.max(t.amax()));
        if step_norm > cap {
            step *= cap / step_norm;
        }

        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let candidate = &t + &step * scale;
            if candidate.amax() > t_limit {
                scale *= 0.5;
                continue;
            }
            let cand_eval = cgf.evaluate(candidate.as_slice());
            let cand_resid = &cand_eval.gradient - &b;
            let cand_res = cand_resid.amax();
            let cand_objective = cand_eval.value - candidate.dot(&b);
            // the objective decides; near the root it is flat to rounding
            // and the residual takes over
            let flat = cand_objective <= objective + 1e-13 * (1.0 + objective.abs());
            if cand_objective < objective || (flat && cand_res < res) {
                t = candidate;
                eval = cand_eval;
                resid = cand_resid;
                res = cand_res;
                objective = cand_objective;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            return Err(Error::SaddleNoConvergence {
                iterations: iteration + 1,
                residual: res,
            });
        }
        if t.amax() > 0.5 * t_limit {
            return Err(Error::OutsideRange {
                target,
                side: side_of(t[last]),
            });
        }
    }
    Err(Error::SaddleNoConvergence {
        iterations: MAX_DOUBLE_ITERATIONS,
        residual: res,
    })
}

/// Solve `K'(t) = target` for a scalar CGF: bracket by doubling, then
/// Newton steps safeguarded by bisection.
pub fn solve_single<C: UnivariateCgf + ?Sized>(cgf: &C, target: f64) -> Result<SaddleSolution> {
    let (lo, hi) = cgf.derivative_range();
    if !(target > lo) {
        return Err(Error::OutsideRange {
            target,
            side: RangeSide::Below,
        });
    }
    if !(target < hi) {
        return Err(Error::OutsideRange {
            target,
            side: RangeSide::Above,
        });
    }
    let tolerance = 1e-12 * (1.0 + target.abs());
    let f = |t: f64| {
        let (_, k1, k2) = cgf.evaluate(t);
        (k1 - target, k2)
    };
    let (f0, _) = f(0.0);
    if f0.abs() <= tolerance {
        return Ok(SaddleSolution {
            t_hat: vec![0.0],
            converged: true,
            iterations: 0,
            residual: f0.abs(),
        });
    }

    // K' is increasing: f(0) < 0 means the root is positive.
    let direction = if f0 < 0.0 { 1.0 } else { -1.0 };
    let (mut a, mut b) = (0.0f64, direction);
    let mut expansions = 0;
    while f(b).0 * direction < 0.0 {
        a = b;
        b *= 2.0;
        expansions += 1;
        if expansions > 1100 || !b.is_finite() {
            return Err(Error::OutsideRange {
                target,
                side: side_of(direction),
            });
        }
    }
    let (mut lo_t, mut hi_t) = if a < b { (a, b) } else { (b, a) };

    let mut t = a;
    let (mut ft, mut dft) = f(t);
    for iteration in 1..=MAX_SINGLE_ITERATIONS {
        let newton = t - ft / dft;
        t = if dft > 0.0 && newton > lo_t && newton < hi_t {
            newton
        } else {
            0.5 * (lo_t + hi_t)
        };
        (ft, dft) = f(t);
        if ft < 0.0 {
            lo_t = t;
        } else {
            hi_t = t;
        }
        let width = hi_t - lo_t;
        if ft.abs() <= tolerance || width <= 4.0 * f64::EPSILON * t.abs().max(f64::MIN_POSITIVE) {
            return Ok(SaddleSolution {
                t_hat: vec![t],
                converged: true,
                iterations: iteration,
                residual: ft.abs(),
            });
        }
    }
    Err(Error::SaddleNoConvergence {
        iterations: MAX_SINGLE_ITERATIONS,
        residual: ft.abs(),
    })
}

/// Argument `r*` of the Barndorff-Nielsen approximation
/// `S(u) = 1 - Phi(r*)`, `r* = w + ln(v / w) / w`.
#[inline]
pub fn bn_argument(w: f64, v: f64) -> f64 {
    w + (v / w).ln() / w
}

/// Barndorff-Nielsen survival approximation.
pub fn bn_tail(w: f64, v: f64) -> f64 {
    normal_sf(bn_argument(w, v)).clamp(0.0, 1.0)
}

/// Lugannani-Rice survival `1 - Phi(w) + phi(w)(1/v - 1/w)`.
///
/// Diagnostic only: unlike [`bn_tail`] it can leave `[0, 1]`, which is
/// returned as is so callers can see it.
pub fn lr_tail_diagnostic(w: f64, v: f64) -> f64 {
    normal_sf(w) + normal_pdf(w) * (1.0 / v - 1.0 / w)
}

/// A survival probability `P(U >= u)` and its complement `P(U < u)`, each
/// computed without cancellation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailResult {
    pub method: Method,
    pub u: f64,
    pub survival: f64,
    pub complement: f64,
    pub w: Option<f64>,
    pub v: Option<f64>,
    /// The normal approximation replaced the saddlepoint formula near `t = 0`.
    pub fallback_used: bool,
    /// `u` lies outside the support (or the target outside the attainable
    /// range), so the tail is exactly 0 or 1.
    pub boundary: bool,
}

impl TailResult {
    pub(crate) fn certain(method: Method, u: f64, survival_is_one: bool) -> Self {
        let (survival, complement) = if survival_is_one { (1.0, 0.0) } else { (0.0, 1.0) };
        Self {
            method,
            u,
            survival,
            complement,
            w: None,
            v: None,
            fallback_used: false,
            boundary: true,
        }
    }

    pub(crate) fn from_z(method: Method, u: f64, z: f64, w: Option<f64>, v: Option<f64>, fallback_used: bool) -> Self {
        Self {
            method,
            u,
            survival: normal_sf(z),
            complement: normal_cdf(z),
            w,
            v,
            fallback_used,
            boundary: false,
        }
    }
}

/// Support information a tail evaluation needs.
#[derive(Debug, Clone, Copy)]
pub(crate) struct TailSetting {
    pub var_cond: f64,
    pub lower: f64,
    pub upper: f64,
}

impl TailSetting {
    /// Tails that follow from the support alone (for corrected methods).
    fn lattice_boundary(&self, method: Method, u: f64) -> Option<TailResult> {
        if u <= self.lower + LATTICE_TOLERANCE {
            Some(TailResult::certain(method, u, true))
        } else if u > self.upper + LATTICE_TOLERANCE {
            Some(TailResult::certain(method, u, false))
        } else {
            None
        }
    }
}

fn outside_range_tail(method: Method, u: f64, err: Error) -> Result<TailResult> {
    match err {
        Error::OutsideRange { side, .. } => Ok(TailResult::certain(method, u, side == RangeSide::Below)),
        other => Err(other),
    }
}

/// Barndorff-Nielsen argument at one saddlepoint target; `None` when the
/// saddlepoint is too close to zero for the formula to be evaluated.
type BnPoint = Option<(f64, f64, f64)>;

/// Evaluate `r*` at `target`, bridging the removable singularity at the
/// conditional mean: inside it, `r*` is interpolated linearly between the
/// targets `target -+ delta` (`delta = 0.01 var_cond`, saddlepoints of
/// about 0.01). If that is not possible the normal approximation is used.
fn bn_with_fallback<F>(method: Method, u: f64, target: f64, var_cond: f64, mut at: F) -> Result<TailResult>
where
    F: FnMut(f64) -> Result<BnPoint>,
{
    if let Some((z, w, v)) = at(target)? {
        return Ok(TailResult::from_z(method, u, z, Some(w), Some(v), false));
    }
    let delta = 0.01 * var_cond;
    let bridged = match (at(target - delta), at(target + delta)) {
        (Ok(Some((lo, ..))), Ok(Some((hi, ..)))) => 0.5 * (lo + hi),
        _ => target / var_cond.sqrt(),
    };
    Ok(TailResult::from_z(method, u, bridged, None, None, true))
}

/// Continuity-corrected double saddlepoint survival `P(U >= u | U_beta = 0)`.
pub(crate) fn double_cc_tail<C: MultivariateCgf + ?Sized>(
    method: Method,
    cgf: &C,
    ln_det_hbeta0: f64,
    setting: TailSetting,
    u: f64,
) -> Result<TailResult> {
    if let Some(r) = setting.lattice_boundary(method, u) {
        return Ok(r);
    }
    let at = |target: f64| -> Result<BnPoint> {
        let saddle = solve_double(cgf, target)?;
        let t_gamma = *saddle.solution.t_hat.last().expect("non-empty saddlepoint");
        if t_gamma.abs() < NEAR_ZERO {
            return Ok(None);
        }
        let w2 = 2.0 * (t_gamma * target - saddle.evaluation.value);
        let w = t_gamma.signum() * w2.max(0.0).sqrt();
        if w.abs() < NEAR_ZERO {
            return Ok(None);
        }
        let chol = saddle
            .evaluation
            .hessian
            .clone()
            .cholesky()
            .ok_or(Error::Factorization)?;
        let ln_det_h = 2.0 * chol.l_dirty().diagonal().iter().map(|x| x.ln()).sum::<f64>();
        let v = 2.0 * (0.5 * t_gamma).sinh() * (0.5 * (ln_det_h - ln_det_hbeta0)).exp();
        Ok(Some((bn_argument(w, v), w, v)))
    };
    match bn_with_fallback(method, u, u - 0.5, setting.var_cond, at) {
        Err(e) => outside_range_tail(method, u, e),
        ok => ok,
    }
}

/// Single saddlepoint survival of the efficient score, with (`corrected`)
/// or without continuity correction.
pub(crate) fn single_tail<C: UnivariateCgf + ?Sized>(
    method: Method,
    cgf: &C,
    setting: TailSetting,
    u: f64,
    corrected: bool,
) -> Result<TailResult> {
    let target = if corrected {
        if let Some(r) = setting.lattice_boundary(method, u) {
            return Ok(r);
        }
        u - 0.5
    } else {
        // the continuous approximation has no mass at the support ends,
        // where the saddlepoint runs off to infinity
        if u <= setting.lower + LATTICE_TOLERANCE {
            return Ok(TailResult::certain(method, u, true));
        }
        if u >= setting.upper - LATTICE_TOLERANCE {
            return Ok(TailResult::certain(method, u, false));
        }
        u
    };
    let at = |target: f64| -> Result<BnPoint> {
        let t = solve_single(cgf, target)?.t_hat[0];
        if t.abs() < NEAR_ZERO {
            return Ok(None);
        }
        let (k, _, k2) = cgf.evaluate(t);
        let w = t.signum() * (2.0 * (t * target - k)).max(0.0).sqrt();
        if w.abs() < NEAR_ZERO {
            return Ok(None);
        }
        let v = if corrected {
            2.0 * (0.5 * t).sinh() * k2.sqrt()
        } else {
            t * k2.sqrt()
        };
        Ok(Some((bn_argument(w, v), w, v)))
    };
    match bn_with_fallback(method, u, target, setting.var_cond, at) {
        Err(e) => outside_range_tail(method, u, e),
        ok => ok,
    }
}

/// DSPA-CC estimate of `P(U >= u | U_beta = 0)`.
pub fn dspa_cc_survival(fit: &NullFit, g: &[u8], u: f64) -> Result<TailResult> {
    VariantTest::new(fit, g)?.survival(Method::DspaCc, u)
}

/// ESPA-CC (`corrected`) or continuous ESPA estimate of `P(U >= u)`.
pub fn espa_survival(fit: &NullFit, g: &[u8], u: f64, corrected: bool) -> Result<TailResult> {
    let method = if corrected { Method::EspaCc } else { Method::Espa };
    VariantTest::new(fit, g)?.survival(method, u)
}

/// `P(U <= u) = 1 - S(u + 1)` for a lattice statistic with step 1.
pub fn left_tail(method: Method, fit: &NullFit, g: &[u8], u: f64) -> Result<f64> {
    VariantTest::new(fit, g)?.left_tail(method, u)
}
