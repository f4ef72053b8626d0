//! Quasi-Newton minimization with central finite-difference gradients.
//!
//! BFGS on the inverse Hessian with either a backtracking Armijo search under
//! a cap on the step length, or a strong Wolfe search whose first trial step
//! is scaled from the previous decrease. The objective may return a
//! non-finite value to mark a point as infeasible; the line search then backs
//! off.

use std::cell::Cell;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BfgsOptions {
    /// Stop when the largest gradient component is at most this.
    pub gtol: f64,
    /// When the line search can no longer make progress, the run still counts
    /// as converged if the quasi-Newton step `H⁻¹g` is at most `xtol` in
    /// every component. Zero disables this.
    pub xtol: f64,
    pub max_iter: usize,
    /// Central-difference step `fd_rel_step · (1 + |θ_i|)`.
    pub fd_rel_step: f64,
    /// Largest Euclidean length of a search direction.
    pub max_step: f64,
    /// Scale the identity by `sᵀy / yᵀy` before the first update.
    pub scale_initial: bool,
    pub line_search: LineSearch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LineSearch {
    /// Backtracking on sufficient decrease from the unit step, doubling while
    /// the unit step already improves (at most 8 times). Gradients are only
    /// taken at accepted points.
    Armijo,
    /// Strong Wolfe conditions, bracketing and zoom.
    Wolfe,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions {
            gtol: 1e-3,
            xtol: 1e-3,
            max_iter: 2000,
            fd_rel_step: 1e-6,
            max_step: 1.0,
            scale_initial: true,
            line_search: LineSearch::Armijo,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradientTolerance,
    /// Stalled at precision limits with a small predicted step.
    StepTolerance,
    IterationCap,
    /// No decrease, or only a negligible step, along the search direction
    /// (usually precision loss).
    LineSearchFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    /// Infinity norm of the final gradient.
    pub grad_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub termination: Termination,
}

/// Central-difference gradient.
pub fn fd_gradient<F: Fn(&Vector) -> f64>(f: &F, x: &Vector, rel_step: f64) -> Vector {
    let mut g = Vector::zeros(x.len());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let h = rel_step * (1.0 + x[i].abs());
        probe[i] = x[i] + h;
        let up = f(&probe);
        probe[i] = x[i] - h;
        let down = f(&probe);
        probe[i] = x[i];
        g[i] = (up - down) / (2.0 * h);
    }
    g
}

pub fn minimize_bfgs<F: Fn(&Vector) -> f64>(f: F, x0: &Vector, opts: &BfgsOptions) -> Result<Minimum> {
    let n = x0.len();
    let evals = Cell::new(0usize);
    let eval = |x: &Vector| {
        evals.set(evals.get() + 1);
        f(x)
    };
    let grad = |x: &Vector| {
        evals.set(evals.get() + 2 * x.len());
        fd_gradient(&f, x, opts.fd_rel_step)
    };

    let mut x = x0.clone();
    let mut fx = eval(&x);
    if !fx.is_finite() {
        return Err(Error::Diverged(format!("objective is {fx} at the initial point")));
    }
    let mut g = grad(&x);
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Diverged("non-finite gradient at the initial point".into()));
    }
    let mut h_inv = Mat::identity(n, n);
    let mut updated = false;
    // previous objective value, seeded so the first trial step has unit length
    let mut f_prev = fx + 0.5 * g.norm();
    let mut iter = 0;
    let termination = loop {
        if g.amax() <= opts.gtol {
            break Termination::GradientTolerance;
        }
        if iter >= opts.max_iter {
            break Termination::IterationCap;
        }
        iter += 1;

        let mut p = -(&h_inv * &g);
        let mut slope = g.dot(&p);
        if !(slope < 0.0) {
            // lost descent: restart from steepest descent
            h_inv = Mat::identity(n, n);
            updated = false;
            p = -g.clone();
            slope = g.dot(&p);
        }
        let stalled = if updated && p.amax() <= opts.xtol {
            Termination::StepTolerance
        } else {
            Termination::LineSearchFailed
        };
        let pnorm = p.norm();
        if pnorm > opts.max_step {
            p *= opts.max_step / pnorm;
            slope = g.dot(&p);
        }

        let found = match opts.line_search {
            LineSearch::Armijo => armijo_search(&eval, &x, fx, &p, slope).map(|(alpha, f)| Step {
                alpha,
                f,
                g: grad(&(&x + &p * alpha)),
            }),
            LineSearch::Wolfe => {
                let guess = 1.01 * 2.0 * (fx - f_prev) / slope;
                let alpha0 = if guess.is_finite() && guess > 0.0 { guess.min(1.0) } else { 1.0 };
                wolfe_search(&eval, &grad, &x, fx, &g, &p, alpha0)
            }
        };
        let Some(step) = found else {
            break stalled;
        };
        if step.g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged(format!("non-finite gradient after {iter} iterations")));
        }
        let s = &p * step.alpha;
        if s.amax() <= 1e-14 * (1.0 + x.amax()) {
            break stalled;
        }
        let y = &step.g - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if !updated && opts.scale_initial {
                h_inv = Mat::identity(n, n) * (sy / y.dot(&y));
            }
            updated = true;
            let rho = 1.0 / sy;
            let hy = &h_inv * &y;
            let yhy = y.dot(&hy);
            // H ← (I − ρsyᵀ) H (I − ρysᵀ) + ρssᵀ, expanded
            h_inv += (&s * s.transpose()) * (rho * rho * yhy + rho)
                - (&hy * s.transpose() + &s * hy.transpose()) * rho;
        }
        x += s;
        f_prev = fx;
        fx = step.f;
        g = step.g;
    };

    Ok(Minimum {
        x: x.iter().copied().collect(),
        f: fx,
        grad_norm: g.amax(),
        iterations: iter,
        evaluations: evals.get(),
        converged: matches!(termination, Termination::GradientTolerance | Termination::StepTolerance),
        termination,
    })
}

fn armijo_search<F: Fn(&Vector) -> f64>(f: &F, x: &Vector, fx: f64, p: &Vector, slope: f64) -> Option<(f64, f64)> {
    let armijo = |a: f64, fa: f64| fa.is_finite() && fa <= fx + C1 * a * slope;
    let mut alpha = 1.0;
    let mut fa = f(&(x + p * alpha));
    if armijo(alpha, fa) {
        for _ in 0..8 {
            let a2 = 2.0 * alpha;
            let f2 = f(&(x + p * a2));
            if armijo(a2, f2) && f2 < fa {
                alpha = a2;
                fa = f2;
            } else {
                break;
            }
        }
        return Some((alpha, fa));
    }
    for _ in 0..60 {
        alpha *= 0.5;
        fa = f(&(x + p * alpha));
        if armijo(alpha, fa) {
            return Some((alpha, fa));
        }
    }
    None
}

struct Step {
    alpha: f64,
    f: f64,
    g: Vector,
}

const C1: f64 = 1e-4;
const C2: f64 = 0.9;
const MAX_ALPHA: f64 = 1e10;

/// Strong Wolfe line search: bracketing followed by zoom with safeguarded
/// cubic interpolation. Non-finite objective values count as too long a step.
fn wolfe_search<F, G>(f: &F, grad: &G, x: &Vector, f0: f64, g0: &Vector, p: &Vector, alpha0: f64) -> Option<Step>
where
    F: Fn(&Vector) -> f64,
    G: Fn(&Vector) -> Vector,
{
    let d0 = g0.dot(p);
    let probe = |a: f64| {
        let xa = x + p * a;
        let fa = f(&xa);
        (xa, fa)
    };
    let mut lo = Trial { alpha: 0.0, f: f0, d: d0 };
    let mut alpha = alpha0;
    for i in 0..40 {
        let (xa, fa) = probe(alpha);
        if !fa.is_finite() || fa > f0 + C1 * alpha * d0 || (i > 0 && fa >= lo.f) {
            let hi = Trial { alpha, f: fa, d: f64::NAN };
            return zoom(f, grad, x, f0, d0, p, lo, hi);
        }
        let ga = grad(&xa);
        if ga.iter().any(|v| !v.is_finite()) {
            let hi = Trial { alpha, f: f64::INFINITY, d: f64::NAN };
            return zoom(f, grad, x, f0, d0, p, lo, hi);
        }
        let da = ga.dot(p);
        if da.abs() <= -C2 * d0 {
            return Some(Step { alpha, f: fa, g: ga });
        }
        if da >= 0.0 {
            let hi = Trial { alpha, f: fa, d: da };
            return zoom(f, grad, x, f0, d0, p, hi, lo);
        }
        lo = Trial { alpha, f: fa, d: da };
        alpha = (2.0 * alpha).min(MAX_ALPHA);
        if lo.alpha >= MAX_ALPHA {
            break;
        }
    }
    let g = grad(&(x + p * lo.alpha));
    (lo.alpha > 0.0).then_some(Step { alpha: lo.alpha, f: lo.f, g })
}

#[derive(Clone, Copy)]
struct Trial {
    alpha: f64,
    f: f64,
    /// Directional derivative; NaN when not evaluated.
    d: f64,
}

/// `lo` satisfies sufficient decrease and has the lower objective; the
/// minimizer lies between `lo` and `hi`.
#[allow(clippy::too_many_arguments)]
fn zoom<F, G>(f: &F, grad: &G, x: &Vector, f0: f64, d0: f64, p: &Vector, mut lo: Trial, mut hi: Trial) -> Option<Step>
where
    F: Fn(&Vector) -> f64,
    G: Fn(&Vector) -> Vector,
{
    for _ in 0..60 {
        let alpha = interpolate(&lo, &hi);
        if (hi.alpha - lo.alpha).abs() <= 1e-14 * hi.alpha.abs().max(lo.alpha.abs()).max(1e-300) {
            break;
        }
        let xa = x + p * alpha;
        let fa = f(&xa);
        if !fa.is_finite() || fa > f0 + C1 * alpha * d0 || fa >= lo.f {
            hi = Trial { alpha, f: fa, d: f64::NAN };
            continue;
        }
        let ga = grad(&xa);
        if ga.iter().any(|v| !v.is_finite()) {
            hi = Trial { alpha, f: f64::INFINITY, d: f64::NAN };
            continue;
        }
        let da = ga.dot(p);
        if da.abs() <= -C2 * d0 {
            return Some(Step { alpha, f: fa, g: ga });
        }
        if da * (hi.alpha - lo.alpha) >= 0.0 {
            hi = lo;
        }
        lo = Trial { alpha, f: fa, d: da };
    }
    // Wolfe curvature not reached; accept the best sufficient-decrease point
    (lo.alpha > 0.0).then(|| Step { alpha: lo.alpha, f: lo.f, g: grad(&(x + p * lo.alpha)) })
}

/// Cubic interpolation when both ends carry slopes, else quadratic from `lo`,
/// safeguarded to the middle 80% of the bracket.
fn interpolate(lo: &Trial, hi: &Trial) -> f64 {
    let (a, b) = (lo.alpha, hi.alpha);
    let width = b - a;
    let mid = a + 0.5 * width;
    let cand = if !hi.f.is_finite() {
        mid
    } else if hi.d.is_finite() {
        let d1 = lo.d + hi.d - 3.0 * (lo.f - hi.f) / (a - b);
        let disc = d1 * d1 - lo.d * hi.d;
        if disc < 0.0 {
            mid
        } else {
            let d2 = width.signum() * disc.sqrt();
            b - width * (hi.d + d2 - d1) / (hi.d - lo.d + 2.0 * d2)
        }
    } else {
        // minimizer of the quadratic through f(a), f'(a), f(b)
        let denom = 2.0 * (hi.f - lo.f - lo.d * width);
        if denom > 0.0 {
            a - lo.d * width * width / denom
        } else {
            mid
        }
    };
    let (l, h) = if a < b { (a, b) } else { (b, a) };
    let margin = 0.1 * (h - l);
    if cand.is_finite() {
        cand.clamp(l + margin, h - margin)
    } else {
        mid
    }
}
