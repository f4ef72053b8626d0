//! First and second moments of both SDE classes.
//!
//! Every quantity has two independent routes: a closed form through matrix
//! exponentials, and fixed-step RK4 integration of the governing linear ODE.
//!
//! * mean: `m(t) = e^{At} x0`, solving `m' = A m`
//! * additive covariance: `V(t) = ∫₀ᵗ e^{As} H e^{Aᵀs} ds`, solving
//!   `V' = AV + VAᵀ + H`, `V(0) = 0`; lagged `V(t, t+h) = e^{Ah} V(t)`
//! * multiplicative second moment: `vec P(t) = e^{𝒜t} vec(x0 x0ᵀ)`, solving
//!   `P' = AP + PAᵀ + Σ_k G_k P G_kᵀ`

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{expm, psd_project, symmetrize, unvec, vec, Mat, Vector};
use crate::models::{AdditiveSde, MultiplicativeSde};
use crate::ode::{check_grid, rk4_on_grid};

/// Default RK4 step for the ODE routes.
pub const DEFAULT_ODE_STEP: f64 = 1e-3;

/// Eigenvalues of a transition covariance below `-PSD_TOL·max(1, ‖Σ‖)` are an error.
pub const PSD_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SecondKind {
    /// `E[(X-m)(X-m)ᵀ]`
    Covariance,
    /// `E[X Xᵀ]`
    RawSecondMoment,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentCurve {
    pub times: Vec<f64>,
    pub means: Vec<Vector>,
    pub seconds: Vec<Mat>,
    pub kind: SecondKind,
}

impl MomentCurve {
    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, |m| m.len())
    }

    /// Writes `time, mean_1..d, second_ij...`. The second-moment columns are
    /// the column-major lower triangle, or every entry column-major when `full`.
    pub fn write_csv<W: Write>(&self, out: W, full: bool) -> Result<()> {
        let d = self.dim();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["time".to_string()];
        header.extend((1..=d).map(|i| format!("mean_{i}")));
        let entries: Vec<(usize, usize)> = (0..d)
            .flat_map(|j| (if full { 0 } else { j }..d).map(move |i| (i, j)))
            .collect();
        header.extend(entries.iter().map(|(i, j)| format!("second_{}{}", i + 1, j + 1)));
        w.write_record(&header)?;
        for ((t, m), s) in self.times.iter().zip(&self.means).zip(&self.seconds) {
            let mut row = vec![t.to_string()];
            row.extend(m.iter().map(f64::to_string));
            row.extend(entries.iter().map(|&(i, j)| s[(i, j)].to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Conditional moments of one additive-noise transition of length `Δ`:
/// `X_{t+Δ} | X_t = x ~ N(Φ x, Σ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMoments {
    pub phi: Mat,
    pub sigma: Mat,
}

/// Matrix-fraction computation of `Φ = e^{AΔ}` and `Σ = ∫₀^Δ e^{As} H e^{Aᵀs} ds`.
///
/// With `C = [[A, H], [0, -Aᵀ]]`, `e^{CΔ} = [[Φ, F], [0, Φ^{-T}]]` and `Σ = F Φᵀ`.
pub fn transition_moments(a: &Mat, h: &Mat, delta: f64) -> Result<TransitionMoments> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::InvalidArgument(format!("transition step must be positive, got {delta}")));
    }
    let d = a.nrows();
    let mut c = Mat::zeros(2 * d, 2 * d);
    c.view_mut((0, 0), (d, d)).copy_from(a);
    c.view_mut((0, d), (d, d)).copy_from(h);
    c.view_mut((d, d), (d, d)).copy_from(&(-a.transpose()));
    let e = expm(&c, delta)?;
    let phi: Mat = e.view((0, 0), (d, d)).into_owned();
    let f: Mat = e.view((0, d), (d, d)).into_owned();
    let sigma = psd_project(&(f * phi.transpose()), PSD_TOL)?;
    Ok(TransitionMoments { phi, sigma })
}

pub fn transition_moments_additive(m: &AdditiveSde, delta: f64) -> Result<TransitionMoments> {
    transition_moments(m.a(), &m.h(), delta)
}

/// `e^{At} x0` on the grid (shared by both model classes).
pub fn mean_curve(a: &Mat, x0: &Vector, times: &[f64]) -> Result<Vec<Vector>> {
    check_grid(times)?;
    times.iter().map(|&t| Ok(expm(a, t)? * x0)).collect()
}

pub fn mean_curve_ode(a: &Mat, x0: &Vector, times: &[f64], step: f64) -> Result<Vec<Vector>> {
    rk4_on_grid(|_, y| a * y, x0, times, step)
}

/// `V(t)` on the grid via the block exponential, `V(0) = 0`.
pub fn covariance_additive(m: &AdditiveSde, times: &[f64]) -> Result<Vec<Mat>> {
    check_grid(times)?;
    let h = m.h();
    let d = m.dim();
    times
        .iter()
        .map(|&t| {
            if t == 0.0 {
                Ok(Mat::zeros(d, d))
            } else {
                Ok(transition_moments(m.a(), &h, t)?.sigma)
            }
        })
        .collect()
}

/// `V(t)` by RK4 on the Lyapunov ODE.
pub fn covariance_additive_ode(m: &AdditiveSde, times: &[f64], step: f64) -> Result<Vec<Mat>> {
    let d = m.dim();
    let a = m.a();
    let h = m.h();
    let rhs = |_: f64, y: &Vector| {
        let v = Mat::from_column_slice(d, d, y.as_slice());
        vec(&(a * &v + &v * a.transpose() + &h))
    };
    let ys = rk4_on_grid(rhs, &Vector::zeros(d * d), times, step)?;
    Ok(ys.iter().map(|y| symmetrize(&unvec(y, d, d).expect("d²"))).collect())
}

/// `V(t, t+h) = Cov(X_{t+h}, X_t) = e^{Ah} V(t)` for `h ≥ 0`.
///
/// Negative lags use `Cov(X_{t+h}, X_t) = Cov(X_t, X_{t+h})ᵀ = V(t+h) e^{Aᵀ|h|}`,
/// which needs `t + h ≥ 0`.
pub fn cross_covariance_additive(m: &AdditiveSde, t: f64, h: f64) -> Result<Mat> {
    if !(t >= 0.0) || !h.is_finite() || t + h < 0.0 {
        return Err(Error::InvalidArgument(format!("invalid lag pair t = {t}, h = {h}")));
    }
    if h >= 0.0 {
        let v = &covariance_additive(m, &[t])?[0];
        Ok(expm(m.a(), h)? * v)
    } else {
        let v = &covariance_additive(m, &[t + h])?[0];
        Ok(v * expm(m.a(), -h)?.transpose())
    }
}

/// ODE route for the lagged covariance: RK4 for `V(t)`, then each column of
/// `C(s) = V(t, t+s)` solves `C' = A C` from `C(0) = V(t)`.
pub fn cross_covariance_additive_ode(m: &AdditiveSde, t: f64, h: f64, step: f64) -> Result<Mat> {
    if h < 0.0 {
        return Err(Error::InvalidArgument("ODE route needs h >= 0".into()));
    }
    let d = m.dim();
    let v = covariance_additive_ode(m, &[t], step)?.remove(0);
    let a = m.a();
    let rhs = |_: f64, y: &Vector| {
        let c = Mat::from_column_slice(d, d, y.as_slice());
        vec(&(a * c))
    };
    let y = rk4_on_grid(rhs, &vec(&v), &[h], step)?.remove(0);
    unvec(&y, d, d)
}

/// `P(t) = E[X_t X_tᵀ]` via `vec P(t) = e^{𝒜t} v`.
pub fn second_moment_multiplicative(m: &MultiplicativeSde, times: &[f64]) -> Result<Vec<Mat>> {
    check_grid(times)?;
    let d = m.dim();
    let big = m.big_a();
    let v = m.v();
    times
        .iter()
        .map(|&t| Ok(symmetrize(&unvec(&(expm(&big, t)? * &v), d, d)?)))
        .collect()
}

/// Right-hand side `AP + PAᵀ + Σ_k G_k P G_kᵀ` of the second-moment ODE.
pub fn second_moment_rhs(m: &MultiplicativeSde, p: &Mat) -> Mat {
    let a = m.a();
    let mut out = a * p + p * a.transpose();
    for g in m.gs() {
        out += g * p * g.transpose();
    }
    out
}

pub fn second_moment_multiplicative_ode(
    m: &MultiplicativeSde,
    times: &[f64],
    step: f64,
) -> Result<Vec<Mat>> {
    let d = m.dim();
    let rhs = |_: f64, y: &Vector| {
        let p = Mat::from_column_slice(d, d, y.as_slice());
        vec(&second_moment_rhs(m, &p))
    };
    let p0 = m.x0() * m.x0().transpose();
    let ys = rk4_on_grid(rhs, &vec(&p0), times, step)?;
    Ok(ys.iter().map(|y| symmetrize(&unvec(y, d, d).expect("d²"))).collect())
}

pub fn additive_curve(m: &AdditiveSde, times: &[f64]) -> Result<MomentCurve> {
    Ok(MomentCurve {
        times: times.to_vec(),
        means: mean_curve(m.a(), m.x0(), times)?,
        seconds: covariance_additive(m, times)?,
        kind: SecondKind::Covariance,
    })
}

pub fn multiplicative_curve(m: &MultiplicativeSde, times: &[f64]) -> Result<MomentCurve> {
    Ok(MomentCurve {
        times: times.to_vec(),
        means: mean_curve(m.a(), m.x0(), times)?,
        seconds: second_moment_multiplicative(m, times)?,
        kind: SecondKind::RawSecondMoment,
    })
}
