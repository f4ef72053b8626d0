//! Constant interventions `X^l := ξ` and the moments of the resulting
//! `(d-1)`-dimensional process.
//!
//! Coordinate `l` is permuted to the front and the model is split into blocks
//!
//! ```text
//! A = [[A11, A12],      G_k = [[G_k11, G_k12],
//!      [A21, A22]]             [G_k21, G_k22]]
//! ```
//!
//! so the survivors `Y = X^{(-l)}` follow `dY = (A21 ξ + A22 Y) dt + …` with
//! noise `G2 dW` (additive) or `Σ_k (G_k21 ξ + G_k22 Y) dW_k` (multiplicative).

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{default_rank_tol, expm, numerical_rank, symmetrize, Mat, Vector};
use crate::models::{AdditiveSde, MultiplicativeSde, SdeModel};
use crate::moments::{
    covariance_additive, covariance_additive_ode, cross_covariance_additive, MomentCurve,
    SecondKind, DEFAULT_ODE_STEP,
};
use crate::ode::{check_grid, rk4_on_grid};
use crate::simulate::{EulerStep, TrajectorySet};

/// Clamp coordinate `l` (1-based) to the constant `xi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InterventionSpec {
    pub l: usize,
    pub xi: f64,
}

impl InterventionSpec {
    pub fn new(l: usize, xi: f64) -> Self {
        InterventionSpec { l, xi }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if d < 2 {
            return Err(Error::InvalidArgument(
                "intervention needs d >= 2: no coordinates would remain".into(),
            ));
        }
        if self.l == 0 || self.l > d {
            return Err(Error::InvalidArgument(format!(
                "intervened coordinate must be in 1..={d}, got {}",
                self.l
            )));
        }
        if !self.xi.is_finite() {
            return Err(Error::InvalidArgument("intervention value must be finite".into()));
        }
        Ok(())
    }

    /// Original indices of the surviving coordinates, in order.
    pub fn survivors(&self, d: usize) -> Vec<usize> {
        (0..d).filter(|&i| i != self.l - 1).collect()
    }

    /// Inserts `ξ` at position `l` of a survivor vector.
    pub fn full_state(&self, y: &Vector) -> Vector {
        let d = y.len() + 1;
        let k = self.l - 1;
        Vector::from_fn(d, |i, _| match i.cmp(&k) {
            std::cmp::Ordering::Less => y[i],
            std::cmp::Ordering::Equal => self.xi,
            std::cmp::Ordering::Greater => y[i - 1],
        })
    }

    /// Full-state view of simulated survivor paths: row `l` is identically `ξ`.
    pub fn reassemble(&self, set: &TrajectorySet) -> TrajectorySet {
        let paths = set
            .paths
            .iter()
            .map(|p| p.clone().insert_row(self.l - 1, self.xi))
            .collect();
        TrajectorySet {
            times: set.times.clone(),
            paths,
            seed: set.seed,
            scheme: set.scheme,
        }
    }
}

/// `(A21, A22)` rows and columns of the survivor block.
fn drift_blocks(a: &Mat, spec: &InterventionSpec) -> (Vector, Mat) {
    let keep = spec.survivors(a.nrows());
    let k = spec.l - 1;
    let a21 = Vector::from_fn(keep.len(), |i, _| a[(keep[i], k)]);
    let a22 = Mat::from_fn(keep.len(), keep.len(), |i, j| a[(keep[i], keep[j])]);
    (a21, a22)
}

fn survivor_rows(m: &Mat, keep: &[usize]) -> Mat {
    Mat::from_fn(keep.len(), m.ncols(), |i, j| m[(keep[i], j)])
}

fn survivor_vec(x: &Vector, keep: &[usize]) -> Vector {
    Vector::from_fn(keep.len(), |i, _| x[keep[i]])
}

#[derive(Debug, Clone, PartialEq)]
pub struct PostInterventionAdditive {
    pub a21: Vector,
    pub a22: Mat,
    pub g2: Mat,
    pub x0_minus: Vector,
    pub xi: f64,
    pub spec: InterventionSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PostInterventionMultiplicative {
    pub a21: Vector,
    pub a22: Mat,
    pub g21: Vec<Vector>,
    pub g22: Vec<Mat>,
    pub x0_minus: Vector,
    pub xi: f64,
    pub spec: InterventionSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PostIntervention {
    Additive(PostInterventionAdditive),
    Multiplicative(PostInterventionMultiplicative),
}

pub fn intervene_additive(m: &AdditiveSde, spec: InterventionSpec) -> Result<PostInterventionAdditive> {
    spec.validate(m.dim())?;
    let keep = spec.survivors(m.dim());
    let (a21, a22) = drift_blocks(m.a(), &spec);
    Ok(PostInterventionAdditive {
        a21,
        a22,
        g2: survivor_rows(m.g(), &keep),
        x0_minus: survivor_vec(m.x0(), &keep),
        xi: spec.xi,
        spec,
    })
}

pub fn intervene_multiplicative(
    m: &MultiplicativeSde,
    spec: InterventionSpec,
) -> Result<PostInterventionMultiplicative> {
    spec.validate(m.dim())?;
    let keep = spec.survivors(m.dim());
    let (a21, a22) = drift_blocks(m.a(), &spec);
    let (g21, g22) = m.gs().iter().map(|g| drift_blocks(g, &spec)).unzip();
    Ok(PostInterventionMultiplicative {
        a21,
        a22,
        g21,
        g22,
        x0_minus: survivor_vec(m.x0(), &keep),
        xi: spec.xi,
        spec,
    })
}

pub fn intervene(model: &SdeModel, spec: InterventionSpec) -> Result<PostIntervention> {
    Ok(match model {
        SdeModel::Additive(m) => PostIntervention::Additive(intervene_additive(m, spec)?),
        SdeModel::Multiplicative(m) => PostIntervention::Multiplicative(intervene_multiplicative(m, spec)?),
    })
}

impl PostInterventionAdditive {
    pub fn h2(&self) -> Mat {
        &self.g2 * self.g2.transpose()
    }

    /// Constant drift offset `A21 ξ`.
    pub fn offset(&self) -> Vector {
        &self.a21 * self.xi
    }

    /// The survivor OU process with its offset dropped; it has the same covariance.
    fn centered(&self) -> Result<AdditiveSde> {
        AdditiveSde::new(self.a22.clone(), self.g2.clone(), self.x0_minus.clone())
    }
}

impl PostInterventionMultiplicative {
    pub fn offset(&self) -> Vector {
        &self.a21 * self.xi
    }

    /// Second-moment right-hand side for the coupled `(m, P)` system.
    pub fn rhs(&self, m: &Vector, p: &Mat) -> (Vector, Mat) {
        let b = self.offset();
        let dm = &b + &self.a22 * m;
        let bm = &b * m.transpose();
        let mut dp = &bm + bm.transpose() + &self.a22 * p + p * self.a22.transpose();
        for (g21, g22) in self.g21.iter().zip(&self.g22) {
            let c = g21 * self.xi;
            let gm = g22 * m;
            let cm = &c * gm.transpose();
            dp += &c * c.transpose() + &cm + cm.transpose() + g22 * p * g22.transpose();
        }
        (dm, dp)
    }
}

impl EulerStep for PostInterventionAdditive {
    fn dim(&self) -> usize {
        self.a22.nrows()
    }
    fn noise_dim(&self) -> usize {
        self.g2.ncols()
    }
    fn x0(&self) -> &Vector {
        &self.x0_minus
    }
    fn step(&self, y: &Vector, dt: f64, dw: &Vector) -> Vector {
        y + (self.offset() + &self.a22 * y) * dt + &self.g2 * dw
    }
}

impl EulerStep for PostInterventionMultiplicative {
    fn dim(&self) -> usize {
        self.a22.nrows()
    }
    fn noise_dim(&self) -> usize {
        self.g22.len()
    }
    fn x0(&self) -> &Vector {
        &self.x0_minus
    }
    fn step(&self, y: &Vector, dt: f64, dw: &Vector) -> Vector {
        let mut next = y + (self.offset() + &self.a22 * y) * dt;
        for ((g21, g22), w) in self.g21.iter().zip(&self.g22).zip(dw.iter()) {
            next += (g21 * self.xi + g22 * y) * *w;
        }
        next
    }
}

/// How the post-intervention mean was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanRoute {
    ClosedForm,
    /// `A22` was numerically singular.
    OdeFallback,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PostMoments {
    /// Moments of the survivors only.
    pub curve: MomentCurve,
    pub mean_route: MeanRoute,
    pub spec: InterventionSpec,
}

impl PostMoments {
    /// Moments of the full state, coordinate `l` being the constant `ξ`.
    pub fn full_curve(&self) -> MomentCurve {
        let spec = self.spec;
        let k = spec.l - 1;
        let means: Vec<Vector> = self.curve.means.iter().map(|m| spec.full_state(m)).collect();
        let seconds = self
            .curve
            .seconds
            .iter()
            .zip(&means)
            .map(|(s, full_mean)| {
                let d = s.nrows() + 1;
                let idx = |i: usize| if i < k { i } else { i - 1 };
                Mat::from_fn(d, d, |i, j| match (i == k, j == k) {
                    (false, false) => s[(idx(i), idx(j))],
                    _ => match self.curve.kind {
                        SecondKind::Covariance => 0.0,
                        SecondKind::RawSecondMoment => full_mean[i] * full_mean[j],
                    },
                })
            })
            .collect();
        MomentCurve {
            times: self.curve.times.clone(),
            means,
            seconds,
            kind: self.curve.kind,
        }
    }
}

fn is_singular(m: &Mat) -> Result<bool> {
    let n = m.nrows();
    Ok(numerical_rank(m, default_rank_tol(n, n))?.rank < n)
}

/// Survivor mean `e^{A22 t} x0⁻ − (I − e^{A22 t}) A22⁻¹ A21 ξ`, or RK4 on
/// `m' = A21 ξ + A22 m` when `A22` is singular.
pub fn post_mean_additive(p: &PostInterventionAdditive, times: &[f64]) -> Result<(Vec<Vector>, MeanRoute)> {
    check_grid(times)?;
    if is_singular(&p.a22)? {
        return Ok((post_mean_ode(&p.a22, &p.offset(), &p.x0_minus, times, DEFAULT_ODE_STEP)?, MeanRoute::OdeFallback));
    }
    let n = p.a22.nrows();
    let shift = p
        .a22
        .clone()
        .lu()
        .solve(&p.offset())
        .ok_or_else(|| Error::InvalidArgument("A22 is singular".into()))?;
    let means = times
        .iter()
        .map(|&t| {
            let e = expm(&p.a22, t)?;
            Ok(&e * &p.x0_minus - (Mat::identity(n, n) - e) * &shift)
        })
        .collect::<Result<_>>()?;
    Ok((means, MeanRoute::ClosedForm))
}

/// RK4 on `m' = b + A22 m`.
pub fn post_mean_ode(a22: &Mat, b: &Vector, x0: &Vector, times: &[f64], step: f64) -> Result<Vec<Vector>> {
    rk4_on_grid(|_, y| b + a22 * y, x0, times, step)
}

pub fn post_moments_additive(m: &AdditiveSde, spec: InterventionSpec, times: &[f64]) -> Result<PostMoments> {
    let p = intervene_additive(m, spec)?;
    let (means, mean_route) = post_mean_additive(&p, times)?;
    let seconds = covariance_additive(&p.centered()?, times)?;
    Ok(PostMoments {
        curve: MomentCurve {
            times: times.to_vec(),
            means,
            seconds,
            kind: SecondKind::Covariance,
        },
        mean_route,
        spec,
    })
}

/// Both survivor moments by RK4 only.
pub fn post_moments_additive_ode(
    m: &AdditiveSde,
    spec: InterventionSpec,
    times: &[f64],
    step: f64,
) -> Result<PostMoments> {
    let p = intervene_additive(m, spec)?;
    Ok(PostMoments {
        curve: MomentCurve {
            times: times.to_vec(),
            means: post_mean_ode(&p.a22, &p.offset(), &p.x0_minus, times, step)?,
            seconds: covariance_additive_ode(&p.centered()?, times, step)?,
            kind: SecondKind::Covariance,
        },
        mean_route: MeanRoute::OdeFallback,
        spec,
    })
}

/// Survivor cross-covariance `Cov(Y_{t+h}, Y_t)`.
pub fn post_cross_covariance_additive(m: &AdditiveSde, spec: InterventionSpec, t: f64, h: f64) -> Result<Mat> {
    cross_covariance_additive(&intervene_additive(m, spec)?.centered()?, t, h)
}

pub fn post_moments_multiplicative(
    m: &MultiplicativeSde,
    spec: InterventionSpec,
    times: &[f64],
) -> Result<PostMoments> {
    post_moments_multiplicative_with_step(m, spec, times, DEFAULT_ODE_STEP)
}

/// RK4 on the coupled `(m, P)` system, `m(0) = x0⁻`, `P(0) = x0⁻ x0⁻ᵀ`.
pub fn post_moments_multiplicative_with_step(
    m: &MultiplicativeSde,
    spec: InterventionSpec,
    times: &[f64],
    step: f64,
) -> Result<PostMoments> {
    let p = intervene_multiplicative(m, spec)?;
    let n = p.a22.nrows();
    let mut y0 = Vector::zeros(n + n * n);
    y0.rows_mut(0, n).copy_from(&p.x0_minus);
    y0.rows_mut(n, n * n)
        .copy_from_slice((&p.x0_minus * p.x0_minus.transpose()).as_slice());
    let rhs = |_: f64, y: &Vector| {
        let mean = y.rows(0, n).into_owned();
        let second = Mat::from_column_slice(n, n, &y.as_slice()[n..]);
        let (dm, dp) = p.rhs(&mean, &second);
        let mut out = Vector::zeros(n + n * n);
        out.rows_mut(0, n).copy_from(&dm);
        out.rows_mut(n, n * n).copy_from_slice(dp.as_slice());
        out
    };
    let ys = rk4_on_grid(rhs, &y0, times, step)?;
    let means = ys.iter().map(|y| y.rows(0, n).into_owned()).collect();
    let seconds = ys
        .iter()
        .map(|y| symmetrize(&Mat::from_column_slice(n, n, &y.as_slice()[n..])))
        .collect();
    Ok(PostMoments {
        curve: MomentCurve {
            times: times.to_vec(),
            means,
            seconds,
            kind: SecondKind::RawSecondMoment,
        },
        mean_route: MeanRoute::OdeFallback,
        spec,
    })
}

pub fn post_moments(model: &SdeModel, spec: InterventionSpec, times: &[f64]) -> Result<PostMoments> {
    match model {
        SdeModel::Additive(m) => post_moments_additive(m, spec, times),
        SdeModel::Multiplicative(m) => post_moments_multiplicative(m, spec, times),
    }
}

/// Largest absolute differences between two moment curves on the same grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub max_mean_diff: f64,
    pub max_cov_diff: f64,
}

impl ComparisonReport {
    pub fn within(&self, tol: f64) -> bool {
        self.max_mean_diff <= tol && self.max_cov_diff <= tol
    }
}

pub fn compare_curves(a: &MomentCurve, b: &MomentCurve) -> Result<ComparisonReport> {
    if a.times != b.times {
        return Err(Error::InvalidArgument("curves are on different time grids".into()));
    }
    if a.dim() != b.dim() || a.kind != b.kind {
        return Err(Error::Dimension(format!(
            "cannot compare {}-dimensional {:?} with {}-dimensional {:?}",
            a.dim(),
            a.kind,
            b.dim(),
            b.kind
        )));
    }
    let max_mean_diff = a
        .means
        .iter()
        .zip(&b.means)
        .map(|(x, y)| (x - y).amax())
        .fold(0.0, f64::max);
    let max_cov_diff = a
        .seconds
        .iter()
        .zip(&b.seconds)
        .map(|(x, y)| (x - y).amax())
        .fold(0.0, f64::max);
    Ok(ComparisonReport {
        max_mean_diff,
        max_cov_diff,
    })
}

/// Post-intervention moments of two models under the same intervention, compared.
pub fn compare_post_moments(
    first: &SdeModel,
    second: &SdeModel,
    spec: InterventionSpec,
    times: &[f64],
) -> Result<ComparisonReport> {
    compare_curves(&post_moments(first, spec, times)?.curve, &post_moments(second, spec, times)?.curve)
}
