//! Maximum-likelihood estimation from multi-path observations and the
//! replication harness that scores estimates by mean squared error.
//!
//! Additive models use the exact Gaussian transition density
//! `N(Φ x, Σ)` from the matrix-fraction transition moments; since `Φ` and
//! `Σ` are shared by every step, the likelihood reduces to three scatter
//! matrices of the data. Multiplicative models use the one-step
//! Euler–Maruyama Gaussian approximation.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::models::{AdditiveSde, ModelFile, ModelKind, MultiplicativeSde, SdeModel};
use crate::moments::transition_moments;
use crate::optim::{minimize_bfgs, BfgsOptions, Termination};
use crate::simulate::{simulate, Scheme, SimConfig, TrajectorySet};

/// Scatter matrices of observation pairs in increment form, `δ_i = x_{i+1} − x_i`.
///
/// The residual scatter `Σ (δ − Bx)(δ − Bx)ᵀ` with `B = Φ − I` is assembled
/// from these without the cancellation that raw `x_{i+1}` moments would cause.
#[derive(Debug, Clone)]
pub struct TransitionStats {
    pub sxx: Mat,
    pub sxd: Mat,
    pub sdd: Mat,
    pub n: usize,
    pub dt: f64,
}

impl TransitionStats {
    pub fn from_data(data: &TrajectorySet) -> Result<Self> {
        let dt = data.uniform_step()?;
        let d = data.dim();
        let (mut sxx, mut sxd, mut sdd) = (Mat::zeros(d, d), Mat::zeros(d, d), Mat::zeros(d, d));
        let mut n = 0;
        for p in &data.paths {
            for i in 0..p.ncols() - 1 {
                let x = p.column(i);
                let delta = p.column(i + 1) - x;
                sxx += x * x.transpose();
                sxd += x * delta.transpose();
                sdd += &delta * delta.transpose();
                n += 1;
            }
        }
        if n == 0 {
            return Err(Error::InvalidArgument("no transitions in data".into()));
        }
        Ok(TransitionStats { sxx, sxd, sdd, n, dt })
    }

    /// `Σ_i (x_{i+1} − Φ x_i)(x_{i+1} − Φ x_i)ᵀ`.
    pub fn residual_scatter(&self, phi: &Mat) -> Mat {
        let d = phi.nrows();
        let b = phi - Mat::identity(d, d);
        let bsxd = &b * &self.sxd;
        &self.sdd - &bsxd - bsxd.transpose() + &b * &self.sxx * b.transpose()
    }
}

/// `½ [n (d log 2π + log det Σ) + tr(Σ⁻¹ S)]`, regularizing a near-singular `Σ`.
fn gaussian_nll(sigma: &Mat, scatter: &Mat, n: usize) -> Result<f64> {
    let d = sigma.nrows();
    let mut sigma = sigma.clone();
    let min_eig = sigma.clone().symmetric_eigenvalues().min();
    if min_eig < 1e-12 {
        let eps = 1e-9 * sigma.trace() / d as f64;
        for i in 0..d {
            sigma[(i, i)] += eps;
        }
    }
    let chol = sigma
        .cholesky()
        .ok_or_else(|| Error::Indefinite(min_eig))?;
    let logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let quad = (chol.inverse() * scatter).trace();
    Ok(0.5 * (n as f64 * (d as f64 * (2.0 * PI).ln() + logdet) + quad))
}

pub fn nll_additive_stats(a: &Mat, h: &Mat, stats: &TransitionStats) -> Result<f64> {
    let tm = transition_moments(a, h, stats.dt)?;
    gaussian_nll(&tm.sigma, &stats.residual_scatter(&tm.phi), stats.n)
}

/// Negative log-likelihood of the observed transitions under `dX = AX dt + G dW`.
pub fn nll_additive(a: &Mat, g: &Mat, data: &TrajectorySet) -> Result<f64> {
    let stats = TransitionStats::from_data(data)?;
    nll_additive_stats(a, &(g * g.transpose()), &stats)
}

/// Flattened observation pairs for the Euler–Maruyama likelihood.
#[derive(Debug, Clone)]
pub struct EmTransitions {
    /// `x_i` then `x_{i+1}`, `2d` values per transition.
    pairs: Vec<f64>,
    d: usize,
    dt: f64,
}

impl EmTransitions {
    pub fn from_data(data: &TrajectorySet) -> Result<Self> {
        let dt = data.uniform_step()?;
        let d = data.dim();
        let mut pairs = Vec::new();
        for p in &data.paths {
            for i in 0..p.ncols() - 1 {
                pairs.extend(p.column(i).iter());
                pairs.extend(p.column(i + 1).iter());
            }
        }
        if pairs.is_empty() {
            return Err(Error::InvalidArgument("no transitions in data".into()));
        }
        Ok(EmTransitions { pairs, d, dt })
    }

    pub fn len(&self) -> usize {
        self.pairs.len() / (2 * self.d)
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Euler–Maruyama negative log-likelihood: step `i` is Gaussian with mean
/// `x_i + A x_i Δ` and covariance `Δ Σ_k G_k x_i x_iᵀ G_kᵀ + εI`,
/// `ε = 1e-8 (1 + ‖x_i‖²) Δ`. Non-factorizable steps give `+∞`.
pub fn nll_multiplicative_em_transitions(a: &Mat, gs: &[Mat], tr: &EmTransitions) -> f64 {
    let d = tr.d;
    let dt = tr.dt;
    let log2pi = (2.0 * PI).ln();
    let mut b = vec![0.0; d];
    let mut r = vec![0.0; d];
    let mut c = vec![0.0; d * d];
    let mut total = 0.0;
    for pair in tr.pairs.chunks_exact(2 * d) {
        let (x, y) = pair.split_at(d);
        let norm2: f64 = x.iter().map(|v| v * v).sum();
        for i in 0..d {
            let ax: f64 = (0..d).map(|j| a[(i, j)] * x[j]).sum();
            r[i] = y[i] - x[i] - ax * dt;
        }
        c.fill(0.0);
        for g in gs {
            for i in 0..d {
                b[i] = (0..d).map(|j| g[(i, j)] * x[j]).sum();
            }
            for i in 0..d {
                for j in 0..=i {
                    c[i * d + j] += b[i] * b[j] * dt;
                }
            }
        }
        let eps = 1e-8 * (1.0 + norm2) * dt;
        for i in 0..d {
            c[i * d + i] += eps;
        }
        // in-place lower Cholesky
        for j in 0..d {
            let mut s = c[j * d + j];
            for k in 0..j {
                s -= c[j * d + k] * c[j * d + k];
            }
            if !(s > 0.0) {
                return f64::INFINITY;
            }
            let l = s.sqrt();
            c[j * d + j] = l;
            for i in j + 1..d {
                let mut t = c[i * d + j];
                for k in 0..j {
                    t -= c[i * d + k] * c[j * d + k];
                }
                c[i * d + j] = t / l;
            }
        }
        let mut logdet = 0.0;
        let mut quad = 0.0;
        for i in 0..d {
            let mut z = r[i];
            for k in 0..i {
                z -= c[i * d + k] * r[k];
            }
            z /= c[i * d + i];
            r[i] = z;
            quad += z * z;
            logdet += c[i * d + i].ln();
        }
        total += 0.5 * (d as f64 * log2pi + quad) + logdet;
    }
    total
}

pub fn nll_multiplicative_em(a: &Mat, gs: &[Mat], data: &TrajectorySet) -> Result<f64> {
    Ok(nll_multiplicative_em_transitions(a, gs, &EmTransitions::from_data(data)?))
}

/// Row-major `A`, then row-major `G` (additive) or each `G_k` in turn.
pub fn pack(model: &SdeModel) -> Vector {
    let mut v: Vec<f64> = Vec::new();
    let push = |v: &mut Vec<f64>, m: &Mat| v.extend(m.transpose().iter());
    push(&mut v, model.a());
    match model {
        SdeModel::Additive(m) => push(&mut v, m.g()),
        SdeModel::Multiplicative(m) => m.gs().iter().for_each(|g| push(&mut v, g)),
    }
    Vector::from_vec(v)
}

/// Inverse of [`pack`] for a model with the shape of `like`.
pub fn unpack(like: &SdeModel, theta: &Vector) -> Result<SdeModel> {
    let d = like.dim();
    let take = |off: usize, rows: usize, cols: usize| {
        Mat::from_row_slice(rows, cols, &theta.as_slice()[off..off + rows * cols])
    };
    if theta.len() != pack(like).len() {
        return Err(Error::Dimension(format!("parameter vector of length {}", theta.len())));
    }
    let a = take(0, d, d);
    match like {
        SdeModel::Additive(m) => Ok(AdditiveSde::new(a, take(d * d, d, m.noise_dim()), m.x0().clone())?.into()),
        SdeModel::Multiplicative(m) => {
            let gs = (0..m.noise_dim()).map(|k| take(d * d * (k + 1), d, d)).collect();
            Ok(MultiplicativeSde::new(a, gs, m.x0().clone())?.into())
        }
    }
}

/// `model` with every entry of `A` and of the diffusion matrices shifted by `shift`.
pub fn shifted(model: &SdeModel, shift: f64) -> SdeModel {
    let theta = pack(model).add_scalar(shift);
    unpack(model, &theta).expect("same shape")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitOptions {
    pub bfgs: BfgsOptions,
}

impl FitOptions {
    /// Gradient tolerance `1e-3` for additive and `1e-2` for multiplicative fits;
    /// step tolerance `1e-3` for both.
    pub fn for_kind(kind: ModelKind) -> Self {
        let gtol = match kind {
            ModelKind::Additive => 1e-3,
            ModelKind::Multiplicative => 1e-2,
        };
        FitOptions {
            bfgs: BfgsOptions {
                gtol,
                ..Default::default()
            },
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub estimate: ModelFile,
    pub initial: ModelFile,
    pub nll: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mse_a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mse_h: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mse_gsx: Option<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub grad_norm: f64,
    pub converged: bool,
    pub termination: Termination,
}

impl FitResult {
    pub fn estimate_model(&self) -> Result<SdeModel> {
        self.estimate.into_model()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fit result serializes")
    }
}

fn mean_sq(a: &Mat, b: &Mat) -> f64 {
    (a - b).map(|v| v * v).mean()
}

/// `Σ_k G_k x xᵀ G_kᵀ`.
pub fn squared_diffusion_at(gs: &[Mat], x: &Vector) -> Mat {
    let d = x.len();
    gs.iter().fold(Mat::zeros(d, d), |acc, g| {
        let b = g * x;
        acc + &b * b.transpose()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Mse {
    pub a: f64,
    /// `GGᵀ` entries (additive).
    pub h: Option<f64>,
    /// `Σ_k G_k x xᵀ G_kᵀ` entries at the probe (multiplicative).
    pub gsx: Option<f64>,
}

/// Entrywise mean squared errors of `estimate` against `truth`.
pub fn mse(estimate: &SdeModel, truth: &SdeModel, probe: &Vector) -> Result<Mse> {
    if estimate.kind() != truth.kind() || estimate.dim() != truth.dim() {
        return Err(Error::Dimension("estimate and truth differ in class or size".into()));
    }
    let a = mean_sq(estimate.a(), truth.a());
    Ok(match (estimate, truth) {
        (SdeModel::Additive(e), SdeModel::Additive(t)) => Mse {
            a,
            h: Some(mean_sq(&e.h(), &t.h())),
            gsx: None,
        },
        (SdeModel::Multiplicative(e), SdeModel::Multiplicative(t)) => {
            if probe.len() != t.dim() {
                return Err(Error::Dimension(format!("probe of length {} for d = {}", probe.len(), t.dim())));
            }
            Mse {
                a,
                h: None,
                gsx: Some(mean_sq(&squared_diffusion_at(e.gs(), probe), &squared_diffusion_at(t.gs(), probe))),
            }
        }
        _ => unreachable!("kinds checked above"),
    })
}

/// Minimizes the class-appropriate negative log-likelihood starting at `init`.
/// Hitting the iteration cap is reported through `converged`, not as an error.
pub fn fit(data: &TrajectorySet, init: &SdeModel, opts: &FitOptions) -> Result<FitResult> {
    if data.n_paths() == 0 {
        return Err(Error::Empty);
    }
    if data.dim() != init.dim() {
        return Err(Error::Dimension(format!(
            "data has dimension {}, model {}",
            data.dim(),
            init.dim()
        )));
    }
    let theta0 = pack(init);
    let min = match init {
        SdeModel::Additive(m) => {
            let stats = TransitionStats::from_data(data)?;
            let (d, k) = (m.dim(), m.noise_dim());
            let objective = |th: &Vector| {
                let a = Mat::from_row_slice(d, d, &th.as_slice()[..d * d]);
                let g = Mat::from_row_slice(d, k, &th.as_slice()[d * d..]);
                nll_additive_stats(&a, &(&g * g.transpose()), &stats).unwrap_or(f64::INFINITY)
            };
            minimize_bfgs(objective, &theta0, &opts.bfgs)?
        }
        SdeModel::Multiplicative(m) => {
            let tr = EmTransitions::from_data(data)?;
            let (d, k) = (m.dim(), m.noise_dim());
            let objective = |th: &Vector| {
                let s = th.as_slice();
                let a = Mat::from_row_slice(d, d, &s[..d * d]);
                let gs: Vec<Mat> = (0..k)
                    .map(|i| Mat::from_row_slice(d, d, &s[d * d * (i + 1)..d * d * (i + 2)]))
                    .collect();
                nll_multiplicative_em_transitions(&a, &gs, &tr)
            };
            minimize_bfgs(objective, &theta0, &opts.bfgs)?
        }
    };
    let est = unpack(init, &Vector::from_vec(min.x.clone()))?;
    Ok(FitResult {
        estimate: ModelFile::from_model(&est),
        initial: ModelFile::from_model(init),
        nll: min.f,
        mse_a: None,
        mse_h: None,
        mse_gsx: None,
        iterations: min.iterations,
        evaluations: min.evaluations,
        grad_norm: min.grad_norm,
        converged: min.converged,
        termination: min.termination,
    })
}

/// Fits from `truth + shift` and scores the estimate against `truth`.
pub fn fit_against_truth(
    data: &TrajectorySet,
    truth: &SdeModel,
    shift: f64,
    probe: &Vector,
    opts: &FitOptions,
) -> Result<FitResult> {
    let mut r = fit(data, &shifted(truth, shift), opts)?;
    let s = mse(&r.estimate_model()?, truth, probe)?;
    r.mse_a = Some(s.a);
    r.mse_h = s.h;
    r.mse_gsx = s.gsx;
    Ok(r)
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentSpec {
    #[serde(serialize_with = "serialize_model")]
    pub model: SdeModel,
    /// Path counts `N` to evaluate.
    pub ns: Vec<usize>,
    pub n_obs: usize,
    pub t_end: f64,
    /// Euler sub-steps per observation interval when generating data.
    pub n_sub: usize,
    pub replications: usize,
    pub seed: u64,
    pub scheme: Scheme,
    /// Added to every true parameter to form the starting point.
    pub init_shift: f64,
    pub probe: Vec<f64>,
    pub fit: FitOptions,
}

fn serialize_model<S: serde::Serializer>(m: &SdeModel, s: S) -> std::result::Result<S::Ok, S::Error> {
    ModelFile::from_model(m).serialize(s)
}

impl ExperimentSpec {
    /// Defaults: 50 observations on `[0, 1]`, Euler data with 10 sub-steps,
    /// start at truth + 2, probe `[1.33, 0.72]` (or ones when `d ≠ 2`).
    pub fn new(model: SdeModel, ns: Vec<usize>, replications: usize, seed: u64) -> Self {
        let d = model.dim();
        let probe = if d == 2 {
            crate::scenarios::gsx_probe().iter().copied().collect()
        } else {
            vec![1.0; d]
        };
        let fit = FitOptions::for_kind(model.kind());
        ExperimentSpec {
            model,
            ns,
            n_obs: 50,
            t_end: 1.0,
            n_sub: 10,
            replications,
            seed,
            scheme: Scheme::Euler,
            init_shift: 2.0,
            probe,
            fit,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidArgument("replications must be at least 1".into()));
        }
        if self.ns.is_empty() || self.ns.contains(&0) {
            return Err(Error::InvalidArgument("N list must be non-empty with positive entries".into()));
        }
        if self.probe.len() != self.model.dim() {
            return Err(Error::Dimension("probe length differs from model dimension".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplicationRecord {
    pub n: usize,
    pub replication: usize,
    pub mse_a: Option<f64>,
    pub mse_h: Option<f64>,
    pub mse_gsx: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample variance (divisor `n - 1`; zero for a single value).
    pub var: f64,
    pub std: f64,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Option<Summary> {
        if xs.is_empty() {
            return None;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = if xs.len() > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Some(Summary { mean, var, std: var.sqrt() })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentRow {
    pub n: usize,
    pub succeeded: usize,
    pub failed: usize,
    pub not_converged: usize,
    pub mse_a: Option<Summary>,
    pub mse_h: Option<Summary>,
    pub mse_gsx: Option<Summary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentTable {
    pub kind: ModelKind,
    pub rows: Vec<ExperimentRow>,
    pub records: Vec<ReplicationRecord>,
}

impl ExperimentTable {
    pub fn row(&self, n: usize) -> Option<&ExperimentRow> {
        self.rows.iter().find(|r| r.n == n)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }

    /// `N, succeeded, failed, not_converged` then mean, variance and standard
    /// deviation of MSE-A and of MSE-H (additive) or MSE-Gsx (multiplicative).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let second = match self.kind {
            ModelKind::Additive => "H",
            ModelKind::Multiplicative => "Gsx",
        };
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = ["N", "succeeded", "failed", "not_converged"].map(String::from).to_vec();
        for name in ["A", second] {
            for stat in ["mean", "var", "std"] {
                header.push(format!("mse_{name}_{stat}"));
            }
        }
        w.write_record(&header)?;
        let cells = |s: Option<Summary>| -> Vec<String> {
            match s {
                Some(s) => vec![s.mean.to_string(), s.var.to_string(), s.std.to_string()],
                None => vec![String::new(); 3],
            }
        };
        for r in &self.rows {
            let mut row = vec![r.n.to_string(), r.succeeded.to_string(), r.failed.to_string(), r.not_converged.to_string()];
            row.extend(cells(r.mse_a));
            row.extend(cells(match self.kind {
                ModelKind::Additive => r.mse_h,
                ModelKind::Multiplicative => r.mse_gsx,
            }));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// For every `N` and replication `r`: simulate `N` paths with replication id
/// `r`, fit from truth + shift and score. Path `p` of replication `r` is the
/// same for every `N`, so the datasets for increasing `N` are nested.
/// Individual failures are recorded and excluded from the summaries.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentTable> {
    spec.validate()?;
    let probe = Vector::from_vec(spec.probe.clone());
    let jobs: Vec<(usize, usize)> = spec
        .ns
        .iter()
        .flat_map(|&n| (0..spec.replications).map(move |r| (n, r)))
        .collect();
    let records: Vec<ReplicationRecord> = jobs
        .par_iter()
        .map(|&(n, r)| {
            let cfg = SimConfig {
                t_end: spec.t_end,
                n_obs: spec.n_obs,
                n_sub: spec.n_sub,
                n_paths: n,
                seed: spec.seed,
                replication: r as u64,
            };
            let outcome = simulate(&spec.model, spec.scheme, &cfg)
                .and_then(|data| fit_against_truth(&data, &spec.model, spec.init_shift, &probe, &spec.fit));
            match outcome {
                Ok(f) => ReplicationRecord {
                    n,
                    replication: r,
                    mse_a: f.mse_a,
                    mse_h: f.mse_h,
                    mse_gsx: f.mse_gsx,
                    converged: f.converged,
                    iterations: f.iterations,
                    error: None,
                },
                Err(e) => ReplicationRecord {
                    n,
                    replication: r,
                    mse_a: None,
                    mse_h: None,
                    mse_gsx: None,
                    converged: false,
                    iterations: 0,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();

    let rows = spec
        .ns
        .iter()
        .map(|&n| {
            let ok: Vec<&ReplicationRecord> = records.iter().filter(|r| r.n == n && r.error.is_none()).collect();
            let collect = |f: fn(&ReplicationRecord) -> Option<f64>| -> Vec<f64> { ok.iter().filter_map(|r| f(r)).collect() };
            ExperimentRow {
                n,
                succeeded: ok.len(),
                failed: spec.replications - ok.len(),
                not_converged: ok.iter().filter(|r| !r.converged).count(),
                mse_a: Summary::of(&collect(|r| r.mse_a)),
                mse_h: Summary::of(&collect(|r| r.mse_h)),
                mse_gsx: Summary::of(&collect(|r| r.mse_gsx)),
            }
        })
        .collect();
    Ok(ExperimentTable {
        kind: spec.model.kind(),
        rows,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios;

    fn one_step(x0: f64, x1: f64) -> TrajectorySet {
        TrajectorySet {
            times: vec![0.0, 1.0],
            paths: vec![Mat::from_row_slice(1, 2, &[x0, x1])],
            seed: None,
            scheme: None,
        }
    }

    #[test]
    fn standard_normal_step() {
        let data = one_step(0.3, 1.1);
        let nll = nll_additive(&Mat::zeros(1, 1), &Mat::identity(1, 1), &data).unwrap();
        let expect = 0.5 * (2.0 * PI).ln() + 0.5 * 0.8f64.powi(2);
        assert!((nll - expect).abs() < 1e-12);
    }

    #[test]
    fn scalar_em_likelihood_by_hand() {
        let data = TrajectorySet {
            times: vec![0.0, 0.5, 1.0],
            paths: vec![Mat::from_row_slice(1, 3, &[1.0, 1.4, 0.9]), Mat::from_row_slice(1, 3, &[-0.5, -0.2, -0.6])],
            seed: None,
            scheme: None,
        };
        let (a, g1, g2) = (0.3, 0.5, -0.2);
        let dt = 0.5;
        let mut expect = 0.0;
        for p in &data.paths {
            for i in 0..2 {
                let (x, y) = (p[(0, i)], p[(0, i + 1)]);
                let var = dt * (g1 * g1 + g2 * g2) * x * x + 1e-8 * (1.0 + x * x) * dt;
                let r = y - x - a * x * dt;
                expect += 0.5 * ((2.0 * PI * var).ln() + r * r / var);
            }
        }
        let got = nll_multiplicative_em(
            &Mat::from_element(1, 1, a),
            &[Mat::from_element(1, 1, g1), Mat::from_element(1, 1, g2)],
            &data,
        )
        .unwrap();
        assert!((got - expect).abs() < 1e-12 * expect.abs().max(1.0));
    }

    #[test]
    fn nll_depends_on_g_only_through_h() {
        let m = scenarios::additive_identifiable();
        let cfg = SimConfig { n_paths: 5, n_obs: 20, ..Default::default() };
        let data = simulate(&m.clone().into(), Scheme::Exact, &cfg).unwrap();
        let (c, s) = (0.6f64.cos(), 0.6f64.sin());
        let rot = Mat::from_row_slice(2, 2, &[c, -s, s, c]);
        let a = nll_additive(m.a(), m.g(), &data).unwrap();
        let b = nll_additive(m.a(), &(m.g() * rot), &data).unwrap();
        assert!((a - b).abs() < 1e-9 * a.abs());
    }

    #[test]
    fn pack_round_trip_and_shift() {
        let m: SdeModel = scenarios::multiplicative_identifiable().into();
        let theta = pack(&m);
        assert_eq!(theta.len(), 12);
        assert_eq!(theta[1], -0.1);
        assert_eq!(unpack(&m, &theta).unwrap(), m);
        let s = shifted(&m, 2.0);
        assert!((s.a()[(1, 0)] - 2.98).abs() < 1e-15);
        assert!(unpack(&m, &Vector::zeros(3)).is_err());
    }

    #[test]
    fn mse_of_truth_is_zero() {
        let m: SdeModel = scenarios::multiplicative_identifiable().into();
        let s = mse(&m, &m, &scenarios::gsx_probe()).unwrap();
        assert_eq!((s.a, s.gsx), (0.0, Some(0.0)));
        let shifted_by_one = shifted(&m, 1.0);
        assert!((mse(&shifted_by_one, &m, &scenarios::gsx_probe()).unwrap().a - 1.0).abs() < 1e-14);
    }

    #[test]
    fn summary_statistics() {
        let s = Summary::of(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((s.mean, s.var), (2.0, 1.0));
        assert_eq!(Summary::of(&[4.0]).unwrap().var, 0.0);
        assert!(Summary::of(&[]).is_none());
    }

    #[test]
    fn tiny_experiment_is_deterministic() {
        let spec = ExperimentSpec::new(scenarios::additive_identifiable().into(), vec![5], 1, 7);
        let a = run_experiment(&spec).unwrap();
        let b = run_experiment(&spec).unwrap();
        assert_eq!(a.rows.len(), 1);
        assert_eq!(a.rows[0].succeeded, 1);
        let mut ca = Vec::new();
        let mut cb = Vec::new();
        a.write_csv(&mut ca).unwrap();
        b.write_csv(&mut cb).unwrap();
        assert_eq!(ca, cb);
        assert!(String::from_utf8(ca).unwrap().starts_with("N,succeeded,failed,not_converged,mse_A_mean,mse_A_var,mse_A_std,mse_H_mean"));
    }
}
