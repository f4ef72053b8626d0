//! Trajectory generation on a uniform observation grid.
//!
//! Path `p` of replication `r` draws all its normals from
//! [`rng::stream`]`(seed, r, p)`, so output is independent of thread count.
//! Euler–Maruyama and the commuting closed form consume the stream identically
//! (`m` normals per sub-step), which makes their paths share Brownian motion.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::identifiability::{commutator_residual, DEFAULT_COMMUTE_TOL};
use crate::linalg::{expm, psd_sqrt_factor, Mat, Vector};
use crate::models::{AdditiveSde, MultiplicativeSde, SdeModel};
use crate::moments::transition_moments_additive;
use crate::ode::uniform_grid;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Euler,
    Exact,
    CommutingExplicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub t_end: f64,
    pub n_obs: usize,
    /// Euler sub-steps per observation interval.
    pub n_sub: usize,
    pub n_paths: usize,
    pub seed: u64,
    pub replication: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            t_end: 1.0,
            n_obs: 50,
            n_sub: 10,
            n_paths: 10,
            seed: 0,
            replication: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return Err(Error::InvalidArgument(format!("T must be positive, got {}", self.t_end)));
        }
        if self.n_obs < 2 {
            return Err(Error::InvalidArgument("n_obs must be at least 2".into()));
        }
        if self.n_sub < 1 || self.n_paths < 1 {
            return Err(Error::InvalidArgument("n_sub and N must be at least 1".into()));
        }
        Ok(())
    }

    /// Observation spacing `Δ`.
    pub fn delta(&self) -> f64 {
        self.t_end / (self.n_obs - 1) as f64
    }

    pub fn times(&self) -> Vec<f64> {
        uniform_grid(self.t_end, self.n_obs)
    }
}

/// Observed paths; `paths[p]` is `d × n_obs` with column `i` the state at `times[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySet {
    pub times: Vec<f64>,
    pub paths: Vec<Mat>,
    pub seed: Option<u64>,
    pub scheme: Option<Scheme>,
}

impl TrajectorySet {
    pub fn n_paths(&self) -> usize {
        self.paths.len()
    }

    pub fn n_obs(&self) -> usize {
        self.times.len()
    }

    pub fn dim(&self) -> usize {
        self.paths.first().map_or(0, |p| p.nrows())
    }

    /// Common spacing of the grid, or an error when it is not uniform.
    pub fn uniform_step(&self) -> Result<f64> {
        if self.times.len() < 2 {
            return Err(Error::InvalidArgument("need at least two observation times".into()));
        }
        let dt = self.times[1] - self.times[0];
        let ok = dt > 0.0
            && self
                .times
                .windows(2)
                .all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-9 * dt.max(1.0));
        if ok {
            Ok(dt)
        } else {
            Err(Error::InvalidArgument("observation grid is not uniform".into()))
        }
    }

    /// Keeps only the first `n` paths.
    pub fn take(&self, n: usize) -> TrajectorySet {
        TrajectorySet {
            paths: self.paths.iter().take(n).cloned().collect(),
            ..self.clone()
        }
    }

    /// States of every path at grid index `i`.
    pub fn states_at(&self, i: usize) -> Vec<Vector> {
        self.paths.iter().map(|p| p.column(i).into_owned()).collect()
    }

    pub fn sample_mean(&self, i: usize) -> Vector {
        let xs = self.states_at(i);
        xs.iter().fold(Vector::zeros(self.dim()), |acc, x| acc + x) / xs.len() as f64
    }

    /// Unbiased sample covariance at grid index `i`.
    pub fn sample_covariance(&self, i: usize) -> Mat {
        let xs = self.states_at(i);
        let mean = self.sample_mean(i);
        let d = self.dim();
        let mut c = Mat::zeros(d, d);
        for x in &xs {
            let e = x - &mean;
            c += &e * e.transpose();
        }
        c / (xs.len().max(2) - 1) as f64
    }

    /// Sample `E[X Xᵀ]` at grid index `i`.
    pub fn sample_second_moment(&self, i: usize) -> Mat {
        let xs = self.states_at(i);
        let d = self.dim();
        xs.iter().fold(Mat::zeros(d, d), |acc, x| acc + x * x.transpose()) / xs.len() as f64
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["replicate".to_string(), "time".to_string()];
        header.extend((1..=self.dim()).map(|i| format!("x_{i}")));
        w.write_record(&header)?;
        for (p, path) in self.paths.iter().enumerate() {
            for (i, t) in self.times.iter().enumerate() {
                let mut row = vec![p.to_string(), t.to_string()];
                row.extend(path.column(i).iter().map(f64::to_string));
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the format of [`TrajectorySet::write_csv`]. Every replicate must
    /// carry the same time grid.
    pub fn read_csv<R: Read>(input: R) -> Result<TrajectorySet> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers()?.clone();
        if header.len() < 3 || &header[0] != "replicate" || &header[1] != "time" {
            return Err(Error::InvalidArgument(
                "trajectory CSV must start with columns replicate,time,x_1".into(),
            ));
        }
        let d = header.len() - 2;
        let mut rows: BTreeMap<u64, Vec<(f64, Vec<f64>)>> = BTreeMap::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let parse = |s: &str| -> Result<f64> {
                s.trim().parse::<f64>().map_err(|_| {
                    Error::InvalidArgument(format!("row {}: cannot parse {s:?} as a number", line + 2))
                })
            };
            let rep: u64 = rec[0].trim().parse().map_err(|_| {
                Error::InvalidArgument(format!("row {}: bad replicate {:?}", line + 2, &rec[0]))
            })?;
            let t = parse(&rec[1])?;
            let x = (2..2 + d).map(|j| parse(&rec[j])).collect::<Result<Vec<_>>>()?;
            if x.iter().any(|v| !v.is_finite()) || !t.is_finite() {
                return Err(Error::InvalidArgument(format!("row {}: non-finite value", line + 2)));
            }
            rows.entry(rep).or_default().push((t, x));
        }
        let mut times: Option<Vec<f64>> = None;
        let mut paths = Vec::with_capacity(rows.len());
        for (rep, mut obs) in rows {
            obs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let ts: Vec<f64> = obs.iter().map(|o| o.0).collect();
            match &times {
                None => times = Some(ts),
                Some(t0) if *t0 != ts => {
                    return Err(Error::InvalidArgument(format!(
                        "replicate {rep} has a different time grid"
                    )))
                }
                _ => {}
            }
            let mut m = Mat::zeros(d, obs.len());
            for (i, (_, x)) in obs.iter().enumerate() {
                m.set_column(i, &Vector::from_column_slice(x));
            }
            paths.push(m);
        }
        let times = times.ok_or_else(|| Error::InvalidArgument("trajectory CSV has no rows".into()))?;
        Ok(TrajectorySet {
            times,
            paths,
            seed: None,
            scheme: None,
        })
    }
}

/// One Euler–Maruyama step `x + b(x) δ + σ(x) √δ ξ`.
pub trait EulerStep: Sync {
    fn dim(&self) -> usize;
    /// Number of scalar Brownian motions.
    fn noise_dim(&self) -> usize;
    fn x0(&self) -> &Vector;
    /// `dw` holds the Brownian increments `√δ ξ`.
    fn step(&self, x: &Vector, dt: f64, dw: &Vector) -> Vector;
}

impl EulerStep for AdditiveSde {
    fn dim(&self) -> usize {
        AdditiveSde::dim(self)
    }
    fn noise_dim(&self) -> usize {
        AdditiveSde::noise_dim(self)
    }
    fn x0(&self) -> &Vector {
        AdditiveSde::x0(self)
    }
    fn step(&self, x: &Vector, dt: f64, dw: &Vector) -> Vector {
        x + self.a() * x * dt + self.g() * dw
    }
}

impl EulerStep for MultiplicativeSde {
    fn dim(&self) -> usize {
        MultiplicativeSde::dim(self)
    }
    fn noise_dim(&self) -> usize {
        MultiplicativeSde::noise_dim(self)
    }
    fn x0(&self) -> &Vector {
        MultiplicativeSde::x0(self)
    }
    fn step(&self, x: &Vector, dt: f64, dw: &Vector) -> Vector {
        let mut next = x + self.a() * x * dt;
        for (g, w) in self.gs().iter().zip(dw.iter()) {
            next += g * x * *w;
        }
        next
    }
}

fn normals<R: Rng>(r: &mut R, n: usize, scale: f64) -> Vector {
    Vector::from_fn(n, |_, _| scale * r.sample::<f64, _>(StandardNormal))
}

fn run_paths<F>(cfg: &SimConfig, scheme: Scheme, path_fn: F) -> Result<TrajectorySet>
where
    F: Fn(usize, &mut rand_chacha::ChaCha8Rng) -> Result<Mat> + Sync,
{
    cfg.validate()?;
    let paths = (0..cfg.n_paths)
        .into_par_iter()
        .map(|p| {
            let mut r = rng::stream(cfg.seed, cfg.replication, p as u64);
            path_fn(p, &mut r)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrajectorySet {
        times: cfg.times(),
        paths,
        seed: Some(cfg.seed),
        scheme: Some(scheme),
    })
}

fn check_finite(x: &Vector, path: usize, time: f64) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { path, time })
    }
}

pub fn simulate_em<S: EulerStep>(sde: &S, cfg: &SimConfig) -> Result<TrajectorySet> {
    let d = sde.dim();
    let m = sde.noise_dim();
    let dt = cfg.delta() / cfg.n_sub as f64;
    let sq = dt.sqrt();
    run_paths(cfg, Scheme::Euler, |p, r| {
        let mut out = Mat::zeros(d, cfg.n_obs);
        let mut x = sde.x0().clone();
        out.set_column(0, &x);
        for i in 1..cfg.n_obs {
            for s in 0..cfg.n_sub {
                let dw = normals(r, m, sq);
                x = sde.step(&x, dt, &dw);
                check_finite(&x, p, ((i - 1) * cfg.n_sub + s + 1) as f64 * dt)?;
            }
            out.set_column(i, &x);
        }
        Ok(out)
    })
}

/// Samples each observation from the exact Gaussian transition `N(Φx, Σ)`.
pub fn simulate_exact_additive(m: &AdditiveSde, cfg: &SimConfig) -> Result<TrajectorySet> {
    cfg.validate()?;
    let tm = transition_moments_additive(m, cfg.delta())?;
    let l = psd_sqrt_factor(&tm.sigma);
    let d = m.dim();
    run_paths(cfg, Scheme::Exact, |p, r| {
        let mut out = Mat::zeros(d, cfg.n_obs);
        let mut x = m.x0().clone();
        out.set_column(0, &x);
        for i in 1..cfg.n_obs {
            x = &tm.phi * &x + &l * normals(r, d, 1.0);
            check_finite(&x, p, i as f64 * cfg.delta())?;
            out.set_column(i, &x);
        }
        Ok(out)
    })
}

/// `X_t = exp{(A − ½ΣG_k²) t + Σ G_k W_k(t)} x0`, valid when all
/// coefficients commute. Brownian paths are accumulated from `n_sub`
/// increments per interval, exactly as [`simulate_em`] draws them.
pub fn simulate_commuting_explicit(m: &MultiplicativeSde, cfg: &SimConfig) -> Result<TrajectorySet> {
    let residual = commutator_residual(m);
    if residual > DEFAULT_COMMUTE_TOL {
        return Err(Error::NotCommuting(format!("scaled commutator norm {residual:e}")));
    }
    let d = m.dim();
    let k = m.noise_dim();
    let mut drift = m.a().clone();
    for g in m.gs() {
        drift -= g * g * 0.5;
    }
    let dt = cfg.delta() / cfg.n_sub as f64;
    let sq = dt.sqrt();
    let times = cfg.times();
    run_paths(cfg, Scheme::CommutingExplicit, |p, r| {
        let mut out = Mat::zeros(d, cfg.n_obs);
        out.set_column(0, m.x0());
        let mut w = Vector::zeros(k);
        for i in 1..cfg.n_obs {
            for _ in 0..cfg.n_sub {
                w += normals(r, k, sq);
            }
            let mut exponent = &drift * times[i];
            for (g, wk) in m.gs().iter().zip(w.iter()) {
                exponent += g * *wk;
            }
            let x = expm(&exponent, 1.0)? * m.x0();
            check_finite(&x, p, times[i])?;
            out.set_column(i, &x);
        }
        Ok(out)
    })
}

/// Dispatches on model class and scheme.
pub fn simulate(model: &SdeModel, scheme: Scheme, cfg: &SimConfig) -> Result<TrajectorySet> {
    match (model, scheme) {
        (SdeModel::Additive(m), Scheme::Euler) => simulate_em(m, cfg),
        (SdeModel::Additive(m), Scheme::Exact) => simulate_exact_additive(m, cfg),
        (SdeModel::Multiplicative(m), Scheme::Euler) => simulate_em(m, cfg),
        (SdeModel::Multiplicative(m), Scheme::CommutingExplicit) => simulate_commuting_explicit(m, cfg),
        (SdeModel::Additive(_), Scheme::CommutingExplicit) => Err(Error::InvalidArgument(
            "the commuting closed form applies to multiplicative models".into(),
        )),
        (SdeModel::Multiplicative(_), Scheme::Exact) => Err(Error::InvalidArgument(
            "exact transition sampling applies to additive models".into(),
        )),
    }
}
