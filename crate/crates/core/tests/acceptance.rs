//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//!
//! Runs without the libtest harness so the report is printed even when
//! output capture is on. `cargo test --test acceptance` runs just this file.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use sde_ident::estimate::{run_experiment, ExperimentSpec, ExperimentTable};
use sde_ident::identifiability::{
    check_additive, check_controllability, check_model, construct_confounder, genericity_probe, random_model,
    CheckOptions, Verdict,
};
use sde_ident::intervention::{compare_post_moments, InterventionSpec};
use sde_ident::linalg::{expm, frobenius, krylov_columns, numerical_rank, Mat, Vector};
use sde_ident::models::{AdditiveSde, ModelKind, MultiplicativeSde, SdeModel};
use sde_ident::moments::{
    additive_curve, covariance_additive, cross_covariance_additive, cross_covariance_additive_ode,
    second_moment_multiplicative, second_moment_multiplicative_ode,
};
use sde_ident::ode::uniform_grid;
use sde_ident::rng;
use sde_ident::scenarios;
use sde_ident::simulate::{simulate_em, simulate_exact_additive, SimConfig};

/// Seed shared with the CLI default, so `sde-ident reproduce` regenerates the tables.
const SEED: u64 = 0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

type Criterion = (u32, &'static str, Duration, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        (1, "condition verdicts", Duration::from_secs(1), verdicts),
        (2, "moment identities", Duration::from_secs(10), moment_identities),
        (3, "necessity construction", Duration::from_secs(10), necessity),
        (4, "monte-carlo consistency", Duration::from_secs(120), monte_carlo),
        (5, "table 1 trend", Duration::from_secs(600), table1),
        (6, "table 2 trend", Duration::from_secs(1800), table2),
        (7, "genericity", Duration::from_secs(60), genericity),
        (8, "implication properties", Duration::from_secs(60), implications),
        (9, "intervention equivalence", Duration::from_secs(60), intervention),
    ];
    let filter: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, budget, run) in criteria {
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let out = run();
        let elapsed = start.elapsed();
        let in_time = elapsed <= budget;
        let pass = out.pass && in_time;
        if !pass {
            failed += 1;
        }
        let timing = if in_time { String::new() } else { format!(" over budget {budget:?};") };
        println!(
            "criterion {id} [{name}]: {} ({:.1}s;{timing} {})",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            out.detail
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}

fn opts() -> CheckOptions {
    CheckOptions::default()
}

fn rel(a: &Mat, b: &Mat) -> f64 {
    frobenius(&(a - b)) / frobenius(b).max(f64::MIN_POSITIVE)
}

fn verdicts() -> Outcome {
    let cases: [(&str, SdeModel, Verdict); 5] = [
        ("additive id", scenarios::additive_identifiable().into(), Verdict::Identifiable),
        ("additive unid", scenarios::additive_unidentifiable().into(), Verdict::Unidentifiable),
        ("mult id", scenarios::multiplicative_identifiable().into(), Verdict::Identifiable),
        ("mult A1-fail", scenarios::multiplicative_unidentifiable_a1().into(), Verdict::Inconclusive),
        ("mult A2-fail", scenarios::multiplicative_unidentifiable_a2().into(), Verdict::Inconclusive),
    ];
    let mut wrong = Vec::new();
    for (name, model, want) in &cases {
        match check_model(model, &opts()) {
            Ok(s) if s.verdict == *want => {}
            Ok(s) => wrong.push(format!("{name}: {:?}", s.verdict)),
            Err(e) => wrong.push(format!("{name}: {e}")),
        }
    }
    outcome(wrong.is_empty(), if wrong.is_empty() { "5/5 as labeled".into() } else { wrong.join(", ") })
}

fn moment_identities() -> Outcome {
    let grid: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
    let mut worst_v = 0.0_f64;
    for m in [scenarios::additive_identifiable(), scenarios::additive_unidentifiable()] {
        for &t in &grid {
            for &h in &grid {
                let block = cross_covariance_additive(&m, t, h).unwrap();
                let ode = cross_covariance_additive_ode(&m, t, h, 1e-3).unwrap();
                let direct = expm(m.a(), h).unwrap() * &covariance_additive(&m, &[t]).unwrap()[0];
                worst_v = worst_v.max(rel(&ode, &block)).max(rel(&direct, &block));
            }
        }
    }
    let times = [0.25, 0.5, 1.0];
    let mut worst_p = 0.0_f64;
    for m in [
        scenarios::multiplicative_identifiable(),
        scenarios::multiplicative_unidentifiable_a1(),
        scenarios::multiplicative_unidentifiable_a2(),
    ] {
        let exact = second_moment_multiplicative(&m, &times).unwrap();
        let rk4 = second_moment_multiplicative_ode(&m, &times, 1e-3).unwrap();
        for (a, b) in exact.iter().zip(&rk4) {
            worst_p = worst_p.max((a - b).amax());
        }
    }
    outcome(
        worst_v <= 1e-8 && worst_p <= 1e-6,
        format!("lagged covariance rel {worst_v:.1e} (tol 1e-8); vec P abs {worst_p:.1e} (tol 1e-6)"),
    )
}

fn necessity() -> Outcome {
    let m = scenarios::additive_unidentifiable();
    let alt = match construct_confounder(&m, 1.0) {
        Ok(a) => a,
        Err(e) => return outcome(false, e.to_string()),
    };
    let gap = frobenius(&(alt.a() - m.a()));
    let times = uniform_grid(1.0, 101);
    let c1 = additive_curve(&m, &times).unwrap();
    let c2 = additive_curve(&alt, &times).unwrap();
    let mean = c1.means.iter().zip(&c2.means).map(|(a, b)| (a - b).amax()).fold(0.0, f64::max);
    let cov = c1.seconds.iter().zip(&c2.seconds).map(|(a, b)| (a - b).amax()).fold(0.0, f64::max);
    outcome(
        gap > 0.1 && mean <= 1e-7 && cov <= 1e-7,
        format!("||A2-A||_F = {gap:.3}; max mean diff {mean:.1e}, max cov diff {cov:.1e} (tol 1e-7)"),
    )
}

fn monte_carlo() -> Outcome {
    let m = scenarios::additive_identifiable();
    let cfg = SimConfig { t_end: 1.0, n_obs: 2, n_sub: 1, n_paths: 100_000, seed: SEED, replication: 0 };
    let set = simulate_exact_additive(&m, &cfg).unwrap();
    let v = &covariance_additive(&m, &[1.0]).unwrap()[0];
    let mean = expm(m.a(), 1.0).unwrap() * m.x0();
    let n = cfg.n_paths as f64;
    let z = (set.sample_mean(1) - &mean)
        .iter()
        .enumerate()
        .map(|(i, e)| e.abs() / (v[(i, i)] / n).sqrt())
        .fold(0.0, f64::max);
    let cov_rel = rel(&set.sample_covariance(1), v);

    let mm = scenarios::multiplicative_identifiable();
    let cfg = SimConfig { t_end: 0.5, n_obs: 2, n_sub: 50, n_paths: 10_000, seed: SEED, replication: 0 };
    let em = simulate_em(&mm, &cfg).unwrap();
    let p = &second_moment_multiplicative(&mm, &[0.5]).unwrap()[0];
    let p_rel = rel(&em.sample_second_moment(1), p);
    outcome(
        z <= 3.0 && cov_rel <= 0.03 && p_rel <= 0.05,
        format!("mean max |z| {z:.2} (tol 3); cov rel {cov_rel:.4} (tol 0.03); EM second moment rel {p_rel:.4} (tol 0.05)"),
    )
}

fn mse_a_means(t: &ExperimentTable) -> Vec<f64> {
    t.rows.iter().map(|r| r.mse_a.map_or(f64::NAN, |s| s.mean)).collect()
}

fn mse_gsx_means(t: &ExperimentTable) -> Vec<f64> {
    t.rows.iter().map(|r| r.mse_gsx.map_or(f64::NAN, |s| s.mean)).collect()
}

fn decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}

fn fmt(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(" / ")
}

fn experiment(model: SdeModel, ns: &[usize], reps: usize) -> ExperimentTable {
    run_experiment(&ExperimentSpec::new(model, ns.to_vec(), reps, SEED)).expect("experiment runs")
}

fn table1() -> Outcome {
    let ns = [5, 20, 50];
    let id = mse_a_means(&experiment(scenarios::additive_identifiable().into(), &ns, 20));
    let unid = mse_a_means(&experiment(scenarios::additive_unidentifiable().into(), &ns, 20));
    let ok_id = decreasing(&id) && id[2] < 0.05;
    let ok_unid = unid.iter().all(|&x| x > 1.0);
    outcome(
        ok_id && ok_unid,
        format!("identifiable MSE-A {} (last < 0.05); unidentifiable MSE-A {:?} (all > 1)", fmt(&id), unid.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>()),
    )
}

fn table2() -> Outcome {
    let ns = [10, 50, 100];
    let id = mse_a_means(&experiment(scenarios::multiplicative_identifiable().into(), &ns, 10));
    let case2 = experiment(scenarios::multiplicative_unidentifiable_a2().into(), &ns, 10);
    let a2 = mse_a_means(&case2);
    let gsx = mse_gsx_means(&case2);
    let id_down = decreasing(&id);
    let id_small = id[2] < 0.1;
    let ok_gsx = gsx.iter().all(|&x| x > 1e3);
    let ok_a2 = decreasing(&a2);
    let yes = |b: bool| if b { "yes" } else { "no" };
    outcome(
        id_down && id_small && ok_gsx && ok_a2,
        format!(
            "identifiable MSE-A {} (decreasing: {}, last < 0.1: {}); case2 MSE-Gsx {:?} (all > 1e3: {}); case2 MSE-A {} (decreasing: {})",
            fmt(&id),
            yes(id_down),
            yes(id_small),
            gsx.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>(),
            yes(ok_gsx),
            fmt(&a2),
            yes(ok_a2)
        ),
    )
}

fn genericity() -> Outcome {
    let add = genericity_probe(ModelKind::Additive, 2, 2, 1000, SEED, &opts()).unwrap();
    let mul = genericity_probe(ModelKind::Multiplicative, 2, 2, 1000, SEED, &opts()).unwrap();
    outcome(
        add.fraction == 1.0 && mul.fraction == 1.0,
        format!("additive {}/1000, multiplicative {}/1000", add.n_satisfied, mul.n_satisfied),
    )
}

fn gauss<R: Rng>(r: &mut R, rows: usize, cols: usize) -> Mat {
    DMatrix::from_fn(rows, cols, |_, _| r.sample::<f64, _>(StandardNormal))
}

/// Random additive model; every fourth one hides `x0` and `G` in a proper
/// invariant subspace so the non-controllable branch is exercised too.
fn implication_model(i: u64) -> AdditiveSde {
    let mut r = rng::stream(SEED, 8, i);
    let d = 2 + (i % 3) as usize;
    let m = 1 + (i % 2) as usize;
    if i % 4 != 3 {
        let SdeModel::Additive(a) = random_model(ModelKind::Additive, d, m, &mut r).unwrap() else { unreachable!() };
        return a;
    }
    let k = d - 1;
    let mut a = gauss(&mut r, d, d);
    a.view_mut((k, 0), (d - k, k)).fill(0.0);
    let mut g = gauss(&mut r, d, m);
    g.rows_mut(k, d - k).fill(0.0);
    let mut x0 = gauss(&mut r, d, 1).column(0).into_owned();
    x0.rows_mut(k, d - k).fill(0.0);
    let p = gauss(&mut r, d, d);
    let p_inv = p.clone().try_inverse().expect("gaussian matrix invertible");
    AdditiveSde::new(&p * a * &p_inv, &p * g, &p * x0).unwrap()
}

fn implications() -> Outcome {
    let mut broken = Vec::new();
    let mut controllable = 0;
    for i in 0..1000u64 {
        let m = implication_model(i);
        let d = m.dim();
        let report = check_controllability(&m, &opts()).unwrap();
        if report.verdict == Verdict::Identifiable {
            controllable += 1;
            if check_additive(&m, &opts()).unwrap().verdict != Verdict::Identifiable {
                broken.push(format!("model {i}: controllable but rank condition fails"));
            }
        }
        for c in &report.cross_checks {
            if !c.passed {
                broken.push(format!("model {i}: {}", c.name));
            }
        }
        let h = m.h();
        let mut seeds = vec![m.x0().clone()];
        seeds.extend(h.column_iter().map(|c| c.into_owned()));
        let interleaved = krylov_columns(m.a(), &seeds, d).unwrap();
        let stacked = {
            let mut blocks: Vec<Mat> = Vec::new();
            let mut x = Mat::from_column_slice(d, 1, m.x0().as_slice());
            let mut hk = h.clone();
            let mut xs = Vec::new();
            for _ in 0..d {
                xs.push(x.clone());
                blocks.push(hk.clone());
                x = m.a() * x;
                hk = m.a() * hk;
            }
            let cols: Vec<Vector> = xs
                .iter()
                .chain(&blocks)
                .flat_map(|b| b.column_iter().map(|c| c.into_owned()).collect::<Vec<_>>())
                .collect();
            Mat::from_columns(&cols)
        };
        let tol = sde_ident::linalg::default_rank_tol(d, stacked.ncols());
        let r1 = numerical_rank(&interleaved, tol).unwrap().rank;
        let r2 = numerical_rank(&stacked, tol).unwrap().rank;
        if r1 != r2 {
            broken.push(format!("model {i}: rank {r1} vs {r2}"));
        }
    }
    let shown: Vec<_> = broken.iter().take(3).cloned().collect();
    let mut detail = format!("1000 models, {controllable} controllable; {} violations", broken.len());
    if !shown.is_empty() {
        detail = format!("{detail}: {}", shown.join("; "));
    }
    outcome(broken.is_empty() && controllable > 0 && controllable < 1000, detail)
}

fn random_orthogonal<R: Rng>(r: &mut R, n: usize) -> Mat {
    let qr = gauss(r, n, n).qr();
    let (q, rr) = (qr.q(), qr.r());
    let mut q = q;
    for j in 0..n {
        if rr[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

fn intervention() -> Outcome {
    let times = uniform_grid(1.0, 21);
    let mut worst_rot = 0.0_f64;
    for i in 0..20u64 {
        let mut r = rng::stream(SEED, 9, i);
        let d = 2 + (i % 3) as usize;
        let m = 1 + (i % d as u64) as usize;
        let SdeModel::Additive(base) = random_model(ModelKind::Additive, d, m, &mut r).unwrap() else { unreachable!() };
        let rotated = base.with_g(base.g() * random_orthogonal(&mut r, m)).unwrap();
        let spec = InterventionSpec::new(1 + (i as usize % d), r.sample(StandardNormal));
        let c = compare_post_moments(&base.into(), &rotated.into(), spec, &times).unwrap();
        worst_rot = worst_rot.max(c.max_mean_diff).max(c.max_cov_diff);
    }
    let mut worst_flip = 0.0_f64;
    let mut models: Vec<MultiplicativeSde> = vec![
        scenarios::multiplicative_identifiable(),
        scenarios::multiplicative_unidentifiable_a1(),
        scenarios::multiplicative_unidentifiable_a2(),
    ];
    for i in 0..10u64 {
        let mut r = rng::stream(SEED, 10, i);
        let SdeModel::Multiplicative(m) = random_model(ModelKind::Multiplicative, 3, 2, &mut r).unwrap() else { unreachable!() };
        models.push(m);
    }
    for (i, m) in models.iter().enumerate() {
        let mask = 1 + i % ((1 << m.gs().len()) - 1);
        let flipped: Vec<Mat> = m
            .gs()
            .iter()
            .enumerate()
            .map(|(k, g)| if mask >> k & 1 == 1 { -g } else { g.clone() })
            .collect();
        let alt = m.with_gs(flipped).unwrap();
        let spec = InterventionSpec::new(1 + i % m.dim(), 0.5);
        let c = compare_post_moments(&m.clone().into(), &alt.into(), spec, &times).unwrap();
        worst_flip = worst_flip.max(c.max_mean_diff).max(c.max_cov_diff);
    }
    outcome(
        worst_rot <= 1e-10 && worst_flip <= 1e-9,
        format!("rotation max diff {worst_rot:.1e} (tol 1e-10); sign flip max diff {worst_flip:.1e} (tol 1e-9)"),
    )
}
