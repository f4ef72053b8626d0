use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;
use serde::Serialize;

use sde_ident::estimate::{fit_against_truth, run_experiment, ExperimentSpec, FitOptions};
use sde_ident::identifiability::{
    check_additive, check_model, explain, genericity_probe, CheckOptions, Verdict,
};
use sde_ident::intervention::{compare_curves, post_moments, InterventionSpec, PostMoments};
use sde_ident::linalg::{Mat, Vector};
use sde_ident::models::{model_from_json, ModelKind, SdeModel};
use sde_ident::ode::uniform_grid;
use sde_ident::scenarios::{gsx_probe, Scenario};
use sde_ident::simulate::{simulate, Scheme, SimConfig, TrajectorySet};
use sde_ident::{rng, Error};

#[derive(Parser)]
#[command(name = "sde-ident", version, about = "Generator identifiability for linear SDEs")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Model JSON file.
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    /// Output file (stdout when absent).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Relative rank tolerance for checks, or the equality tolerance for `intervene`.
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Euler,
    Exact,
    CommutingExplicit,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Euler => Scheme::Euler,
            SchemeArg::Exact => Scheme::Exact,
            SchemeArg::CommutingExplicit => Scheme::CommutingExplicit,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Additive,
    Multiplicative,
}

#[derive(Clone, Copy, ValueEnum)]
enum Transform {
    /// `G → G R` with a random orthogonal `R` (additive).
    Rotate,
    /// `G_k → −G_k` (multiplicative).
    SignFlip,
}

#[derive(Subcommand)]
enum Command {
    /// Run every applicable identifiability check.
    Check,
    /// Explain the additive rank condition and any invariant-subspace obstruction.
    Explain,
    /// Simulate trajectories to CSV.
    Simulate {
        #[arg(long = "T", default_value_t = 1.0)]
        t_end: f64,
        #[arg(long = "n-obs", default_value_t = 50)]
        n_obs: usize,
        #[arg(long = "N", default_value_t = 10)]
        n_paths: usize,
        #[arg(long = "n-sub", default_value_t = 10)]
        n_sub: usize,
        #[arg(long, value_enum, default_value_t = SchemeArg::Euler)]
        scheme: SchemeArg,
    },
    /// Maximum-likelihood fit of trajectory CSV data; `--model` is the reference.
    Estimate {
        #[arg(long)]
        data: PathBuf,
        /// Added to every reference parameter to form the starting point.
        #[arg(long = "init-shift", default_value_t = 2.0)]
        init_shift: f64,
        /// Probe state for the squared-diffusion error (multiplicative).
        #[arg(long, value_delimiter = ',')]
        probe: Option<Vec<f64>>,
    },
    /// Table-shaped MSE summary for a built-in scenario.
    Reproduce {
        #[arg(value_parser = parse_scenario)]
        scenario: Scenario,
        #[arg(long = "N", value_delimiter = ',')]
        ns: Option<Vec<usize>>,
        #[arg(long, default_value_t = 10)]
        replications: usize,
        #[arg(long = "n-sub", default_value_t = 10)]
        n_sub: usize,
    },
    /// Post-intervention moments, optionally compared with a second model.
    Intervene {
        /// Intervened coordinate, 1-based.
        #[arg(long, default_value_t = 1)]
        l: usize,
        #[arg(long, default_value_t = 1.0)]
        xi: f64,
        #[arg(long = "T", default_value_t = 1.0)]
        t_end: f64,
        #[arg(long = "n-obs", default_value_t = 51)]
        n_obs: usize,
        /// Second model file to compare against.
        #[arg(long, conflicts_with = "transform")]
        compare: Option<PathBuf>,
        /// Compare against a transformed copy of the model.
        #[arg(long, value_enum)]
        transform: Option<Transform>,
    },
    /// Fraction of random models satisfying their condition.
    Genericity {
        #[arg(long, value_enum, default_value_t = KindArg::Additive)]
        kind: KindArg,
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long, default_value_t = 2)]
        m: usize,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
    },
}

fn parse_scenario(s: &str) -> Result<Scenario, String> {
    s.parse::<Scenario>().map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // usage errors share the generic error code; 2 is reserved for verdicts
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<u8, Error> {
    if let Some(n) = cli.global.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    }
    let g = &cli.global;
    match cli.command {
        Command::Check => {
            let model = load_model(g)?;
            let summary = check_model(&model, &check_options(g))?;
            match g.format.unwrap_or(Format::Json) {
                Format::Json => emit(g, &summary.to_json())?,
                Format::Csv => {
                    let mut w = csv::Writer::from_writer(Vec::new());
                    w.write_record(["check", "condition", "required_rank", "achieved_rank", "residual", "passed", "verdict"])?;
                    for r in &summary.reports {
                        for c in r.conditions.iter().chain(&r.cross_checks) {
                            w.write_record([
                                r.check.to_string(),
                                c.name.to_string(),
                                opt(c.required_rank),
                                opt(c.achieved_rank),
                                opt(c.residual),
                                c.passed.to_string(),
                                r.verdict.to_string(),
                            ])?;
                        }
                    }
                    emit(g, &String::from_utf8_lossy(&w.into_inner().map_err(|e| e.into_error())?))?;
                }
            }
            Ok(exit_code(summary.verdict))
        }
        Command::Explain => {
            let model = load_model(g)?;
            let SdeModel::Additive(m) = &model else {
                return Err(Error::InvalidArgument(
                    "explain applies to additive models; use check for multiplicative ones".into(),
                ));
            };
            let report = check_additive(m, &check_options(g))?;
            match g.format {
                Some(Format::Json) => emit(g, &serde_json::to_string_pretty(&report.diagnosis)?)?,
                Some(Format::Csv) => return Err(Error::InvalidArgument("explain has no CSV form".into())),
                None => emit(g, &explain(&report))?,
            }
            Ok(exit_code(report.verdict))
        }
        Command::Simulate {
            t_end,
            n_obs,
            n_paths,
            n_sub,
            scheme,
        } => {
            reject_json(g, "simulate")?;
            let model = load_model(g)?;
            let cfg = SimConfig {
                t_end,
                n_obs,
                n_sub,
                n_paths,
                seed: g.seed,
                replication: 0,
            };
            let set = simulate(&model, scheme.into(), &cfg)?;
            with_output(g, |w| set.write_csv(w))?;
            Ok(0)
        }
        Command::Estimate {
            data,
            init_shift,
            probe,
        } => {
            let truth = load_model(g)?;
            let set = TrajectorySet::read_csv(File::open(&data).map_err(|e| io_context(&data, e))?)?;
            let probe = match probe {
                Some(p) => Vector::from_vec(p),
                None if truth.dim() == 2 => gsx_probe(),
                None => Vector::from_element(truth.dim(), 1.0),
            };
            let result = fit_against_truth(&set, &truth, init_shift, &probe, &FitOptions::for_kind(truth.kind()))?;
            match g.format.unwrap_or(Format::Json) {
                Format::Json => emit(g, &result.to_json())?,
                Format::Csv => return Err(Error::InvalidArgument("estimate writes JSON only".into())),
            }
            Ok(0)
        }
        Command::Reproduce {
            scenario,
            ns,
            replications,
            n_sub,
        } => {
            let ns = ns.unwrap_or_else(|| default_ns(scenario));
            let mut spec = ExperimentSpec::new(scenario.model(), ns, replications, g.seed);
            spec.n_sub = n_sub;
            let table = run_experiment(&spec)?;
            match g.format.unwrap_or(Format::Csv) {
                Format::Csv => with_output(g, |w| table.write_csv(w))?,
                Format::Json => emit(g, &table.to_json())?,
            }
            Ok(0)
        }
        Command::Intervene {
            l,
            xi,
            t_end,
            n_obs,
            compare,
            transform,
        } => {
            let model = load_model(g)?;
            let spec = InterventionSpec::new(l, xi);
            let times = uniform_grid(t_end, n_obs);
            let post = post_moments(&model, spec, &times)?;
            let other = match (compare, transform) {
                (Some(path), _) => Some(read_model(&path)?),
                (None, Some(t)) => Some(transformed(&model, t, g.seed)?),
                (None, None) => None,
            };
            match other {
                None => match g.format.unwrap_or(Format::Csv) {
                    Format::Csv => with_output(g, |w| post.full_curve().write_csv(w, false))?,
                    Format::Json => emit(g, &serde_json::to_string_pretty(&CurveJson::from(&post))?)?,
                },
                Some(other) => {
                    let report = compare_curves(&post.curve, &post_moments(&other, spec, &times)?.curve)?;
                    let tol = g.tol.unwrap_or(1e-9);
                    let out = ComparisonJson {
                        max_mean_diff: report.max_mean_diff,
                        max_cov_diff: report.max_cov_diff,
                        tol,
                        equal: report.within(tol),
                    };
                    emit(g, &serde_json::to_string_pretty(&out)?)?;
                }
            }
            Ok(0)
        }
        Command::Genericity { kind, d, m, samples } => {
            let kind = match kind {
                KindArg::Additive => ModelKind::Additive,
                KindArg::Multiplicative => ModelKind::Multiplicative,
            };
            let result = genericity_probe(kind, d, m, samples, g.seed, &check_options(g))?;
            match g.format.unwrap_or(Format::Json) {
                Format::Json => emit(g, &serde_json::to_string_pretty(&result)?)?,
                Format::Csv => emit(
                    g,
                    &format!(
                        "kind,d,m,samples,satisfied,fraction\n{},{d},{m},{samples},{},{}\n",
                        serde_json::to_value(kind)?.as_str().unwrap_or_default(),
                        result.n_satisfied,
                        result.fraction
                    ),
                )?,
            }
            Ok(0)
        }
    }
}

#[derive(Serialize)]
struct ComparisonJson {
    max_mean_diff: f64,
    max_cov_diff: f64,
    tol: f64,
    equal: bool,
}

#[derive(Serialize)]
struct CurveJson {
    l: usize,
    xi: f64,
    mean_route: sde_ident::intervention::MeanRoute,
    second_kind: sde_ident::moments::SecondKind,
    times: Vec<f64>,
    means: Vec<Vec<f64>>,
    seconds: Vec<Vec<Vec<f64>>>,
}

impl From<&PostMoments> for CurveJson {
    fn from(p: &PostMoments) -> Self {
        let full = p.full_curve();
        CurveJson {
            l: p.spec.l,
            xi: p.spec.xi,
            mean_route: p.mean_route,
            second_kind: full.kind,
            times: full.times.clone(),
            means: full.means.iter().map(|m| m.iter().copied().collect()).collect(),
            seconds: full.seconds.iter().map(sde_ident::linalg::mat_to_rows).collect(),
        }
    }
}

fn default_ns(s: Scenario) -> Vec<usize> {
    match s {
        Scenario::Table1Id | Scenario::Table1Unid => vec![5, 20, 50],
        _ => vec![10, 50, 100],
    }
}

fn check_options(g: &Global) -> CheckOptions {
    g.tol.map(CheckOptions::with_rank_tol).unwrap_or_default()
}

fn exit_code(v: Verdict) -> u8 {
    v.exit_code() as u8
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn io_context(path: &Path, e: io::Error) -> Error {
    Error::InvalidArgument(format!("{}: {e}", path.display()))
}

fn read_model(path: &Path) -> Result<SdeModel, Error> {
    let text = fs::read_to_string(path).map_err(|e| io_context(path, e))?;
    model_from_json(&text)
}

fn load_model(g: &Global) -> Result<SdeModel, Error> {
    let path = g
        .model
        .as_deref()
        .ok_or_else(|| Error::InvalidArgument("--model is required".into()))?;
    read_model(path)
}

fn reject_json(g: &Global, cmd: &str) -> Result<(), Error> {
    if g.format == Some(Format::Json) {
        return Err(Error::InvalidArgument(format!("{cmd} writes CSV only")));
    }
    Ok(())
}

fn with_output<F>(g: &Global, f: F) -> Result<(), Error>
where
    F: FnOnce(&mut dyn Write) -> Result<(), Error>,
{
    match &g.out {
        Some(path) => {
            let mut file = io::BufWriter::new(File::create(path).map_err(|e| io_context(path, e))?);
            f(&mut file)?;
            file.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            f(&mut lock)?;
        }
    }
    Ok(())
}

fn emit(g: &Global, text: &str) -> Result<(), Error> {
    with_output(g, |w| {
        w.write_all(text.as_bytes())?;
        if !text.ends_with('\n') {
            w.write_all(b"\n")?;
        }
        Ok(())
    })
}

/// Random orthogonal `R` from the QR factor of a Gaussian matrix, sign-fixed.
fn random_orthogonal(n: usize, seed: u64) -> Mat {
    let mut r = rng::stream(seed, 0, 0);
    let z = Mat::from_fn(n, n, |_, _| r.sample::<f64, _>(rand_distr::StandardNormal));
    let qr = z.qr();
    let (q, rr) = (qr.q(), qr.r());
    let signs = Mat::from_diagonal(&Vector::from_fn(n, |i, _| if rr[(i, i)] < 0.0 { -1.0 } else { 1.0 }));
    q * signs
}

fn transformed(model: &SdeModel, t: Transform, seed: u64) -> Result<SdeModel, Error> {
    match (model, t) {
        (SdeModel::Additive(m), Transform::Rotate) => {
            Ok(m.with_g(m.g() * random_orthogonal(m.noise_dim(), seed))?.into())
        }
        (SdeModel::Multiplicative(m), Transform::SignFlip) => {
            Ok(m.with_gs(m.gs().iter().map(|g| -g).collect())?.into())
        }
        (SdeModel::Additive(m), Transform::SignFlip) => Ok(m.with_g(-m.g())?.into()),
        (SdeModel::Multiplicative(_), Transform::Rotate) => Err(Error::InvalidArgument(
            "rotate applies to additive models; use sign-flip".into(),
        )),
    }
}
