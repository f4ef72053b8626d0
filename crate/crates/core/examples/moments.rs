//! Mean and covariance (additive) or second moment (multiplicative) curves by
//! matrix exponential and by RK4, written as CSV.
//!
//! cargo run --example moments -- [out_dir]

use std::fs::File;
use std::path::PathBuf;

use sde_ident::moments::{
    additive_curve, covariance_additive_ode, mean_curve_ode, multiplicative_curve,
    second_moment_multiplicative_ode, DEFAULT_ODE_STEP,
};
use sde_ident::ode::uniform_grid;
use sde_ident::scenarios;

fn main() -> sde_ident::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| ".".into()));
    let times = uniform_grid(1.0, 21);

    let add = scenarios::additive_identifiable();
    let curve = additive_curve(&add, &times)?;
    let means = mean_curve_ode(add.a(), add.x0(), &times, DEFAULT_ODE_STEP)?;
    let covs = covariance_additive_ode(&add, &times, DEFAULT_ODE_STEP)?;
    let gap = curve
        .means
        .iter()
        .zip(&means)
        .map(|(a, b)| (a - b).amax())
        .chain(curve.seconds.iter().zip(&covs).map(|(a, b)| (a - b).amax()))
        .fold(0.0, f64::max);
    println!("additive: closed form vs RK4, largest gap {gap:.2e}");
    curve.write_csv(File::create(dir.join("additive_moments.csv"))?, false)?;

    let mult = scenarios::multiplicative_identifiable();
    let curve = multiplicative_curve(&mult, &times)?;
    let ps = second_moment_multiplicative_ode(&mult, &times, DEFAULT_ODE_STEP)?;
    let gap = curve
        .seconds
        .iter()
        .zip(&ps)
        .map(|(a, b)| (a - b).amax())
        .fold(0.0, f64::max);
    println!("multiplicative: e^(At) v vs RK4, largest gap {gap:.2e}");
    curve.write_csv(File::create(dir.join("multiplicative_moments.csv"))?, false)?;
    println!("wrote {}", dir.join("{additive,multiplicative}_moments.csv").display());
    Ok(())
}
