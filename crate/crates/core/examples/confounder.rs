//! Builds a second drift `A₂ ≠ A` that the unidentifiable additive model
//! cannot be told apart from, then compares the two moment curves.
//!
//! cargo run --example confounder -- [c]

use sde_ident::identifiability::construct_confounder;
use sde_ident::linalg::frobenius;
use sde_ident::moments::additive_curve;
use sde_ident::ode::uniform_grid;
use sde_ident::intervention::compare_curves;
use sde_ident::scenarios;

fn main() -> sde_ident::Result<()> {
    let c: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1.5);
    let model = scenarios::additive_unidentifiable();
    let twin = construct_confounder(&model, c)?;
    println!("A  = {:?}", sde_ident::linalg::mat_to_rows(model.a()));
    println!("A2 = {:?}", sde_ident::linalg::mat_to_rows(twin.a()));
    println!("|A2 - A|_F = {:.4}", frobenius(&(twin.a() - model.a())));

    let times = uniform_grid(1.0, 101);
    let report = compare_curves(&additive_curve(&model, &times)?, &additive_curve(&twin, &times)?)?;
    println!(
        "on [0, 1]: max mean difference {:.2e}, max covariance difference {:.2e}",
        report.max_mean_diff, report.max_cov_diff
    );
    Ok(())
}
