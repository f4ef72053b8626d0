//! Maximum-likelihood fit of simulated data, started from the true
//! parameters plus 2.
//!
//! cargo run --release --example estimate -- [paths] [seed]

use sde_ident::estimate::{fit_against_truth, FitOptions};
use sde_ident::models::SdeModel;
use sde_ident::scenarios;
use sde_ident::simulate::{simulate, Scheme, SimConfig};

fn main() -> sde_ident::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n_paths: usize = args.first().and_then(|s| s.parse().ok()).unwrap_or(50);
    let seed: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(7);
    let cfg = SimConfig { n_paths, seed, ..Default::default() };
    let probe = scenarios::gsx_probe();

    let models: [(&str, SdeModel); 2] = [
        ("additive", scenarios::additive_identifiable().into()),
        ("multiplicative", scenarios::multiplicative_identifiable().into()),
    ];
    for (name, truth) in models {
        let data = simulate(&truth, Scheme::Euler, &cfg)?;
        let fit = fit_against_truth(&data, &truth, 2.0, &probe, &FitOptions::for_kind(truth.kind()))?;
        println!("{name}: {} iterations, converged {}, nll {:.3}", fit.iterations, fit.converged, fit.nll);
        println!("  estimated A = {:?}", sde_ident::linalg::mat_to_rows(fit.estimate_model()?.a()));
        if let Some(m) = fit.mse_a {
            println!("  MSE-A   {m:.3e}");
        }
        if let Some(m) = fit.mse_h {
            println!("  MSE-H   {m:.3e}");
        }
        if let Some(m) = fit.mse_gsx {
            println!("  MSE-Gsx {m:.3e}");
        }
    }
    Ok(())
}
