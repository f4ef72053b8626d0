//! Simulates paths with each scheme and checks the sample moments against
//! the exact ones at the final time.
//!
//! cargo run --release --example simulate -- [paths] [seed]

use sde_ident::moments::{covariance_additive, mean_curve, second_moment_multiplicative};
use sde_ident::models::SdeModel;
use sde_ident::scenarios;
use sde_ident::simulate::{simulate, Scheme, SimConfig};

fn main() -> sde_ident::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n_paths: usize = args.first().and_then(|s| s.parse().ok()).unwrap_or(20_000);
    let seed: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let cfg = SimConfig { n_paths, seed, ..Default::default() };
    let t = cfg.t_end;
    let last = cfg.n_obs - 1;

    let add = scenarios::additive_identifiable();
    let exact_mean = &mean_curve(add.a(), add.x0(), &[t])?[0];
    let exact_cov = &covariance_additive(&add, &[t])?[0];
    for scheme in [Scheme::Exact, Scheme::Euler] {
        let set = simulate(&SdeModel::from(add.clone()), scheme, &cfg)?;
        println!(
            "additive {scheme:?}: |mean - e^(At)x0| = {:.2e}, |cov - V(t)| = {:.2e}",
            (set.sample_mean(last) - exact_mean).amax(),
            (set.sample_covariance(last) - exact_cov).amax()
        );
    }

    let mult = scenarios::multiplicative_identifiable();
    let exact_p = &second_moment_multiplicative(&mult, &[t])?[0];
    let set = simulate(&SdeModel::from(mult), Scheme::Euler, &cfg)?;
    let p = set.sample_second_moment(last);
    println!(
        "multiplicative Euler: relative error of E[XXᵀ] = {:.2e}",
        (p - exact_p).norm() / exact_p.norm()
    );

    let mut head = Vec::new();
    set.take(2).write_csv(&mut head)?;
    println!("\nfirst rows of the trajectory CSV:");
    for line in String::from_utf8_lossy(&head).lines().take(4) {
        println!("{line}");
    }
    Ok(())
}
