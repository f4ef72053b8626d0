//! Desk-scale rerun of the two MSE tables for every built-in scenario.
//!
//! cargo run --release --example reproduce_tables -- [replications] [seed]

use std::time::Instant;

use sde_ident::estimate::{run_experiment, ExperimentSpec};
use sde_ident::scenarios::Scenario;

fn main() -> sde_ident::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let replications: usize = args.first().and_then(|s| s.parse().ok()).unwrap_or(10);
    let seed: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(2024);

    for scenario in Scenario::ALL {
        let ns = match scenario {
            Scenario::Table1Id | Scenario::Table1Unid => vec![5, 20, 50],
            _ => vec![10, 50, 100],
        };
        let spec = ExperimentSpec::new(scenario.model(), ns, replications, seed);
        let start = Instant::now();
        let table = run_experiment(&spec)?;
        println!("{scenario}  ({:.1}s)", start.elapsed().as_secs_f64());
        let mut out = Vec::new();
        table.write_csv(&mut out)?;
        print!("{}", String::from_utf8_lossy(&out));
        println!();
    }
    Ok(())
}
