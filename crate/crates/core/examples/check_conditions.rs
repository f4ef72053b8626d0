//! Identifiability verdicts for the five built-in parameter sets.
//!
//! cargo run --example check_conditions

use sde_ident::identifiability::{check_model, CheckOptions};
use sde_ident::scenarios::Scenario;

fn main() -> sde_ident::Result<()> {
    let opts = CheckOptions::default();
    for scenario in Scenario::ALL {
        let summary = check_model(&scenario.model(), &opts)?;
        println!("{scenario:<16} {}", summary.verdict);
        for report in &summary.reports {
            for c in report.conditions.iter().chain(&report.cross_checks) {
                let rank = match (c.achieved_rank, c.required_rank) {
                    (Some(a), Some(r)) => format!("rank {a}/{r}"),
                    _ => c.residual.map(|r| format!("residual {r:.2e}")).unwrap_or_default(),
                };
                println!(
                    "    {:<16} {:<24} {:<5} {rank}",
                    report.check,
                    c.name,
                    if c.passed { "pass" } else { "fail" }
                );
            }
        }
    }
    Ok(())
}
