//! Draws random models and counts how many satisfy their identifiability
//! condition.
//!
//! cargo run --release --example genericity -- [samples] [seed]

use sde_ident::identifiability::{genericity_probe, CheckOptions};
use sde_ident::models::ModelKind;

fn main() -> sde_ident::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n: usize = args.first().and_then(|s| s.parse().ok()).unwrap_or(1000);
    let seed: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let opts = CheckOptions::default();
    for kind in [ModelKind::Additive, ModelKind::Multiplicative] {
        for (d, m) in [(2, 1), (2, 2), (3, 2), (4, 1)] {
            let r = genericity_probe(kind, d, m, n, seed, &opts)?;
            println!("{kind:?} d={d} m={m}: {}/{} satisfied ({:.3})", r.n_satisfied, r.n_samples, r.fraction);
        }
    }
    Ok(())
}
