//! Why the unidentifiable additive model fails: `x0` and the columns of `GGᵀ`
//! all sit in a proper `A`-invariant subspace.
//!
//! cargo run --example explain_subspace

use sde_ident::identifiability::{check_additive, explain, CheckOptions};
use sde_ident::scenarios;

fn main() -> sde_ident::Result<()> {
    let opts = CheckOptions::default();
    for (name, model) in [
        ("identifiable", scenarios::additive_identifiable()),
        ("unidentifiable", scenarios::additive_unidentifiable()),
    ] {
        println!("== {name}");
        print!("{}", explain(&check_additive(&model, &opts)?));
        println!();
    }
    Ok(())
}
