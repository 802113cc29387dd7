//! Stationary laws of the built-in fast-chain families at a fixed slow
//! position, with a closed-form check for the birth-death family.
//!
//! Run: `cargo run --release --example invariant_measure`

use twoscale::chain::{invariant_measure, truncate};
use twoscale::models::{make_generator, FamilyName, GeneratorParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let x = [0.5];
    let m = 100;
    println!("stationary laws at x = {}, truncation M = {m}\n", x[0]);

    for name in [
        FamilyName::BdExample21,
        FamilyName::GeomExample231,
        FamilyName::ResetExample232,
        FamilyName::BdExample233,
    ] {
        let family = make_generator(name, &GeneratorParams::default())?;
        let chain = truncate(&family, &x, m)?;
        let pi = invariant_measure(&chain, 1e-10)?;
        let head: Vec<String> = pi.weights()[..6]
            .iter()
            .map(|w| format!("{w:.6}"))
            .collect();
        println!("{:<20} pi[1..6] = {}", family.name(), head.join("  "));
    }

    // The birth-death family has the geometric law (1-x)x^(i-1).
    let family = make_generator(FamilyName::BdExample21, &GeneratorParams::default())?;
    let chain = truncate(&family, &x, m)?;
    let pi = invariant_measure(&chain, 1e-10)?;
    println!("\nbirth-death family vs geometric closed form:");
    println!("{:>4} {:>14} {:>14} {:>10}", "i", "solver", "closed form", "abs diff");
    for i in 1..=8usize {
        let closed = (1.0 - x[0]) * x[0].powi(i as i32 - 1);
        println!(
            "{i:>4} {:>14.10} {closed:>14.10} {:>10.2e}",
            pi.weight(i),
            (pi.weight(i) - closed).abs()
        );
    }
    Ok(())
}
