//! Total-variation decay toward the stationary law and the fitted
//! exponential envelope c·e^(-lambda t), plus the contrast between a
//! strongly ergodic family (uniform prefactor) and a merely exponentially
//! ergodic one (prefactor exploding with the starting state).
//!
//! Run: `cargo run --release --example ergodic_rate`

use twoscale::chain::{
    fit_ergodic_rate_probed, fit_exponential_envelope, invariant_measure, sup_tv_decay, truncate,
};
use twoscale::models::{make_generator, FamilyName, GeneratorParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Strongly ergodic: climb-and-reset chain. The sup over starting
    // states decays at a state-free rate.
    let family = make_generator(FamilyName::ResetExample232, &GeneratorParams::default())?;
    let x = [0.7];
    let m = 60;
    let chain = truncate(&family, &x, m)?;
    let pi = invariant_measure(&chain, 1e-10)?;
    let times: Vec<f64> = (1..=12).map(|k| 0.3 * k as f64).collect();
    let probes: Vec<usize> = (1..=50).collect();
    let decays = sup_tv_decay(&chain, &pi, &times, &probes)?;
    println!("climb-and-reset family at x = {}: sup-TV decay", x[0]);
    println!("{:>8} {:>14}", "t", "sup_i tv");
    for (t, d) in times.iter().zip(&decays) {
        println!("{t:>8.2} {d:>14.6e}");
    }
    let fit = fit_exponential_envelope(&times, &decays)?;
    println!(
        "envelope: c = {:.4}, lambda = {:.4}, window [{:.2}, {:.2}], residual {:.3}\n",
        fit.c, fit.lambda, fit.time_window.0, fit.time_window.1, fit.residual
    );

    // Exponentially but not strongly ergodic: the birth-death chain's
    // decay rate (1-sqrt(x))^2 is shared, but the prefactor grows with
    // the starting state.
    let family = make_generator(FamilyName::BdExample21, &GeneratorParams::default())?;
    let x = [0.25];
    let times: Vec<f64> = (0..11).map(|k| 5.0 + 3.5 * k as f64).collect();
    let fit = fit_ergodic_rate_probed(&family, &x, 100, &times, &(1..=7).collect::<Vec<_>>())?;
    println!(
        "birth-death family at x = {}: fitted lambda = {:.4} (rate formula gives {:.4})",
        x[0],
        fit.lambda,
        (1.0 - x[0].sqrt()).powi(2)
    );

    let far_times: Vec<f64> = (0..9).map(|k| 100.0 + 10.0 * k as f64).collect();
    let x = [0.5];
    println!("\nper-start envelopes at x = {} (same rate, growing prefactor):", x[0]);
    println!("{:>6} {:>10} {:>12}", "start", "lambda", "c");
    for start in [1usize, 10, 25, 40] {
        let fit = fit_ergodic_rate_probed(&family, &x, 100, &far_times, &[start])?;
        println!("{start:>6} {:>10.4} {:>12.4}", fit.lambda, fit.c);
    }
    Ok(())
}
