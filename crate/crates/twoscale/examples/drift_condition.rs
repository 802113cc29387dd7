//! Lyapunov drift condition Q(x)theta(i) <= -c2 theta(i) + c3 for the
//! linear test function theta(i) = i: margins over a parameter grid, and a
//! case where the condition fails.
//!
//! Run: `cargo run --release --example drift_condition`

use twoscale::chain::check_drift_condition;
use twoscale::models::{make_generator, FamilyName, GeneratorParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid: Vec<Vec<f64>> = (0..8)
        .map(|k| vec![k as f64 * std::f64::consts::TAU / 8.0])
        .collect();
    let theta = |i: usize| i as f64;

    // Climb-and-reset: Q theta(i) = 4 - i(2 - sin x), so c2 = 1, c3 = 5
    // holds with margin >= 1.
    let reset = make_generator(FamilyName::ResetExample232, &GeneratorParams::default())?;
    let report = check_drift_condition(&reset, &theta, 1.0, 5.0, &grid, 60)?;
    println!(
        "climb-and-reset, theta(i) = i, c2 = 1, c3 = 5: holds = {}, min margin = {:.4} (state {}, grid #{})",
        report.holds, report.min_margin, report.worst_state, report.worst_grid_index
    );

    // Birth-death: Q theta(i) = x - 1 is bounded, so a linear decay
    // demand -0.1 i with no offset must fail for large i.
    let bd = make_generator(FamilyName::BdExample21, &GeneratorParams::default())?;
    let report = check_drift_condition(&bd, &theta, 0.1, 0.0, &grid, 50)?;
    println!(
        "birth-death,     theta(i) = i, c2 = 0.1, c3 = 0: holds = {}, min margin = {:.4} (state {})",
        report.holds, report.min_margin, report.worst_state
    );

    // The constant test function is annihilated by conservative rows.
    let report = check_drift_condition(&bd, &|_| 1.0, 1.0, 1.0, &grid, 50)?;
    println!(
        "birth-death,     theta = 1,    c2 = 1,   c3 = 1: holds = {}, min margin = {:.4}",
        report.holds, report.min_margin
    );
    Ok(())
}
