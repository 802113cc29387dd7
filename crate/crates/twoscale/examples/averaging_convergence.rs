//! The averaged limit: drift b-bar from the stationary law, its ODE, and a
//! compact L1 convergence experiment along a shrinking (eps, alpha)
//! diagonal.
//!
//! Run: `cargo run --release --example averaging_convergence`

use twoscale::averaging::{
    l1_error_experiment, solve_averaged_ode, AveragedSystem, ExperimentConfig,
};
use twoscale::models::{make_model, ModelName, ModelParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Indicator drift against the birth-death chain: b-bar(x) = 1 - x, so
    // the averaged path is 1 - e^{-t}(1 - x0) in closed form.
    let x0 = 0.1;
    let model = make_model(
        ModelName::IndicatorDrift,
        &ModelParams {
            x0: Some(vec![x0]),
            ..Default::default()
        },
    )?;
    let system = AveragedSystem::new(model.clone(), 80);
    println!("averaged drift of the indicator model (b-bar(x) = 1 - x):");
    for x in [0.0, 0.25, 0.5, 0.75] {
        println!("  b-bar({x:.2}) = {:.8}", system.drift(&[x])?[0]);
    }
    let path = solve_averaged_ode(&system, &[x0], 1.0, 1e-3)?;
    let closed = 1.0 - (-1.0f64).exp() * (1.0 - x0);
    println!(
        "averaged ODE at T = 1: {:.8} (closed form {:.8})\n",
        path.final_position()[0],
        closed
    );

    // L1 distance of the stochastic slow path to the averaged one,
    // shrinking both scales together.
    let model = make_model(ModelName::SinCoupled, &ModelParams::default())?;
    let grid = vec![(0.2, 0.2), (0.1, 0.1), (0.05, 0.05), (0.02, 0.02)];
    let mut cfg = ExperimentConfig::new(grid, 1.0, 200, 60, 808);
    cfg.reference_dt = 1e-3;
    let report = l1_error_experiment(&model, &cfg)?;
    println!("sin-coupled model, E|X_T - Xbar_T| per (eps, alpha) cell:");
    println!("{:>8} {:>8} {:>12} {:>12}", "eps", "alpha", "mean", "std err");
    for cell in &report.cells {
        println!(
            "{:>8} {:>8} {:>12.6} {:>12.6}",
            cell.eps, cell.alpha, cell.mean_error, cell.std_error
        );
    }
    Ok(())
}
