//! Acceptance suite: one test per criterion, each printing a PASS line
//! (run with `cargo test --test acceptance -- --nocapture` to see them).
//! Tolerances are pinned here, not configurable.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::sync::Arc;

use twoscale::averaging::{
    l1_error_experiment, solve_averaged_ode, weak_error_experiment, AveragedSystem,
    ConvergenceReport, ExperimentConfig, TestFunction,
};
use twoscale::chain::{
    fit_ergodic_rate_probed, integration_by_parts_residual, invariant_measure, transition_kernel,
    truncate, GeneratorFamily, StateSpace, UpperTail,
};
use twoscale::models::{make_generator, make_model, FamilyName, GeneratorParams, ModelName, ModelParams};
use twoscale::regularity::{blowup_table, sample_pair_ratios};
use twoscale::rng::Stream;
use twoscale::skorokhod::{coupling_bound_report, simulate_frozen_coupled};

fn pass(number: u32, what: &str) {
    println!("ACCEPTANCE {number:02} PASS — {what}");
}

#[test]
fn criterion_01_invariant_measure_exactness() {
    let family = make_generator(FamilyName::BdExample21, &GeneratorParams::default()).unwrap();
    let m = 200;
    for x in [0.1, 0.3, 0.5, 0.7, 0.9] {
        let chain = truncate(&family, &[x], m).unwrap();
        let pi = invariant_measure(&chain, 1e-10).unwrap();
        let mut worst = 0.0f64;
        for i in 1..=m {
            let expect = (1.0 - x) * x.powi(i as i32 - 1);
            worst = worst.max((pi.weight(i) - expect).abs());
        }
        assert!(
            worst <= 1e-8,
            "x={x}: max deviation {worst:e} from the geometric law"
        );
    }
    pass(1, "stationary law matches (1-x)x^(i-1) to 1e-8 at M=200");
}

#[test]
fn criterion_02_ergodic_rate_recovery() {
    // Closed-form case: symmetric 2-state chain decays as e^{-2t} exactly.
    let two_state =
        make_generator(FamilyName::TwoStateSymmetric, &GeneratorParams::default()).unwrap();
    let times: Vec<f64> = (1..=10).map(|k| 0.5 + k as f64).collect();
    let fit = fit_ergodic_rate_probed(&two_state, &[0.0], 2, &times, &[1, 2]).unwrap();
    assert!(
        (fit.lambda - 2.0).abs() / 2.0 <= 0.01,
        "two-state rate {} not within 1% of 2",
        fit.lambda
    );

    // Birth-death family at x = 0.25: decay rate (1-sqrt(x))^2 = 0.25,
    // recovered within [0.20, 0.30] on the window [5, 40]. Few probe
    // states keep the window inside the exponential regime (a state-i
    // start needs ≈ i/(1−x) time to reach the bulk); 7 probes minimizes
    // the envelope-fit residual on this window.
    let family = make_generator(FamilyName::BdExample21, &GeneratorParams::default()).unwrap();
    let times: Vec<f64> = (0..11).map(|k| 5.0 + 3.5 * k as f64).collect();
    assert_eq!(*times.last().unwrap(), 40.0);
    let probes: Vec<usize> = (1..=7).collect();
    let fit = fit_ergodic_rate_probed(&family, &[0.25], 100, &times, &probes).unwrap();
    assert!(
        (0.20..=0.30).contains(&fit.lambda),
        "birth-death rate {} outside [0.20, 0.30]",
        fit.lambda
    );
    assert!(fit.residual < 0.1, "envelope fit residual {}", fit.residual);
    pass(2, "fitted decay rates: 2-state exact to 1%, birth-death in [0.20, 0.30]");
}

#[test]
fn criterion_03_non_hoelder_blowup() {
    for beta in [1.0, 0.5] {
        let table = blowup_table(50, beta, 3000).unwrap();
        assert_eq!(table.len(), 49);
        if beta == 1.0 {
            let l2 = table[0].lower_bound;
            assert!((l2 - 5.0 / 6.0).abs() <= 1e-12, "L_2 = {l2}, want 5/6");
            let l50 = table[48].lower_bound;
            assert!(l50 > 10.0, "L_50 = {l50}, want > 10");
        }
        for row in &table {
            assert!(
                row.ratio >= row.lower_bound - 1e-12,
                "beta={beta}, m={}: tv ratio {} below lower bound {}",
                row.m,
                row.ratio,
                row.lower_bound
            );
        }
        for w in table.windows(2) {
            assert!(
                w[1].ratio > w[0].ratio,
                "beta={beta}: ratio not strictly increasing at m={}",
                w[1].m
            );
        }
    }
    pass(3, "blow-up table: L_2 = 5/6, L_50 > 10, tv >= bound, ratios strictly increasing");
}

#[test]
fn criterion_04_lipschitz_regularity_under_strong_ergodicity() {
    let family = make_generator(FamilyName::ResetExample232, &GeneratorParams::default()).unwrap();
    let domain = (0.0, std::f64::consts::TAU);
    let max_ratio = |m: usize| -> f64 {
        sample_pair_ratios(&family, domain, 200, 1.0, m, 2024)
            .unwrap()
            .iter()
            .map(|row| row.ratio)
            .fold(0.0, f64::max)
    };
    let at_100 = max_ratio(100);
    let at_200 = max_ratio(200);
    assert!(at_100.is_finite() && at_100 > 0.0);
    let rel_change = (at_200 - at_100).abs() / at_100;
    assert!(
        rel_change < 0.01,
        "max ratio moved {rel_change:.4} (={at_100} -> {at_200}) when M doubled"
    );
    pass(4, "strongly ergodic TV ratios: finite max, < 1% drift from M=100 to M=200");
}

#[test]
fn criterion_05_coupling_marginal_correctness() {
    // Frozen 2-state chain with parameter-dependent rates; both marginals
    // of the shared-mark coupling must match their own exact kernels.
    let family =
        make_generator(FamilyName::TwoStateModulated, &GeneratorParams::default()).unwrap();
    let (x, y) = (0.3, 0.8);
    let replicates = 10_000u64;
    let mut ones = [0u64; 2];
    for r in 0..replicates {
        let paths = simulate_frozen_coupled(&family, &[x], &[y], 1, 1.0, 2, 77_000 + r).unwrap();
        if paths.first.final_state() == 1 {
            ones[0] += 1;
        }
        if paths.second.final_state() == 1 {
            ones[1] += 1;
        }
    }
    for (idx, param) in [x, y].into_iter().enumerate() {
        let chain = truncate(&family, &[param], 2).unwrap();
        let kernel = transition_kernel(&chain, 1.0, 1).unwrap();
        let p1 = kernel.weight(1);
        let se = (p1 * (1.0 - p1) / replicates as f64).sqrt();
        let got = ones[idx] as f64 / replicates as f64;
        assert!(
            (got - p1).abs() <= 3.0 * se,
            "chain {idx}: empirical {got} vs kernel {p1} (3se = {})",
            3.0 * se
        );
    }
    pass(5, "coupled marginals match matrix-exponential kernels within 3 binomial SE");
}

#[test]
fn criterion_06_frozen_coupling_bound() {
    let family = make_generator(FamilyName::BdExample233, &GeneratorParams::default()).unwrap();
    let t_end = 1.0;
    let rows = coupling_bound_report(
        &family,
        &[(vec![0.0], vec![0.1])],
        1,
        t_end,
        60,
        10_000,
        606,
    )
    .unwrap();
    let row = &rows[0];
    // The ℓ1 oracle: rows differ only in the death rate, by ½|sin x − sin y|.
    let ell1 = 0.5 * (0.0f64.sin() - 0.1f64.sin()).abs();
    assert!(
        (row.rhs_bound - t_end * ell1).abs() < 1e-12,
        "bound {} vs oracle {}",
        row.rhs_bound,
        t_end * ell1
    );
    let se = (row.lhs_ci_hi - row.lhs_mean) / 2.576;
    assert!(
        row.lhs_ci_hi <= row.rhs_bound + 3.0 * se,
        "99% CI upper {} exceeds bound {} + 3se {}",
        row.lhs_ci_hi,
        row.rhs_bound,
        3.0 * se
    );
    assert!(!row.flagged);
    pass(6, "disagreement time obeys T*l1(Q(x),Q(y)) within 3 SE over 1e4 replicates");
}

/// Linear interpolation between two fixed random conservative 3-state
/// generators: x = 0 and x = 1 are the endpoints.
fn random_three_state_pair(seed: u64) -> GeneratorFamily {
    let mut stream = Stream::new(seed);
    let mut draw = |scale: f64| -> Vec<f64> {
        let mut q = vec![0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    q[i * 3 + j] = scale * (0.2 + stream.next_f64());
                }
            }
        }
        q
    };
    let a = Arc::new(draw(1.0));
    let b = Arc::new(draw(1.5));
    let (a1, b1) = (Arc::clone(&a), Arc::clone(&b));
    let (a2, b2) = (Arc::clone(&a), Arc::clone(&b));
    let rate = move |i: usize, j: usize, x: &[f64]| -> f64 {
        let s = x[0].clamp(0.0, 1.0);
        let idx = (i - 1) * 3 + (j - 1);
        (1.0 - s) * a1[idx] + s * b1[idx]
    };
    let sup = move |i: usize, j: usize| -> f64 {
        let idx = (i - 1) * 3 + (j - 1);
        a2[idx].max(b2[idx])
    };
    let sup_for_gamma = sup.clone();
    GeneratorFamily::new(
        "interpolated3",
        StateSpace::Finite(3),
        Arc::new(rate),
        Arc::new(sup),
        Arc::new(move |n| {
            (1..=3)
                .filter(|&k| k != n)
                .map(|k| sup_for_gamma(n, k))
                .fold(0.0, f64::max)
        }),
        6.0,
        None,
        UpperTail::Bandwidth(3),
    )
}

#[test]
fn criterion_07_integration_by_parts_identity() {
    let h = vec![1.0, -0.5, 0.25];
    let t = 2.0;
    for seed in [1u64, 2, 3] {
        let family = random_three_state_pair(seed);
        let (x, y) = ([0.0], [1.0]);
        let fine = integration_by_parts_residual(&family, &x, &y, &h, t, 3, 400).unwrap();
        assert!(fine <= 1e-6, "seed {seed}: residual {fine:e} at 400 panels");
        // Quadrature-order check in the coarse regime.
        let coarse = integration_by_parts_residual(&family, &x, &y, &h, t, 3, 8).unwrap();
        let halved = integration_by_parts_residual(&family, &x, &y, &h, t, 3, 16).unwrap();
        assert!(
            halved <= coarse / 2.0,
            "seed {seed}: doubling panels went {coarse:e} -> {halved:e}"
        );
    }
    pass(7, "semigroup perturbation identity: residual <= 1e-6 at 400 panels, halves when panels double");
}

/// Nonincreasing within 95% CI overlap, comparing consecutive cells.
fn assert_trend(report: &ConvergenceReport, label: &str) {
    for w in report.cells.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let overlap =
            b.mean_error - 1.96 * b.std_error <= a.mean_error + 1.96 * a.std_error;
        assert!(
            b.mean_error <= a.mean_error || overlap,
            "{label}: error rose {} -> {} without CI overlap",
            a.mean_error,
            b.mean_error
        );
    }
}

#[test]
fn criterion_08_l1_averaging_trend() {
    let model = make_model(ModelName::SinCoupled, &ModelParams::default()).unwrap();
    let diagonal = vec![(0.2, 0.2), (0.1, 0.1), (0.05, 0.05), (0.02, 0.02)];
    let cfg = ExperimentConfig::new(diagonal, 1.0, 400, 60, 808);
    let report = l1_error_experiment(&model, &cfg).unwrap();
    assert_trend(&report, "diagonal");
    let first = report.cells.first().unwrap().mean_error;
    let last = report.cells.last().unwrap().mean_error;
    assert!(
        last <= 0.5 * first,
        "final error {last} not half of initial {first}"
    );

    // Fixed small ε, shrinking α: same trend, ratio ε/α immaterial.
    let alpha_only = vec![(1e-3, 0.2), (1e-3, 0.05), (1e-3, 0.0125)];
    let cfg = ExperimentConfig::new(alpha_only, 1.0, 400, 60, 809);
    let report = l1_error_experiment(&model, &cfg).unwrap();
    assert_trend(&report, "alpha-only");
    pass(8, "L1 errors shrink along the (eps, alpha) diagonal and for alpha alone");
}

#[test]
fn criterion_09_weak_convergence_surrogate() {
    let x0 = 0.1;
    let model = make_model(
        ModelName::IndicatorDrift,
        &ModelParams {
            x0: Some(vec![x0]),
            ..Default::default()
        },
    )
    .unwrap();

    // The averaged reference is the closed form 1 − e^{−t}(1 − x0).
    let system = AveragedSystem::new(model.clone(), 60);
    let reference = solve_averaged_ode(&system, &[x0], 1.0, 1e-4).unwrap();
    let closed = 1.0 - (-1.0f64).exp() * (1.0 - x0);
    assert!(
        (reference.final_position()[0] - closed).abs() <= 1e-6,
        "averaged reference {} vs closed form {closed}",
        reference.final_position()[0]
    );

    let diagonal = vec![(0.2, 0.2), (0.1, 0.1), (0.05, 0.05), (0.02, 0.02)];
    let cfg = ExperimentConfig::new(diagonal, 1.0, 400, 60, 909);
    let report = weak_error_experiment(&model, &[TestFunction::tanh()], &cfg).unwrap();
    assert_trend(&report, "weak tanh");
    pass(9, "weak errors shrink along the diagonal; averaged reference exact to 1e-6");
}

#[test]
fn criterion_10_byte_identical_outputs() {
    let base = std::env::temp_dir().join(format!("twoscale_acceptance_{}", std::process::id()));
    let _ = fs::remove_dir_all(&base);

    let run_coupling = |out: PathBuf, threads: &str| -> BTreeMap<String, Vec<u8>> {
        let args: Vec<String> = [
            "coupling",
            "--model",
            "bd_example233",
            "--x",
            "0",
            "--y",
            "0.1",
            "--t",
            "1",
            "--trunc",
            "40",
            "--replicates",
            "500",
            "--jumplog",
            "true",
            "--threads",
            threads,
            "--out",
            out.to_str().unwrap(),
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        let cfg = twoscale::cli::parse_config(&args).unwrap();
        let files = twoscale::cli::run(&cfg).unwrap();
        files
            .into_iter()
            .map(|p| {
                let name = p.file_name().unwrap().to_string_lossy().into_owned();
                (name, fs::read(&p).unwrap())
            })
            .collect()
    };
    let first = run_coupling(base.join("a"), "1");
    let rerun = run_coupling(base.join("b"), "1");
    let threaded = run_coupling(base.join("c"), "4");
    assert_eq!(first.len(), 3, "coupling.csv, coupling_jumps.csv, manifest.txt");
    for (name, bytes) in &first {
        if name == "manifest.txt" {
            // The manifest records the resolved config, so the output
            // directory and thread count legitimately differ between the
            // runs; everything else must match.
            let strip = |raw: &[u8]| -> Vec<String> {
                String::from_utf8(raw.to_vec())
                    .unwrap()
                    .lines()
                    .filter(|l| !l.starts_with("out=") && !l.starts_with("threads="))
                    .map(str::to_owned)
                    .collect()
            };
            assert_eq!(strip(bytes), strip(&rerun[name]));
            assert_eq!(strip(bytes), strip(&threaded[name]));
            continue;
        }
        assert_eq!(bytes, &rerun[name], "{name}: rerun differs");
        assert_eq!(bytes, &threaded[name], "{name}: thread count leaked into bytes");
    }

    // A second subcommand exercising the experiment machinery.
    let run_average = |out: PathBuf, threads: &str| -> Vec<u8> {
        let args: Vec<String> = [
            "average",
            "--model",
            "sin-coupled",
            "--kind",
            "l1",
            "--grid",
            "0.2:0.2,0.1:0.1",
            "--replicates",
            "100",
            "--trunc",
            "30",
            "--t",
            "0.5",
            "--threads",
            threads,
            "--out",
            out.to_str().unwrap(),
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        let cfg = twoscale::cli::parse_config(&args).unwrap();
        let files = twoscale::cli::run(&cfg).unwrap();
        fs::read(&files[0]).unwrap()
    };
    let avg_single = run_average(base.join("d"), "1");
    let avg_again = run_average(base.join("e"), "1");
    let avg_threaded = run_average(base.join("f"), "3");
    assert_eq!(avg_single, avg_again);
    assert_eq!(avg_single, avg_threaded);
    pass(10, "identical seeds give byte-identical CSVs across reruns and thread counts");
}
