//! The averaged system: drift `b̄(x) = Σ_i b(x,i)·π_i^x` over the invariant
//! measure of the fast chain frozen at `x`, its limit ODE
//! `dX̄ = b̄(X̄)dt`, and the Monte Carlo experiments that quantify how the
//! slow process approaches that limit as `(ε, α) → 0`.
//!
//! The L¹ experiment reports `E|X_T^{ε,α} − X̄_T|` per grid cell against an
//! RK4 reference treated as exact; the weak experiment reports
//! `|E f(X_T^{ε,α}) − f(X̄_T)|` for bounded Lipschitz test functions. Both
//! limits are qualitative in the underlying theory, so the reported
//! quantities are trend data: means with standard errors per `(ε, α)`.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use rayon::prelude::*;

use crate::chain::{invariant_measure, truncate, ProbabilityVector};
use crate::error::{Error, Result};
use crate::models::TwoScaleModel;
use crate::rng::{tags, Stream};
use crate::sim::{simulate_two_scale, SimConfig};

/// Quantization step of the π cache: positions closer than this share an
/// invariant measure.
const CACHE_RESOLUTION: f64 = 1e-6;

/// Stationarity tolerance used for every π solve behind the averaged drift.
const PI_TOL: f64 = 1e-10;

/// Averaged drift evaluator with a quantized π cache.
pub struct AveragedSystem {
    model: TwoScaleModel,
    trunc: usize,
    cache: RwLock<HashMap<Vec<i64>, Arc<ProbabilityVector>>>,
}

impl AveragedSystem {
    pub fn new(model: TwoScaleModel, trunc: usize) -> Self {
        AveragedSystem {
            model,
            trunc,
            cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn trunc(&self) -> usize {
        self.trunc
    }

    pub fn model(&self) -> &TwoScaleModel {
        &self.model
    }

    fn quantize(x: &[f64]) -> Vec<i64> {
        x.iter().map(|v| (v / CACHE_RESOLUTION).round() as i64).collect()
    }

    /// Invariant measure of the fast chain frozen at `x` (cached).
    pub fn invariant_at(&self, x: &[f64]) -> Result<Arc<ProbabilityVector>> {
        let key = Self::quantize(x);
        if let Some(pi) = self.cache.read().unwrap().get(&key) {
            return Ok(Arc::clone(pi));
        }
        let chain = truncate(&self.model.generator, x, self.trunc)?;
        let pi = Arc::new(invariant_measure(&chain, PI_TOL)?);
        self.cache
            .write()
            .unwrap()
            .entry(key)
            .or_insert_with(|| Arc::clone(&pi));
        Ok(pi)
    }

    /// `b̄(x) = Σ_{i≤M} b(x,i)·π_i^x`.
    pub fn drift(&self, x: &[f64]) -> Result<Vec<f64>> {
        let pi = self.invariant_at(x)?;
        let dim = self.model.coefficients.dim_x;
        let mut out = vec![0.0; dim];
        let mut b = vec![0.0; dim];
        for (idx, &w) in pi.weights().iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            self.model.coefficients.drift_into(x, idx + 1, &mut b);
            for (o, bi) in out.iter_mut().zip(&b) {
                *o += w * bi;
            }
        }
        Ok(out)
    }
}

/// One-shot averaged drift without a cache.
pub fn averaged_drift(model: &TwoScaleModel, x: &[f64], m: usize) -> Result<Vec<f64>> {
    AveragedSystem::new(model.clone(), m).drift(x)
}

/// Deterministic grid path of the averaged ODE.
#[derive(Debug, Clone, PartialEq)]
pub struct OdePath {
    pub times: Vec<f64>,
    /// Row-major `(K+1) × dim` positions.
    pub positions: Vec<f64>,
    pub dim: usize,
}

impl OdePath {
    pub fn position(&self, k: usize) -> &[f64] {
        &self.positions[k * self.dim..(k + 1) * self.dim]
    }

    pub fn final_position(&self) -> &[f64] {
        self.position(self.times.len() - 1)
    }
}

/// Classical fixed-step RK4 on `dX̄ = b̄(X̄)dt`.
pub fn solve_averaged_ode(
    system: &AveragedSystem,
    x0: &[f64],
    t_end: f64,
    dt: f64,
) -> Result<OdePath> {
    if !(dt > 0.0) {
        return Err(Error::invalid("dt", "step must be positive"));
    }
    if !(t_end > 0.0) {
        return Err(Error::invalid("t", "horizon must be positive"));
    }
    let dim = x0.len();
    let steps = (t_end / dt).ceil().max(1.0) as usize;
    let mut times = Vec::with_capacity(steps + 1);
    let mut positions = Vec::with_capacity((steps + 1) * dim);
    let mut x = x0.to_vec();
    times.push(0.0);
    positions.extend_from_slice(&x);
    let mut t = 0.0;
    for _ in 0..steps {
        let h = dt.min(t_end - t);
        let k1 = system.drift(&x)?;
        let k2 = system.drift(&stage(&x, &k1, h / 2.0))?;
        let k3 = system.drift(&stage(&x, &k2, h / 2.0))?;
        let k4 = system.drift(&stage(&x, &k3, h))?;
        for i in 0..dim {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            if !x[i].is_finite() {
                return Err(Error::NumericalFailure(format!(
                    "averaged ODE diverged at t = {t}"
                )));
            }
        }
        t += h;
        times.push(t);
        positions.extend_from_slice(&x);
    }
    if let Some(last) = times.last_mut() {
        *last = t_end;
    }
    Ok(OdePath {
        times,
        positions,
        dim,
    })
}

fn stage(x: &[f64], k: &[f64], h: f64) -> Vec<f64> {
    x.iter().zip(k).map(|(xi, ki)| xi + h * ki).collect()
}

/// Scalar observable of the slow state.
pub type ObservableFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Bounded test function for weak-error experiments.
#[derive(Clone)]
pub struct TestFunction {
    pub name: String,
    pub f: ObservableFn,
}

impl TestFunction {
    pub fn tanh() -> Self {
        TestFunction {
            name: "tanh".into(),
            f: Arc::new(|x| x[0].tanh()),
        }
    }

    /// Identity clipped to [−10, 10].
    pub fn clipped_identity() -> Self {
        TestFunction {
            name: "clip10".into(),
            f: Arc::new(|x| x[0].clamp(-10.0, 10.0)),
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "tanh" => Ok(Self::tanh()),
            "clip10" => Ok(Self::clipped_identity()),
            other => Err(Error::invalid(
                "testfn",
                format!("unknown test function `{other}`; known: tanh, clip10"),
            )),
        }
    }
}

/// One `(ε, α)` cell of a convergence report.
#[derive(Debug, Clone)]
pub struct ConvergenceCell {
    pub eps: f64,
    pub alpha: f64,
    /// "l1" or "weak".
    pub kind: &'static str,
    /// Test function name; empty for L¹ cells.
    pub test_fn: String,
    pub mean_error: f64,
    pub std_error: f64,
    pub replicates: usize,
}

/// Grid of convergence measurements.
#[derive(Debug, Clone, Default)]
pub struct ConvergenceReport {
    pub cells: Vec<ConvergenceCell>,
}

/// Shared settings of the convergence experiments.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    /// `(ε, α)` cells, run in order.
    pub grid: Vec<(f64, f64)>,
    pub t_end: f64,
    pub replicates: usize,
    pub trunc: usize,
    pub seed: u64,
    /// Step of the RK4 reference solution (treated as exact).
    pub reference_dt: f64,
}

impl ExperimentConfig {
    pub fn new(grid: Vec<(f64, f64)>, t_end: f64, replicates: usize, trunc: usize, seed: u64) -> Self {
        ExperimentConfig {
            grid,
            t_end,
            replicates,
            trunc,
            seed,
            reference_dt: 1e-4,
        }
    }

    fn validate(&self, min_replicates: usize) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::invalid("grid", "need at least one (eps, alpha) cell"));
        }
        if self
            .grid
            .iter()
            .any(|(eps, alpha)| !(*eps >= 0.0) || !(*alpha > 0.0))
        {
            return Err(Error::invalid("grid", "cells need eps >= 0 and alpha > 0"));
        }
        if self.replicates < min_replicates {
            return Err(Error::invalid(
                "replicates",
                format!("need at least {min_replicates}"),
            ));
        }
        Ok(())
    }
}

/// EM step for a cell: one order below the enforced ceiling, and never
/// coarser than a tenth of the α^{3/4} discretization block.
pub fn cell_dt(alpha: f64) -> f64 {
    (alpha / 20.0).min(alpha.powf(0.75) / 10.0)
}

/// `E|X_T^{ε,α} − X̄_T|` per grid cell, against the RK4 reference.
pub fn l1_error_experiment(
    model: &TwoScaleModel,
    cfg: &ExperimentConfig,
) -> Result<ConvergenceReport> {
    cfg.validate(100)?;
    let reference = reference_solution(model, cfg)?;
    let x_bar = reference.final_position().to_vec();
    let root = Stream::new(cfg.seed);
    let mut cells = Vec::with_capacity(cfg.grid.len());
    for (cell_idx, &(eps, alpha)) in cfg.grid.iter().enumerate() {
        let cell_root = root.child(tags::CELL_BASE + cell_idx as u64);
        let errors: Vec<f64> = (0..cfg.replicates)
            .into_par_iter()
            .map(|r| {
                let seed = cell_root.child(tags::REPLICATE_BASE + r as u64).key();
                let sim = SimConfig::new(eps, alpha, cfg.t_end, cell_dt(alpha), cfg.trunc, seed);
                let path = simulate_two_scale(model, &sim)?;
                Ok(euclid_dist(path.final_position(), &x_bar))
            })
            .collect::<Result<Vec<f64>>>()?;
        let (mean, se) = mean_and_se(&errors);
        cells.push(ConvergenceCell {
            eps,
            alpha,
            kind: "l1",
            test_fn: String::new(),
            mean_error: mean,
            std_error: se,
            replicates: cfg.replicates,
        });
    }
    Ok(ConvergenceReport { cells })
}

/// `|E f(X_T^{ε,α}) − f(X̄_T)|` per grid cell and test function.
pub fn weak_error_experiment(
    model: &TwoScaleModel,
    test_functions: &[TestFunction],
    cfg: &ExperimentConfig,
) -> Result<ConvergenceReport> {
    cfg.validate(2)?;
    if test_functions.is_empty() {
        return Err(Error::invalid("testfn", "need at least one test function"));
    }
    let reference = reference_solution(model, cfg)?;
    let x_bar = reference.final_position().to_vec();
    let root = Stream::new(cfg.seed);
    let mut cells = Vec::new();
    for (cell_idx, &(eps, alpha)) in cfg.grid.iter().enumerate() {
        let cell_root = root.child(tags::CELL_BASE + cell_idx as u64);
        let finals: Vec<Vec<f64>> = (0..cfg.replicates)
            .into_par_iter()
            .map(|r| {
                let seed = cell_root.child(tags::REPLICATE_BASE + r as u64).key();
                let sim = SimConfig::new(eps, alpha, cfg.t_end, cell_dt(alpha), cfg.trunc, seed);
                let path = simulate_two_scale(model, &sim)?;
                Ok(path.final_position().to_vec())
            })
            .collect::<Result<Vec<Vec<f64>>>>()?;
        for tf in test_functions {
            let values: Vec<f64> = finals.iter().map(|x| (tf.f)(x)).collect();
            let (mean, se) = mean_and_se(&values);
            cells.push(ConvergenceCell {
                eps,
                alpha,
                kind: "weak",
                test_fn: tf.name.clone(),
                mean_error: (mean - (tf.f)(&x_bar)).abs(),
                std_error: se,
                replicates: cfg.replicates,
            });
        }
    }
    Ok(ConvergenceReport { cells })
}

fn reference_solution(model: &TwoScaleModel, cfg: &ExperimentConfig) -> Result<OdePath> {
    let system = AveragedSystem::new(model.clone(), cfg.trunc);
    solve_averaged_ode(&system, &model.x0, cfg.t_end, cfg.reference_dt)
}

fn euclid_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
