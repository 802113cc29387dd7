//! Simulation of the fully coupled system: the slow process advances by
//! Euler-Maruyama with √ε noise while the fast chain evolves event-driven
//! with rates `Q(X)/α`, thinned against the dominating window of its
//! current state.
//!
//! Within each EM step the slow state is frozen: layout membership for the
//! fast chain is evaluated at the step-start position, jumps are applied
//! at their exact event times, and drift/diffusion are refreshed at the
//! next grid point. The bias is O(dt) and controlled by the enforced
//! ceiling `dt ≤ α/10`.
//!
//! Coupled pair runs share the same Brownian increments and the same
//! per-source-state marked streams, which is exactly the construction that
//! bounds the disagreement time of the two fast chains by the ℓ1 drift of
//! their generators along the slow paths.

use crate::chain::{State, StateSpace};
use crate::error::{Error, Result};
use crate::models::TwoScaleModel;
use crate::rng::{tags, Stream};
use crate::skorokhod::{CoupledRun, JumpPath, MarkedPointDriver};

/// Numeric settings of a single path simulation.
#[derive(Debug, Clone)]
pub struct SimConfig {
    /// Noise scale of the slow process (may be zero for control runs).
    pub eps: f64,
    /// Time-scale separation of the fast chain.
    pub alpha: f64,
    pub t_end: f64,
    /// EM step; must satisfy `dt ≤ alpha/10` unless `allow_coarse_dt`.
    pub dt: f64,
    /// Fast-chain truncation window.
    pub trunc: usize,
    pub seed: u64,
    pub allow_coarse_dt: bool,
}

impl SimConfig {
    pub fn new(eps: f64, alpha: f64, t_end: f64, dt: f64, trunc: usize, seed: u64) -> Self {
        SimConfig {
            eps,
            alpha,
            t_end,
            dt,
            trunc,
            seed,
            allow_coarse_dt: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.eps >= 0.0) {
            return Err(Error::invalid("eps", "must be >= 0"));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::invalid("alpha", "must be positive"));
        }
        if !(self.t_end > 0.0) {
            return Err(Error::invalid("t", "horizon must be positive"));
        }
        if !(self.dt > 0.0) {
            return Err(Error::invalid("dt", "step must be positive"));
        }
        if self.trunc < 2 {
            return Err(Error::invalid("trunc", "truncation must be >= 2"));
        }
        let limit = self.alpha / 10.0;
        if self.dt > limit * (1.0 + 1e-12) && !self.allow_coarse_dt {
            return Err(Error::StepSizeRejected { dt: self.dt, limit });
        }
        Ok(())
    }
}

/// One simulated path of the coupled pair `(X, Y)`: slow positions on the
/// EM grid plus the fast chain's exact jump log.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    /// Grid times `0 = t_0 < … < t_K = T`.
    pub times: Vec<f64>,
    /// Row-major `(K+1) × dim_x` slow positions.
    pub positions: Vec<f64>,
    pub dim_x: usize,
    /// The fast chain's jump log (exact event times).
    pub jumps: JumpPath,
    pub eps: f64,
    pub alpha: f64,
    pub dt: f64,
    pub seed: u64,
}

impl PathSample {
    pub fn grid_len(&self) -> usize {
        self.times.len()
    }

    pub fn position(&self, k: usize) -> &[f64] {
        &self.positions[k * self.dim_x..(k + 1) * self.dim_x]
    }

    pub fn final_position(&self) -> &[f64] {
        self.position(self.times.len() - 1)
    }

    /// Fast-chain state at grid point `k` (right-continuous).
    pub fn state_at_grid(&self, k: usize) -> State {
        self.jumps.state_at(self.times[k])
    }
}

/// A coupled pair of path samples sharing noise, with the exact
/// disagreement statistic `(1/T)∫_0^T 1{Y_s ≠ Ỹ_s} ds` of the fast chains.
#[derive(Debug, Clone)]
pub struct CoupledPathSamples {
    pub first: PathSample,
    pub second: PathSample,
    pub occupation_mismatch: f64,
}

fn effective_trunc(model: &TwoScaleModel, m: usize) -> usize {
    match model.generator.state_space() {
        StateSpace::Finite(n) => m.min(n),
        StateSpace::Countable => m,
    }
}

fn grid_times(t_end: f64, dt: f64) -> Vec<f64> {
    let steps = (t_end / dt).ceil().max(1.0) as usize;
    let mut times: Vec<f64> = (0..=steps).map(|k| (k as f64 * dt).min(t_end)).collect();
    if let Some(last) = times.last_mut() {
        *last = t_end;
    }
    times
}

/// Simulate one path of the two-time-scale system.
pub fn simulate_two_scale(model: &TwoScaleModel, cfg: &SimConfig) -> Result<PathSample> {
    cfg.validate()?;
    let m = effective_trunc(model, cfg.trunc);
    if model.i0 > m {
        return Err(Error::invalid("i0", "initial state outside the truncation"));
    }
    let dim_x = model.coefficients.dim_x;
    let dim_w = model.coefficients.dim_w;
    let family = &model.generator;

    let mut driver = MarkedPointDriver::new(family, m, cfg.seed, cfg.alpha);
    let mut brownian = Stream::new(cfg.seed).child(tags::BROWNIAN);

    let times = grid_times(cfg.t_end, cfg.dt);
    let mut positions = Vec::with_capacity(times.len() * dim_x);
    positions.extend_from_slice(&model.x0);

    let mut x = model.x0.clone();
    let mut y = model.i0;
    let mut jumps = JumpPath {
        initial: model.i0,
        times: Vec::new(),
        states: Vec::new(),
        t_end: cfg.t_end,
    };
    let mut now = 0.0;
    let mut drift = vec![0.0; dim_x];
    let mut diffusion = vec![0.0; dim_x * dim_w];
    let mut dw = vec![0.0; dim_w];

    for step in 1..times.len() {
        let t_next = times[step];
        let y_start = y;
        // Fast-chain events inside the step, layouts frozen at x.
        loop {
            let (te, mark) = driver.peek_after(y, now);
            if te > t_next {
                break;
            }
            now = te;
            let src = y;
            if let Some(k) = crate::skorokhod::mark_destination(family, &x, src, m, mark) {
                y = k;
                jumps.times.push(te);
                jumps.states.push(k);
            }
            driver.consume(src);
        }
        now = t_next;

        let h = times[step] - times[step - 1];
        model.coefficients.drift_into(&x, y_start, &mut drift);
        model.coefficients.diffusion_into(&x, y_start, &mut diffusion);
        let sqrt_h = h.sqrt();
        for w in dw.iter_mut() {
            *w = sqrt_h * brownian.next_gaussian();
        }
        let noise_scale = cfg.eps.sqrt();
        for i in 0..dim_x {
            let mut dx = drift[i] * h;
            for j in 0..dim_w {
                dx += noise_scale * diffusion[i * dim_w + j] * dw[j];
            }
            x[i] += dx;
            if !x[i].is_finite() {
                return Err(Error::NumericalFailure(format!(
                    "slow state diverged at t = {t_next}"
                )));
            }
        }
        positions.extend_from_slice(&x);
    }

    Ok(PathSample {
        times,
        positions,
        dim_x,
        jumps,
        eps: cfg.eps,
        alpha: cfg.alpha,
        dt: cfg.dt,
        seed: cfg.seed,
    })
}

/// Simulate two systems driven by the same Brownian increments and the
/// same marked point streams. The models must share a generator family
/// (they may differ in coefficients and initial data).
pub fn simulate_full_coupled(
    model_a: &TwoScaleModel,
    model_b: &TwoScaleModel,
    i0: State,
    cfg: &SimConfig,
) -> Result<CoupledPathSamples> {
    cfg.validate()?;
    if model_a.generator.name() != model_b.generator.name() {
        return Err(Error::Precondition(
            "coupled models must share a generator family".into(),
        ));
    }
    if model_a.coefficients.dim_x != model_b.coefficients.dim_x
        || model_a.coefficients.dim_w != model_b.coefficients.dim_w
    {
        return Err(Error::Precondition(
            "coupled models must share state and noise dimensions".into(),
        ));
    }
    let m = effective_trunc(model_a, cfg.trunc);
    if i0 == 0 || i0 > m {
        return Err(Error::invalid("i0", format!("must be in 1..={m}")));
    }
    let dim_x = model_a.coefficients.dim_x;
    let dim_w = model_a.coefficients.dim_w;
    let family = &model_a.generator;

    let mut driver = MarkedPointDriver::new(family, m, cfg.seed, cfg.alpha);
    let mut brownian = Stream::new(cfg.seed).child(tags::BROWNIAN);

    let times = grid_times(cfg.t_end, cfg.dt);
    let mut pos_a = Vec::with_capacity(times.len() * dim_x);
    let mut pos_b = Vec::with_capacity(times.len() * dim_x);
    pos_a.extend_from_slice(&model_a.x0);
    pos_b.extend_from_slice(&model_b.x0);

    let mut xa = model_a.x0.clone();
    let mut xb = model_b.x0.clone();
    let mut run = CoupledRun::new(i0, i0, cfg.t_end);
    let mut drift = vec![0.0; dim_x];
    let mut diffusion = vec![0.0; dim_x * dim_w];
    let mut dw = vec![0.0; dim_w];

    for step in 1..times.len() {
        let t_next = times[step];
        let ya_start = run.state_a;
        let yb_start = run.state_b;
        // Shared-stream fast events inside the step; each chain tests the
        // shared mark against its own layout at its own frozen position.
        while let Some((t, src, mark, which)) = run.next_event_until(&mut driver, t_next) {
            run.apply(family, &xa, &xb, m, t, src, mark, which);
            driver.consume(src);
        }

        let h = times[step] - times[step - 1];
        let sqrt_h = h.sqrt();
        for w in dw.iter_mut() {
            *w = sqrt_h * brownian.next_gaussian();
        }
        let noise_scale = cfg.eps.sqrt();
        for (x, model, y_start, pos) in [
            (&mut xa, model_a, ya_start, &mut pos_a),
            (&mut xb, model_b, yb_start, &mut pos_b),
        ] {
            model.coefficients.drift_into(x, y_start, &mut drift);
            model.coefficients.diffusion_into(x, y_start, &mut diffusion);
            for i in 0..dim_x {
                let mut dx = drift[i] * h;
                for j in 0..dim_w {
                    dx += noise_scale * diffusion[i * dim_w + j] * dw[j];
                }
                x[i] += dx;
                if !x[i].is_finite() {
                    return Err(Error::NumericalFailure(format!(
                        "slow state diverged at t = {t_next}"
                    )));
                }
            }
            pos.extend_from_slice(x);
        }
    }

    let occupation_mismatch = run.mismatch / cfg.t_end;
    let make_sample = |positions: Vec<f64>, jumps: JumpPath| PathSample {
        times: times.clone(),
        positions,
        dim_x,
        jumps,
        eps: cfg.eps,
        alpha: cfg.alpha,
        dt: cfg.dt,
        seed: cfg.seed,
    };
    Ok(CoupledPathSamples {
        first: make_sample(pos_a, run.path_a),
        second: make_sample(pos_b, run.path_b),
        occupation_mismatch,
    })
}
