//! Built-in generator families and slow-process coefficient sets.
//!
//! Four fast-chain families are registered, all with explicit dominating
//! metadata (per-entry sups, γ_n, κ) so they can drive the interval-layout
//! coupling:
//!
//! * `bd_example21` — birth-death chain on {1,2,…} with birth rate `x`
//!   (parameter clamped to `[1e-4, 1−1e-4]`) and unit death rate. Its
//!   invariant measure is the geometric `(1−x)x^{i−1}`; it is exponentially
//!   but not strongly ergodic, and `x ↦ π^x` is not Hölder of any exponent.
//! * `geom_example231` — all-to-all jumps with geometrically decaying rates
//!   `(1−e^{−|x|−a})e^{−(j−1)(|x|+a)}`, strongly ergodic uniformly in `x`.
//! * `reset_example232` — climb `i → i+1` at rate `2+sin x`, reset `i → 1`
//!   at rate `2−sin x`. The reset from state 1 is a self-loop and is
//!   dropped, so row 1 carries only the climb rate.
//! * `bd_example233` — birth-death with unit birth rate and death rate
//!   `2 − ½ sin x`.
//!
//! Two 2-state helper chains round out the registry for kernel-level
//! verification runs.

use std::str::FromStr;
use std::sync::Arc;

use crate::chain::{GeneratorFamily, State, StateSpace, UpperTail};
use crate::error::{Error, Result};

/// Clamp window for the birth-death family's parameter: the open domain
/// (0,1) breaks positivity/ergodicity at its endpoints.
pub const BD_PARAM_MIN: f64 = 1e-4;
pub const BD_PARAM_MAX: f64 = 1.0 - 1e-4;

#[inline]
fn x1(x: &[f64]) -> f64 {
    x.first().copied().unwrap_or(0.0)
}

#[inline]
fn euclid_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[inline]
fn clamp_bd(x: &[f64]) -> f64 {
    x1(x).clamp(BD_PARAM_MIN, BD_PARAM_MAX)
}

/// Registered generator families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyName {
    BdExample21,
    GeomExample231,
    ResetExample232,
    BdExample233,
    TwoStateSymmetric,
    TwoStateModulated,
}

impl FamilyName {
    pub const ALL: [FamilyName; 6] = [
        FamilyName::BdExample21,
        FamilyName::GeomExample231,
        FamilyName::ResetExample232,
        FamilyName::BdExample233,
        FamilyName::TwoStateSymmetric,
        FamilyName::TwoStateModulated,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            FamilyName::BdExample21 => "bd_example21",
            FamilyName::GeomExample231 => "geom_example231",
            FamilyName::ResetExample232 => "reset_example232",
            FamilyName::BdExample233 => "bd_example233",
            FamilyName::TwoStateSymmetric => "two_state_symmetric",
            FamilyName::TwoStateModulated => "two_state_modulated",
        }
    }
}

impl FromStr for FamilyName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        FamilyName::ALL
            .iter()
            .find(|n| n.as_str() == s)
            .copied()
            .ok_or_else(|| {
                Error::invalid(
                    "model",
                    format!(
                        "unknown generator `{s}`; known: {}",
                        FamilyName::ALL.map(|n| n.as_str()).join(", ")
                    ),
                )
            })
    }
}

/// Parameters for [`make_generator`]. Only the geometric family uses
/// `decay` (its per-state rate decay exponent; must be positive).
#[derive(Debug, Clone)]
pub struct GeneratorParams {
    pub decay: f64,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        GeneratorParams { decay: 1.0 }
    }
}

/// Instantiate a registered family with correct dominating metadata.
pub fn make_generator(name: FamilyName, params: &GeneratorParams) -> Result<GeneratorFamily> {
    match name {
        FamilyName::BdExample21 => Ok(birth_death_linear_birth()),
        FamilyName::GeomExample231 => geometric_jump_family(params.decay),
        FamilyName::ResetExample232 => Ok(climb_and_reset_family()),
        FamilyName::BdExample233 => Ok(birth_death_modulated_death()),
        FamilyName::TwoStateSymmetric => Ok(GeneratorFamily::from_matrix(
            name.as_str(),
            2,
            vec![0.0, 1.0, 1.0, 0.0],
        )),
        FamilyName::TwoStateModulated => Ok(two_state_modulated()),
    }
}

/// Birth rate `x`, death rate 1. κ = 2, γ_n = 1, K3 = 1.
fn birth_death_linear_birth() -> GeneratorFamily {
    GeneratorFamily::new(
        FamilyName::BdExample21.as_str(),
        StateSpace::Countable,
        Arc::new(|i, j, x| {
            if j == i + 1 {
                clamp_bd(x)
            } else if i >= 2 && j + 1 == i {
                1.0
            } else {
                0.0
            }
        }),
        Arc::new(|i, j| {
            if j == i + 1 || (i >= 2 && j + 1 == i) {
                1.0
            } else {
                0.0
            }
        }),
        Arc::new(|_n| 1.0),
        2.0,
        Some(1.0),
        UpperTail::Bandwidth(1),
    )
}

/// Climb at `2+sin x`, reset to 1 at `2−sin x` (self-loop at state 1
/// dropped). κ = 6 by the sup-inside-the-sum convention, γ_n = 3, K3 = 2.
fn climb_and_reset_family() -> GeneratorFamily {
    GeneratorFamily::new(
        FamilyName::ResetExample232.as_str(),
        StateSpace::Countable,
        Arc::new(|i, j, x| {
            if j == i + 1 {
                2.0 + x1(x).sin()
            } else if j == 1 && i >= 2 {
                2.0 - x1(x).sin()
            } else {
                0.0
            }
        }),
        Arc::new(|i, j| {
            if j == i + 1 || (j == 1 && i >= 2) {
                3.0
            } else {
                0.0
            }
        }),
        Arc::new(|_n| 3.0),
        6.0,
        Some(2.0),
        UpperTail::Bandwidth(1),
    )
}

/// Unit birth rate, death rate `2 − ½ sin x`. κ = 3.5, K3 = ½.
fn birth_death_modulated_death() -> GeneratorFamily {
    GeneratorFamily::new(
        FamilyName::BdExample233.as_str(),
        StateSpace::Countable,
        Arc::new(|i, j, x| {
            if j == i + 1 {
                1.0
            } else if i >= 2 && j + 1 == i {
                2.0 - 0.5 * x1(x).sin()
            } else {
                0.0
            }
        }),
        Arc::new(|i, j| {
            if j == i + 1 {
                1.0
            } else if i >= 2 && j + 1 == i {
                2.5
            } else {
                0.0
            }
        }),
        Arc::new(|n| if n == 1 { 1.0 } else { 2.5 }),
        3.5,
        Some(0.5),
        UpperTail::Bandwidth(1),
    )
}

/// `sup_{s ≥ a} (1−e^{−s}) e^{−(j−1)s}` for the geometric family: the
/// interior optimum sits at `s* = ln(j/(j−1))`, clipped to the domain.
fn geom_sup_rate(j: usize, a: f64) -> f64 {
    if j == 1 {
        return 1.0;
    }
    let jm = (j - 1) as f64;
    let s_star = ((j as f64) / jm).ln();
    let s = s_star.max(a);
    (1.0 - (-s).exp()) * (-jm * s).exp()
}

/// All-to-all jumps with rate `(1−e^{−|x|−a}) e^{−(j−1)(|x|+a)}` to state
/// `j ≠ i`. The upward tail past a window `m` sums to `e^{−m(|x|+a)}`
/// exactly, so truncation redirect is closed-form.
fn geometric_jump_family(decay: f64) -> Result<GeneratorFamily> {
    if !(decay > 0.0) {
        return Err(Error::invalid("decay", "must be positive"));
    }
    let a = decay;
    // κ = Σ_j sup_x q_·j (the per-row infimum of excluded terms is 0).
    let kappa = {
        let mut total = 0.0;
        let mut j = 1usize;
        loop {
            let s = geom_sup_rate(j, a);
            total += s;
            if (s < 1e-16 && j > 2) || j > 2_000_000 {
                break;
            }
            j += 1;
        }
        total
    };
    let e = (-a).exp();
    let k3 = 2.0 * e / ((1.0 - e) * (1.0 - e));
    Ok(GeneratorFamily::new(
        FamilyName::GeomExample231.as_str(),
        StateSpace::Countable,
        Arc::new(move |i, j, x| {
            if i == j {
                0.0
            } else {
                let s = euclid_norm(x) + a;
                (1.0 - (-s).exp()) * (-((j - 1) as f64) * s).exp()
            }
        }),
        Arc::new(move |i, j| if i == j { 0.0 } else { geom_sup_rate(j, a) }),
        Arc::new(move |n| {
            if n == 1 {
                geom_sup_rate(2, a)
            } else {
                1.0
            }
        }),
        kappa,
        Some(k3),
        UpperTail::Analytic(Arc::new(move |_i, m, x| {
            let s = euclid_norm(x) + a;
            (-(m as f64) * s).exp()
        })),
    ))
}

/// 2-state chain with rates `1 ± ½ sin x`; state-dependent but uniformly
/// positive, handy for exact-kernel coupling checks.
fn two_state_modulated() -> GeneratorFamily {
    GeneratorFamily::new(
        FamilyName::TwoStateModulated.as_str(),
        StateSpace::Finite(2),
        Arc::new(|i, j, x| match (i, j) {
            (1, 2) => 1.0 + 0.5 * x1(x).sin(),
            (2, 1) => 1.0 - 0.5 * x1(x).sin(),
            _ => 0.0,
        }),
        Arc::new(|i, j| match (i, j) {
            (1, 2) | (2, 1) => 1.5,
            _ => 0.0,
        }),
        Arc::new(|_n| 1.5),
        3.0,
        Some(1.0),
        UpperTail::Bandwidth(2),
    )
}

/// Coefficient evaluator writing `b(x, i)` (length `dim_x`) or the
/// row-major `dim_x × dim_w` matrix `σ(x, i)` into its output slice.
pub type CoefficientFn = Arc<dyn Fn(&[f64], State, &mut [f64]) + Send + Sync>;

/// Drift and diffusion of the slow process, with declared Lipschitz and
/// sup-norm constants.
#[derive(Clone)]
pub struct SlowCoefficients {
    pub dim_x: usize,
    pub dim_w: usize,
    drift_fn: CoefficientFn,
    diffusion_fn: CoefficientFn,
    pub lipschitz_k1: f64,
    pub bound_k2: f64,
}

impl SlowCoefficients {
    pub fn new(
        dim_x: usize,
        dim_w: usize,
        drift_fn: CoefficientFn,
        diffusion_fn: CoefficientFn,
        lipschitz_k1: f64,
        bound_k2: f64,
    ) -> Self {
        SlowCoefficients {
            dim_x,
            dim_w,
            drift_fn,
            diffusion_fn,
            lipschitz_k1,
            bound_k2,
        }
    }

    /// Write `b(x, i)` into `out` (length `dim_x`).
    pub fn drift_into(&self, x: &[f64], i: State, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim_x);
        (self.drift_fn)(x, i, out);
    }

    /// Write `σ(x, i)` row-major (`dim_x × dim_w`) into `out`.
    pub fn diffusion_into(&self, x: &[f64], i: State, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim_x * self.dim_w);
        (self.diffusion_fn)(x, i, out);
    }

    pub fn drift(&self, x: &[f64], i: State) -> Vec<f64> {
        let mut out = vec![0.0; self.dim_x];
        self.drift_into(x, i, &mut out);
        out
    }

    pub fn diffusion(&self, x: &[f64], i: State) -> Vec<f64> {
        let mut out = vec![0.0; self.dim_x * self.dim_w];
        self.diffusion_into(x, i, &mut out);
        out
    }

    /// Sampled boundedness and Lipschitz spot check over the given points
    /// and states: |b| ≤ K2, ‖σ‖_F ≤ K2, difference quotients ≤ K1·(1+1e-6).
    pub fn spot_check(&self, points: &[Vec<f64>], states: &[State]) -> Result<()> {
        let tol = 1.0 + 1e-6;
        for x in points {
            for &i in states {
                let b = self.drift(x, i);
                let s = self.diffusion(x, i);
                let b_norm = euclid_norm(&b);
                let s_norm = euclid_norm(&s);
                if b_norm > self.bound_k2 * tol || s_norm > self.bound_k2 * tol {
                    return Err(Error::Precondition(format!(
                        "coefficient bound violated at x={x:?}, i={i}: |b|={b_norm}, ‖σ‖={s_norm}, K2={}",
                        self.bound_k2
                    )));
                }
            }
        }
        for pair in points.windows(2) {
            let (x, y) = (&pair[0], &pair[1]);
            let dx = euclid_norm(&x.iter().zip(y).map(|(a, b)| a - b).collect::<Vec<_>>());
            if dx < 1e-12 {
                continue;
            }
            for &i in states {
                let bx = self.drift(x, i);
                let by = self.drift(y, i);
                let sx = self.diffusion(x, i);
                let sy = self.diffusion(y, i);
                let db = euclid_norm(&bx.iter().zip(&by).map(|(a, b)| a - b).collect::<Vec<_>>());
                let ds = euclid_norm(&sx.iter().zip(&sy).map(|(a, b)| a - b).collect::<Vec<_>>());
                if (db + ds) / dx > self.lipschitz_k1 * tol + 1e-9 {
                    return Err(Error::Precondition(format!(
                        "Lipschitz spot check failed at i={i}: quotient {}",
                        (db + ds) / dx
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A fully coupled two-time-scale system: slow coefficients, fast-chain
/// generator family, and initial data.
#[derive(Clone)]
pub struct TwoScaleModel {
    pub name: String,
    pub coefficients: SlowCoefficients,
    pub generator: GeneratorFamily,
    pub x0: Vec<f64>,
    pub i0: State,
}

/// Registered models for [`make_model`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelName {
    /// d=1: `b(x,i) = 1{i=1}`, constant σ, birth-death generator. The
    /// averaged drift is `1 − x`.
    IndicatorDrift,
    /// d=1: `b(x,i) = tanh x + 1/i`, `σ = s0/(1+x²)`, climb-and-reset
    /// generator; exercises full coupling in both directions.
    SinCoupled,
    /// Degenerate deterministic motion: `b ≡ c`, `σ ≡ 0`.
    ConstantDrift,
}

impl ModelName {
    pub const ALL: [ModelName; 3] = [
        ModelName::IndicatorDrift,
        ModelName::SinCoupled,
        ModelName::ConstantDrift,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ModelName::IndicatorDrift => "indicator-drift",
            ModelName::SinCoupled => "sin-coupled",
            ModelName::ConstantDrift => "constant-drift",
        }
    }
}

impl FromStr for ModelName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ModelName::ALL
            .iter()
            .find(|n| n.as_str() == s)
            .copied()
            .ok_or_else(|| {
                Error::invalid(
                    "model",
                    format!(
                        "unknown model `{s}`; known: {}",
                        ModelName::ALL.map(|n| n.as_str()).join(", ")
                    ),
                )
            })
    }
}

/// Parameters for [`make_model`].
#[derive(Debug, Clone)]
pub struct ModelParams {
    /// Diffusion scale.
    pub s0: f64,
    /// Drift constant for `constant-drift`.
    pub c: f64,
    pub x0: Option<Vec<f64>>,
    pub i0: Option<State>,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            s0: 1.0,
            c: 1.0,
            x0: None,
            i0: None,
        }
    }
}

/// Build and spot-validate a registered model.
pub fn make_model(name: ModelName, params: &ModelParams) -> Result<TwoScaleModel> {
    let model = match name {
        ModelName::IndicatorDrift => {
            let s0 = params.s0;
            if !(s0 >= 0.0) {
                return Err(Error::invalid("s0", "must be >= 0"));
            }
            TwoScaleModel {
                name: name.as_str().into(),
                coefficients: SlowCoefficients::new(
                    1,
                    1,
                    Arc::new(|_x, i, out| out[0] = if i == 1 { 1.0 } else { 0.0 }),
                    Arc::new(move |_x, _i, out| out[0] = s0),
                    0.0,
                    s0.max(1.0),
                ),
                generator: birth_death_linear_birth(),
                x0: params.x0.clone().unwrap_or_else(|| vec![0.1]),
                i0: params.i0.unwrap_or(1),
            }
        }
        ModelName::SinCoupled => {
            let s0 = params.s0;
            if !(s0 >= 0.0) {
                return Err(Error::invalid("s0", "must be >= 0"));
            }
            // sup |d/dx s0/(1+x²)| = s0·3√3/8 at x = ±1/√3.
            let sigma_lip = s0 * 3.0 * 3.0f64.sqrt() / 8.0;
            TwoScaleModel {
                name: name.as_str().into(),
                coefficients: SlowCoefficients::new(
                    1,
                    1,
                    Arc::new(|x, i, out| out[0] = x1(x).tanh() + 1.0 / i as f64),
                    Arc::new(move |x, _i, out| out[0] = s0 / (1.0 + x1(x) * x1(x))),
                    (1.0 + sigma_lip).max(1.0),
                    s0.max(2.0),
                ),
                generator: climb_and_reset_family(),
                x0: params.x0.clone().unwrap_or_else(|| vec![0.0]),
                i0: params.i0.unwrap_or(1),
            }
        }
        ModelName::ConstantDrift => {
            let c = params.c;
            TwoScaleModel {
                name: name.as_str().into(),
                coefficients: SlowCoefficients::new(
                    1,
                    1,
                    Arc::new(move |_x, _i, out| out[0] = c),
                    Arc::new(|_x, _i, out| out[0] = 0.0),
                    0.0,
                    c.abs().max(1e-12),
                ),
                generator: make_generator(FamilyName::TwoStateSymmetric, &GeneratorParams::default())?,
                x0: params.x0.clone().unwrap_or_else(|| vec![0.0]),
                i0: params.i0.unwrap_or(1),
            }
        }
    };
    if let StateSpace::Finite(n) = model.generator.state_space() {
        if model.i0 == 0 || model.i0 > n {
            return Err(Error::invalid("i0", format!("must be in 1..={n}")));
        }
    } else if model.i0 == 0 {
        return Err(Error::invalid("i0", "states are 1-based"));
    }
    let grid: Vec<Vec<f64>> = (0..40).map(|k| vec![-3.0 + 0.15 * k as f64]).collect();
    let states: Vec<State> = (1..=16).collect();
    model.coefficients.spot_check(&grid, &states)?;
    Ok(model)
}
