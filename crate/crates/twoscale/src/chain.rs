//! State-dependent generators on countable state spaces and the numerics
//! built on them: truncation to a finite window, invariant measures,
//! semigroup rows via uniformization, total-variation distances, ergodic
//! rate fitting, drift-condition checks, and the integration-by-parts
//! residual for parameter-perturbed semigroups.
//!
//! States are 1-based throughout (`S = {1, 2, …}`); matrices and
//! probability vectors index from 0 internally.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::lu_solve;

/// 1-based chain state.
pub type State = usize;

/// Poisson-series tail cutoff for uniformization; keeps kernel rows
/// stochastic to well within 1e-10.
const POISSON_TAIL: f64 = 1e-14;
/// Above this uniformization budget per application, split the time
/// interval to keep the Poisson series short and well-conditioned.
const SPLIT_LAMBDA_T: f64 = 300.0;
/// Truncation size above which the stationary solve switches from dense LU
/// to power iteration on the uniformized kernel.
const DENSE_SOLVE_LIMIT: usize = 2000;

type RateFn = Arc<dyn Fn(State, State, &[f64]) -> f64 + Send + Sync>;
type SupRateFn = Arc<dyn Fn(State, State) -> f64 + Send + Sync>;
type GammaFn = Arc<dyn Fn(State) -> f64 + Send + Sync>;
type TailFn = Arc<dyn Fn(State, usize, &[f64]) -> f64 + Send + Sync>;

/// Number of states of a generator family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateSpace {
    Finite(usize),
    Countable,
}

/// Where the upward rate mass of a row can live, used to sum the tail
/// `Σ_{j>m} q_ij(x)` that the truncation redirects to the boundary state.
#[derive(Clone)]
pub enum UpperTail {
    /// `q_ij = 0` whenever `j > i + w`.
    Bandwidth(usize),
    /// Exact closed form for `Σ_{j>m} q_ij(x)`.
    Analytic(TailFn),
}

/// A state-dependent conservative rate family `x ↦ Q(x)` over `{1,…,N}`,
/// `N ≤ ∞`, with the dominating-rate metadata that the interval-layout
/// coupling needs: per-entry sups `sup_x q_ij(x)`, per-row sups
/// `γ_n = sup_{k≠n} sup_x q_nk(x)`, and the summed bound
/// `κ = sup_i Σ_{j≠i} sup_x q_ij(x)`.
#[derive(Clone)]
pub struct GeneratorFamily {
    name: String,
    space: StateSpace,
    rate_fn: RateFn,
    sup_fn: SupRateFn,
    gamma_fn: GammaFn,
    kappa: f64,
    lipschitz_k3: Option<f64>,
    upper_tail: UpperTail,
}

impl GeneratorFamily {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        space: StateSpace,
        rate_fn: RateFn,
        sup_fn: SupRateFn,
        gamma_fn: GammaFn,
        kappa: f64,
        lipschitz_k3: Option<f64>,
        upper_tail: UpperTail,
    ) -> Self {
        GeneratorFamily {
            name: name.into(),
            space,
            rate_fn,
            sup_fn,
            gamma_fn,
            kappa,
            lipschitz_k3,
            upper_tail,
        }
    }

    /// Finite family with rates independent of the parameter `x`, given as a
    /// row-major matrix of off-diagonal rates (the diagonal is ignored).
    pub fn from_matrix(name: impl Into<String>, n: usize, off_diag: Vec<f64>) -> Self {
        assert_eq!(off_diag.len(), n * n, "rate matrix must be n x n");
        let rates = Arc::new(off_diag);
        let r1 = Arc::clone(&rates);
        let r2 = Arc::clone(&rates);
        let r3 = Arc::clone(&rates);
        let look = move |r: &[f64], i: State, j: State| -> f64 {
            if i == j || i == 0 || j == 0 || i > n || j > n {
                0.0
            } else {
                r[(i - 1) * n + (j - 1)]
            }
        };
        let kappa = (1..=n)
            .map(|i| (1..=n).filter(|&j| j != i).map(|j| look(&rates, i, j)).sum::<f64>())
            .fold(0.0, f64::max);
        GeneratorFamily::new(
            name,
            StateSpace::Finite(n),
            Arc::new(move |i, j, _x| look(&r1, i, j)),
            Arc::new(move |i, j| look(&r2, i, j)),
            Arc::new(move |i| {
                (1..=n)
                    .filter(|&k| k != i)
                    .map(|k| look(&r3, i, k))
                    .fold(0.0, f64::max)
            }),
            kappa,
            Some(0.0),
            UpperTail::Bandwidth(n),
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn state_space(&self) -> StateSpace {
        self.space
    }

    /// Transition rate `q_ij(x)`; zero on the diagonal and outside the
    /// state space.
    pub fn rate(&self, i: State, j: State, x: &[f64]) -> f64 {
        if i == j || i == 0 || j == 0 {
            return 0.0;
        }
        if let StateSpace::Finite(n) = self.space {
            if i > n || j > n {
                return 0.0;
            }
        }
        let q = (self.rate_fn)(i, j, x);
        debug_assert!(q >= 0.0, "negative rate q[{i}][{j}] = {q}");
        q
    }

    /// `sup_x q_ij(x)`, the per-entry dominating rate.
    pub fn sup_rate(&self, i: State, j: State) -> f64 {
        if i == j || i == 0 || j == 0 {
            return 0.0;
        }
        if let StateSpace::Finite(n) = self.space {
            if i > n || j > n {
                return 0.0;
            }
        }
        (self.sup_fn)(i, j)
    }

    /// `γ_n = sup_{k≠n} sup_x q_nk(x)`.
    pub fn gamma(&self, n: State) -> f64 {
        (self.gamma_fn)(n)
    }

    /// `κ = sup_i Σ_{j≠i} sup_x q_ij(x)`.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Declared Lipschitz constant for `x ↦ Q(x)` in the row-sup ℓ1 norm.
    pub fn lipschitz_k3(&self) -> Option<f64> {
        self.lipschitz_k3
    }

    /// `Σ_{j>m} q_ij(x)`: the rate mass a truncation at `m` redirects to the
    /// boundary state.
    pub fn tail_mass(&self, i: State, m: usize, x: &[f64]) -> f64 {
        match self.space {
            StateSpace::Finite(n) => (m + 1..=n)
                .filter(|&j| j != i)
                .map(|j| self.rate(i, j, x))
                .sum(),
            StateSpace::Countable => match &self.upper_tail {
                UpperTail::Bandwidth(w) => {
                    if i + w <= m {
                        0.0
                    } else {
                        (m + 1..=i + w)
                            .filter(|&j| j != i)
                            .map(|j| self.rate(i, j, x))
                            .sum()
                    }
                }
                UpperTail::Analytic(f) => f(i, m, x),
            },
        }
    }
}

/// How out-of-window rate mass is handled by [`truncate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TruncationPolicy {
    /// Rate mass to states beyond the window is redirected to the boundary
    /// state `M`; the boundary row's own overflow collapses to a (dropped)
    /// self-loop. Keeps the generator conservative and irreducible.
    ReflectToBoundary,
}

/// A finite conservative generator obtained from a [`GeneratorFamily`] at a
/// fixed parameter point.
#[derive(Debug, Clone)]
pub struct TruncatedChain {
    size: usize,
    /// Row-major `size × size` generator; rows sum to zero.
    rates: Vec<f64>,
    base_point: Vec<f64>,
    policy: TruncationPolicy,
}

impl TruncatedChain {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn base_point(&self) -> &[f64] {
        &self.base_point
    }

    pub fn policy(&self) -> TruncationPolicy {
        self.policy
    }

    /// Entry `q_ij` of the truncated generator (1-based states).
    pub fn rate_at(&self, i: State, j: State) -> f64 {
        self.rates[(i - 1) * self.size + (j - 1)]
    }

    pub fn row(&self, i: State) -> &[f64] {
        &self.rates[(i - 1) * self.size..i * self.size]
    }

    /// Uniformization rate: the largest diagonal magnitude.
    pub fn uniformization_rate(&self) -> f64 {
        (0..self.size)
            .map(|i| -self.rates[i * self.size + i])
            .fold(0.0, f64::max)
    }

    /// Strong connectivity of the positive-rate digraph.
    pub fn is_irreducible(&self) -> bool {
        if self.size == 1 {
            return true;
        }
        self.reaches_all(false) && self.reaches_all(true)
    }

    fn reaches_all(&self, reverse: bool) -> bool {
        let n = self.size;
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for (w, seen_w) in seen.iter_mut().enumerate() {
                let q = if reverse {
                    self.rates[w * n + v]
                } else {
                    self.rates[v * n + w]
                };
                if w != v && q > 0.0 && !*seen_w {
                    *seen_w = true;
                    count += 1;
                    stack.push(w);
                }
            }
        }
        count == n
    }
}

/// Nonnegative weights over a finite truncation summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector {
    weights: Vec<f64>,
}

impl ProbabilityVector {
    /// Validates nonnegativity and normalization (within 1e-12).
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("weights", "entries must be finite and >= 0"));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(
                "weights",
                format!("must sum to 1 within 1e-12, got {sum}"),
            ));
        }
        Ok(ProbabilityVector { weights })
    }

    pub fn point_mass(i: State, len: usize) -> Self {
        let mut weights = vec![0.0; len];
        weights[i - 1] = 1.0;
        ProbabilityVector { weights }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Weight of a 1-based state.
    pub fn weight(&self, i: State) -> f64 {
        self.weights[i - 1]
    }
}

/// Exponential envelope `d(t) ≈ c·e^{-λt}` fitted to total-variation decay.
#[derive(Debug, Clone)]
pub struct ErgodicRateFit {
    pub c: f64,
    pub lambda: f64,
    /// First and last time actually used by the fit.
    pub time_window: (f64, f64),
    /// Max log-domain deviation of the fit over the used points.
    pub residual: f64,
}

/// Outcome of [`check_drift_condition`].
#[derive(Debug, Clone)]
pub struct DriftConditionReport {
    pub holds: bool,
    /// Minimum of `(-c2·θ(i) + c3) - Qθ(i)` over checked rows and grid
    /// points; negative means the condition fails somewhere.
    pub min_margin: f64,
    pub worst_state: State,
    pub worst_grid_index: usize,
}

/// Truncate a family at parameter `x` to an `M × M` conservative generator,
/// redirecting out-of-window rate mass to the boundary state. Finite
/// families with `state_count ≤ M` come back exact (size `state_count`).
pub fn truncate(family: &GeneratorFamily, x: &[f64], m: usize) -> Result<TruncatedChain> {
    if m < 2 {
        return Err(Error::invalid("m", "truncation size must be >= 2"));
    }
    let m = match family.state_space() {
        StateSpace::Finite(n) => m.min(n),
        StateSpace::Countable => m,
    };
    if m < 2 {
        return Err(Error::invalid("m", "family has fewer than 2 states"));
    }

    let mut rates = vec![0.0; m * m];
    for i in 1..=m {
        let row = &mut rates[(i - 1) * m..i * m];
        let mut off_sum = 0.0;
        for j in 1..=m {
            if j == i {
                continue;
            }
            let q = family.rate(i, j, x);
            row[j - 1] = q;
            off_sum += q;
        }
        let tail = family.tail_mass(i, m, x);
        if !tail.is_finite() || !off_sum.is_finite() {
            return Err(Error::Precondition(format!(
                "row {i} of {} has non-finite rate mass",
                family.name()
            )));
        }
        if off_sum + tail > family.kappa() * (1.0 + 1e-9) + 1e-9 {
            return Err(Error::Precondition(format!(
                "row {i} of {} has rate mass {} exceeding kappa = {}",
                family.name(),
                off_sum + tail,
                family.kappa()
            )));
        }
        // Redirect the tail to the boundary column; from the boundary row
        // itself this is a self-loop and is dropped.
        if i < m {
            row[m - 1] += tail;
            off_sum += tail;
        }
        row[i - 1] = -off_sum;
    }

    Ok(TruncatedChain {
        size: m,
        rates,
        base_point: x.to_vec(),
        policy: TruncationPolicy::ReflectToBoundary,
    })
}

/// Row-sup ℓ1 distance between `Q(x)` and `Q(y)` on the `M`-window of
/// untruncated rates: `sup_{i≤M} Σ_{j≤M, j≠i} |q_ij(x) − q_ij(y)|`.
/// Monotone nondecreasing in `M`.
pub fn ell1_distance(family: &GeneratorFamily, x: &[f64], y: &[f64], m: usize) -> f64 {
    let m = match family.state_space() {
        StateSpace::Finite(n) => m.min(n),
        StateSpace::Countable => m,
    };
    (1..=m)
        .map(|i| {
            (1..=m)
                .filter(|&j| j != i)
                .map(|j| (family.rate(i, j, x) - family.rate(i, j, y)).abs())
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
}

/// Invariant probability measure of an irreducible truncated chain:
/// solves `πQ = 0`, `Σπ = 1` with `‖πQ‖_∞ ≤ tol`. Dense LU of the
/// augmented system up to 2000 states, power iteration on the uniformized
/// kernel above.
pub fn invariant_measure(chain: &TruncatedChain, tol: f64) -> Result<ProbabilityVector> {
    if tol <= 0.0 {
        return Err(Error::invalid("tol", "must be positive"));
    }
    if !chain.is_irreducible() {
        return Err(Error::NoUniqueInvariantMeasure(
            "truncated chain is reducible".into(),
        ));
    }
    let n = chain.size();
    let mut pi = if n <= DENSE_SOLVE_LIMIT {
        dense_stationary(chain)?
    } else {
        power_iterate(chain, tol)?
    };

    // Clean roundoff noise and renormalize.
    let most_negative = pi.iter().cloned().fold(0.0, f64::min);
    if most_negative < -1e-9 {
        return Err(Error::NumericalFailure(format!(
            "stationary solve produced weight {most_negative}"
        )));
    }
    for w in pi.iter_mut() {
        if *w < 0.0 {
            *w = 0.0;
        }
    }
    let sum: f64 = pi.iter().sum();
    for w in pi.iter_mut() {
        *w /= sum;
    }

    let residual = stationarity_residual(chain, &pi);
    if residual > tol {
        return Err(Error::ConvergenceFailure { residual, tol });
    }
    ProbabilityVector::new(pi)
}

fn stationarity_residual(chain: &TruncatedChain, pi: &[f64]) -> f64 {
    let n = chain.size();
    (0..n)
        .map(|j| {
            (0..n)
                .map(|i| pi[i] * chain.rates[i * n + j])
                .sum::<f64>()
                .abs()
        })
        .fold(0.0, f64::max)
}

/// Direct solve of the augmented system: rows of Qᵀ are the stationarity
/// equations, the last one replaced by Σπ = 1.
fn dense_stationary(chain: &TruncatedChain) -> Result<Vec<f64>> {
    let n = chain.size();
    let mut a = vec![0.0; n * n];
    for r in 0..n {
        for i in 0..n {
            a[r * n + i] = chain.rates[i * n + r];
        }
    }
    for i in 0..n {
        a[(n - 1) * n + i] = 1.0;
    }
    let mut b = vec![0.0; n];
    b[n - 1] = 1.0;
    lu_solve(&mut a, &mut b, n)?;
    Ok(b)
}

/// Warm start for the large-window iteration: the dense stationary law of
/// the leading block, padded with zeros. Starting from a near-stationary
/// bulk avoids the transport-limited regime where excess tail mass must
/// drain one state per kernel step.
fn block_warm_start(chain: &TruncatedChain) -> Option<Vec<f64>> {
    let n = chain.size();
    let block = DENSE_SOLVE_LIMIT.min(n);
    let mut rates = vec![0.0; block * block];
    for i in 0..block {
        let mut off_sum = 0.0;
        for j in 0..block {
            if i != j {
                let q = chain.rates[i * n + j];
                rates[i * block + j] = q;
                off_sum += q;
            }
        }
        rates[i * block + i] = -off_sum;
    }
    let sub = TruncatedChain {
        size: block,
        rates,
        base_point: chain.base_point.clone(),
        policy: chain.policy,
    };
    if !sub.is_irreducible() {
        return None;
    }
    let mut pi = dense_stationary(&sub).ok()?;
    if pi.iter().any(|w| !w.is_finite() || *w < -1e-9) {
        return None;
    }
    pi.resize(n, 0.0);
    Some(pi)
}

fn power_iterate(chain: &TruncatedChain, tol: f64) -> Result<Vec<f64>> {
    let n = chain.size();
    let lambda = chain.uniformization_rate() * (1.0 + 1e-6);
    if lambda <= 0.0 {
        return Err(Error::NoUniqueInvariantMeasure("zero generator".into()));
    }
    let mut pi = if n > DENSE_SOLVE_LIMIT {
        block_warm_start(chain).unwrap_or_else(|| vec![1.0 / n as f64; n])
    } else {
        vec![1.0 / n as f64; n]
    };
    for w in pi.iter_mut() {
        *w = w.max(0.0);
    }
    let sum: f64 = pi.iter().sum();
    for w in pi.iter_mut() {
        *w /= sum;
    }
    let mut flow = vec![0.0; n];
    // Work cap keeps pathological near-critical chains from spinning forever.
    let max_iters = (4e10 / (n * n) as f64).clamp(1e3, 5e5) as usize;
    for it in 0..max_iters {
        // flow = πQ; π ← π + flow/Λ is one uniformized kernel step.
        for (j, f) in flow.iter_mut().enumerate() {
            *f = (0..n).map(|i| pi[i] * chain.rates[i * n + j]).sum();
        }
        let residual = flow.iter().cloned().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if residual <= tol * 0.5 && it > 0 {
            return Ok(pi);
        }
        for (p, f) in pi.iter_mut().zip(&flow) {
            *p += f / lambda;
        }
        let sum: f64 = pi.iter().sum();
        for p in pi.iter_mut() {
            *p /= sum;
        }
    }
    let residual = stationarity_residual(chain, &pi);
    if residual > tol {
        return Err(Error::ConvergenceFailure { residual, tol });
    }
    Ok(pi)
}

/// One uniformized-series application of `e^{τQ}` to a vector.
/// `row_action` computes `v ↦ v·e^{τQ}` (distribution evolution);
/// otherwise `v ↦ e^{τQ}·v` (function evolution).
fn uniformized_apply_once(chain: &TruncatedChain, tau: f64, v: &[f64], row_action: bool) -> Vec<f64> {
    let n = chain.size();
    let lambda = chain.uniformization_rate();
    if lambda <= 0.0 || tau == 0.0 {
        return v.to_vec();
    }
    let lt = lambda * tau;
    debug_assert!(lt <= SPLIT_LAMBDA_T * 1.0001);
    let mut term = v.to_vec();
    let mut weight = (-lt).exp();
    let mut cumulative = weight;
    let mut acc: Vec<f64> = term.iter().map(|t| t * weight).collect();
    let mut scratch = vec![0.0; n];
    let mut k = 0usize;
    while 1.0 - cumulative > POISSON_TAIL && k < 100_000 {
        k += 1;
        // term ← term·P  (or P·term), with P = I + Q/Λ.
        if row_action {
            for (j, s) in scratch.iter_mut().enumerate() {
                *s = (0..n).map(|i| term[i] * chain.rates[i * n + j]).sum();
            }
        } else {
            for (i, s) in scratch.iter_mut().enumerate() {
                let row = &chain.rates[i * n..(i + 1) * n];
                *s = row.iter().zip(term.iter()).map(|(q, t)| q * t).sum();
            }
        }
        for (t, s) in term.iter_mut().zip(&scratch) {
            *t += *s / lambda;
        }
        weight *= lt / k as f64;
        cumulative += weight;
        for (a, t) in acc.iter_mut().zip(&term) {
            *a += weight * t;
        }
    }
    acc
}

/// Apply `e^{tQ}` to a vector, splitting `t` so each uniformized series
/// stays short.
pub(crate) fn semigroup_apply(chain: &TruncatedChain, t: f64, v: &[f64], row_action: bool) -> Vec<f64> {
    let lambda = chain.uniformization_rate();
    let pieces = ((lambda * t) / SPLIT_LAMBDA_T).ceil().max(1.0) as usize;
    let tau = t / pieces as f64;
    let mut cur = v.to_vec();
    for _ in 0..pieces {
        cur = uniformized_apply_once(chain, tau, &cur, row_action);
    }
    cur
}

/// Row `i` of `e^{tQ}`: the distribution of the chain at time `t` started
/// from state `i`, via uniformization with Poisson tail below 1e-14.
pub fn transition_kernel(chain: &TruncatedChain, t: f64, i: State) -> Result<ProbabilityVector> {
    if t < 0.0 {
        return Err(Error::invalid("t", "time must be >= 0"));
    }
    if i == 0 || i > chain.size() {
        return Err(Error::invalid("i", "state out of range"));
    }
    if t == 0.0 {
        return Ok(ProbabilityVector::point_mass(i, chain.size()));
    }
    let e_i = ProbabilityVector::point_mass(i, chain.size());
    let row = semigroup_apply(chain, t, e_i.weights(), true);
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > 1e-10 {
        return Err(Error::NumericalFailure(format!(
            "kernel row sums to {sum}, outside 1e-10 of 1"
        )));
    }
    // The series is a nonnegative mixture; normalize away the cut tail.
    let row = row.into_iter().map(|w| (w / sum).max(0.0)).collect();
    ProbabilityVector::new(row)
}

/// Total variation in the convention `‖μ−ν‖ = Σ_i |μ_i − ν_i|`, range [0, 2].
pub fn total_variation(mu: &ProbabilityVector, nu: &ProbabilityVector) -> Result<f64> {
    if mu.len() != nu.len() {
        return Err(Error::invalid("nu", "length mismatch with mu"));
    }
    Ok(mu
        .weights()
        .iter()
        .zip(nu.weights())
        .map(|(a, b)| (a - b).abs())
        .sum())
}

/// Fit `sup_i ‖P_t(i,·) − π‖_var ≈ c·e^{-λt}` over the probe states
/// `1..=probes`, using only times where the decay is in the exponential
/// regime (d(t) ≤ 0.5) and above numerical noise (d(t) ≥ 1e-10).
pub fn fit_ergodic_rate(
    family: &GeneratorFamily,
    x: &[f64],
    m: usize,
    times: &[f64],
) -> Result<ErgodicRateFit> {
    let probes: Vec<State> = (1..=m.min(50)).collect();
    fit_ergodic_rate_probed(family, x, m, times, &probes)
}

/// As [`fit_ergodic_rate`] with explicit probe states.
pub fn fit_ergodic_rate_probed(
    family: &GeneratorFamily,
    x: &[f64],
    m: usize,
    times: &[f64],
    probe_states: &[State],
) -> Result<ErgodicRateFit> {
    if times.is_empty() || times.iter().any(|t| *t <= 0.0) {
        return Err(Error::invalid("times", "need a nonempty list of positive times"));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("times", "must be strictly increasing"));
    }
    let chain = truncate(family, x, m)?;
    let pi = invariant_measure(&chain, 1e-10)?;

    let decays = sup_tv_decay(&chain, &pi, times, probe_states)?;
    fit_exponential_envelope(times, &decays)
}

/// `d(t) = sup over probe states of ‖P_t(i,·) − π‖_var` for each time.
pub fn sup_tv_decay(
    chain: &TruncatedChain,
    pi: &ProbabilityVector,
    times: &[f64],
    probe_states: &[State],
) -> Result<Vec<f64>> {
    if probe_states.is_empty() || probe_states.iter().any(|&i| i == 0 || i > chain.size()) {
        return Err(Error::invalid("probe_states", "need in-range probe states"));
    }
    times
        .iter()
        .map(|&t| {
            let mut worst = 0.0f64;
            for &i in probe_states {
                let row = transition_kernel(chain, t, i)?;
                worst = worst.max(total_variation(&row, pi)?);
            }
            Ok(worst)
        })
        .collect()
}

/// Least squares on `log d(t) = log c − λt` over the usable window.
pub fn fit_exponential_envelope(times: &[f64], decays: &[f64]) -> Result<ErgodicRateFit> {
    let usable: Vec<(f64, f64)> = times
        .iter()
        .zip(decays)
        .filter(|(_, d)| **d >= 1e-10 && **d <= 0.5)
        .map(|(t, d)| (*t, d.ln()))
        .collect();
    if usable.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "only {} usable decay points in (1e-10, 0.5]",
            usable.len()
        )));
    }
    let n = usable.len() as f64;
    let st: f64 = usable.iter().map(|(t, _)| t).sum();
    let sl: f64 = usable.iter().map(|(_, l)| l).sum();
    let stt: f64 = usable.iter().map(|(t, _)| t * t).sum();
    let stl: f64 = usable.iter().map(|(t, l)| t * l).sum();
    let denom = n * stt - st * st;
    if denom.abs() < 1e-300 {
        return Err(Error::InsufficientData("degenerate time grid".into()));
    }
    let slope = (n * stl - st * sl) / denom;
    let intercept = (sl - slope * st) / n;
    let lambda = -slope;
    if !(lambda > 0.0) {
        return Err(Error::NumericalFailure(format!(
            "fitted decay rate is nonpositive ({lambda}); chain does not look ergodic on this window"
        )));
    }
    let residual = usable
        .iter()
        .map(|(t, l)| (l - (intercept + slope * t)).abs())
        .fold(0.0, f64::max);
    Ok(ErgodicRateFit {
        c: intercept.exp(),
        lambda,
        time_window: (usable[0].0, usable[usable.len() - 1].0),
        residual,
    })
}

/// Check the Lyapunov-type drift condition
/// `Qθ(i) = Σ_j q_ij(x)(θ(j) − θ(i)) ≤ −c2·θ(i) + c3` on truncated rows
/// `i ≤ M−1` (the boundary row is distorted by redirection) over a grid of
/// parameter points.
pub fn check_drift_condition(
    family: &GeneratorFamily,
    theta: &dyn Fn(State) -> f64,
    c2: f64,
    c3: f64,
    x_grid: &[Vec<f64>],
    m: usize,
) -> Result<DriftConditionReport> {
    if c2 <= 0.0 {
        return Err(Error::invalid("c2", "must be positive"));
    }
    if x_grid.is_empty() {
        return Err(Error::invalid("x_grid", "need at least one grid point"));
    }
    let theta_vals: Vec<f64> = (1..=m).map(theta).collect();
    if theta_vals.iter().any(|v| *v <= 0.0 || !v.is_finite()) {
        return Err(Error::invalid("theta", "must be positive and finite on 1..=M"));
    }
    let theta_max = theta_vals.iter().cloned().fold(0.0, f64::max);
    let slack = 1e-9 * (1.0 + c3.abs() + c2 * theta_max);

    let mut min_margin = f64::INFINITY;
    let mut worst_state = 1;
    let mut worst_grid = 0;
    for (gx, x) in x_grid.iter().enumerate() {
        let chain = truncate(family, x, m)?;
        let last_checked = chain.size() - 1;
        for i in 1..=last_checked {
            let drift: f64 = (1..=chain.size())
                .filter(|&j| j != i)
                .map(|j| chain.rate_at(i, j) * (theta_vals[j - 1] - theta_vals[i - 1]))
                .sum();
            let margin = (-c2 * theta_vals[i - 1] + c3) - drift;
            if margin < min_margin {
                min_margin = margin;
                worst_state = i;
                worst_grid = gx;
            }
        }
    }
    Ok(DriftConditionReport {
        holds: min_margin >= -slack,
        min_margin,
        worst_state,
        worst_grid_index: worst_grid,
    })
}

/// Max over starting states of the defect in the semigroup perturbation
/// identity `P_t^y h − P_t^x h = ∫_0^t P_{t−s}^y (Q(y)−Q(x)) P_s^x h ds`,
/// with the integral by composite Simpson quadrature. Odd panel counts are
/// rounded up to even.
pub fn integration_by_parts_residual(
    family: &GeneratorFamily,
    x: &[f64],
    y: &[f64],
    h: &[f64],
    t: f64,
    m: usize,
    quad_steps: usize,
) -> Result<f64> {
    if quad_steps < 2 {
        return Err(Error::invalid("quad_steps", "need at least 2 quadrature panels"));
    }
    if t <= 0.0 {
        return Err(Error::invalid("t", "time must be positive"));
    }
    if h.iter().any(|v| v.abs() > 1.0 + 1e-12) {
        return Err(Error::Precondition("|h| must be <= 1 on the window".into()));
    }
    let chain_x = truncate(family, x, m)?;
    let chain_y = truncate(family, y, m)?;
    let n = chain_x.size();
    if h.len() != n {
        return Err(Error::invalid("h", format!("need length {n}")));
    }

    let panels = quad_steps + quad_steps % 2;
    let step = t / panels as f64;

    // Difference generator D = Q(y) − Q(x).
    let d: Vec<f64> = chain_y
        .rates
        .iter()
        .zip(&chain_x.rates)
        .map(|(qy, qx)| qy - qx)
        .collect();
    let apply_d = |v: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| d[i * n..(i + 1) * n].iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    };

    // Simpson weights 1,4,2,…,4,1 scaled by step/3.
    let mut integral = vec![0.0; n];
    for node in 0..=panels {
        let s = step * node as f64;
        let u = semigroup_apply(&chain_x, s, h, false);
        let w = apply_d(&u);
        let g = semigroup_apply(&chain_y, t - s, &w, false);
        let coeff = if node == 0 || node == panels {
            1.0
        } else if node % 2 == 1 {
            4.0
        } else {
            2.0
        } * step
            / 3.0;
        for (acc, gi) in integral.iter_mut().zip(&g) {
            *acc += coeff * gi;
        }
    }

    let lhs_y = semigroup_apply(&chain_y, t, h, false);
    let lhs_x = semigroup_apply(&chain_x, t, h, false);
    Ok(lhs_y
        .iter()
        .zip(&lhs_x)
        .zip(&integral)
        .map(|((py, px), int)| (py - px - int).abs())
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state_symmetric() -> GeneratorFamily {
        GeneratorFamily::from_matrix("two_state", 2, vec![0.0, 1.0, 1.0, 0.0])
    }

    /// Dense matrix exponential by Taylor series with scaling and squaring.
    /// Independent of the uniformization path.
    fn expm_oracle(q: &[f64], n: usize, t: f64) -> Vec<f64> {
        let norm: f64 = (0..n)
            .map(|i| q[i * n..(i + 1) * n].iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let mut s = 0u32;
        while norm * t / 2f64.powi(s as i32) > 0.5 {
            s += 1;
        }
        let tau = t / 2f64.powi(s as i32);
        // Taylor to order 20 at the scaled time.
        let mut result = vec![0.0; n * n];
        for i in 0..n {
            result[i * n + i] = 1.0;
        }
        let mut term = result.clone();
        for k in 1..=20 {
            let mut next = vec![0.0; n * n];
            for i in 0..n {
                for l in 0..n {
                    let tv = term[i * n + l];
                    if tv == 0.0 {
                        continue;
                    }
                    for j in 0..n {
                        next[i * n + j] += tv * q[l * n + j] * tau / k as f64;
                    }
                }
            }
            for (r, v) in result.iter_mut().zip(&next) {
                *r += v;
            }
            term = next;
        }
        for _ in 0..s {
            let mut sq = vec![0.0; n * n];
            for i in 0..n {
                for l in 0..n {
                    let rv = result[i * n + l];
                    if rv == 0.0 {
                        continue;
                    }
                    for j in 0..n {
                        sq[i * n + j] += rv * result[l * n + j];
                    }
                }
            }
            result = sq;
        }
        result
    }

    fn random_conservative(n: usize, seed: u64) -> Vec<f64> {
        let mut stream = crate::rng::Stream::new(seed);
        let mut q = vec![0.0; n * n];
        for i in 0..n {
            let mut sum = 0.0;
            for j in 0..n {
                if i != j {
                    let v = stream.next_f64() * 2.0;
                    q[i * n + j] = v;
                    sum += v;
                }
            }
            q[i * n + i] = -sum;
        }
        q
    }

    #[test]
    fn truncate_finite_family_is_exact() {
        let fam = two_state_symmetric();
        let chain = truncate(&fam, &[0.0], 2).unwrap();
        assert_eq!(chain.size(), 2);
        assert_eq!(chain.rate_at(1, 2), 1.0);
        assert_eq!(chain.rate_at(1, 1), -1.0);
    }

    #[test]
    fn truncate_rejects_tiny_window() {
        let fam = two_state_symmetric();
        assert!(truncate(&fam, &[0.0], 1).is_err());
    }

    #[test]
    fn truncate_rejects_rows_above_declared_bound() {
        // A family whose declared κ understates its actual row mass
        // violates the (A2)-style precondition.
        let fam = GeneratorFamily::new(
            "overweight",
            StateSpace::Finite(3),
            Arc::new(|i, j, _x| if i != j { 5.0 } else { 0.0 }),
            Arc::new(|i, j| if i != j { 5.0 } else { 0.0 }),
            Arc::new(|_| 5.0),
            1.0,
            None,
            UpperTail::Bandwidth(3),
        );
        match truncate(&fam, &[0.0], 3) {
            Err(Error::Precondition(msg)) => assert!(msg.contains("kappa")),
            other => panic!("expected precondition violation, got {other:?}"),
        }
    }

    #[test]
    fn truncate_redirects_five_state_to_window_two() {
        // 5-state family with known rates; window M=2 must fold columns 3..5
        // into state 2.
        let n = 5;
        let mut off = vec![0.0; n * n];
        let put = |off: &mut Vec<f64>, i: usize, j: usize, v: f64| off[(i - 1) * n + (j - 1)] = v;
        put(&mut off, 1, 2, 0.5);
        put(&mut off, 1, 3, 0.25);
        put(&mut off, 1, 5, 0.75);
        put(&mut off, 2, 1, 1.0);
        put(&mut off, 2, 4, 0.5);
        put(&mut off, 3, 1, 1.0);
        put(&mut off, 4, 3, 1.0);
        put(&mut off, 5, 4, 1.0);
        let fam = GeneratorFamily::from_matrix("five", n, off);
        let chain = truncate(&fam, &[0.0], 2).unwrap();
        // Row 1: 0.5 direct + (0.25 + 0.75) redirected.
        assert!((chain.rate_at(1, 2) - 1.5).abs() < 1e-15);
        assert!((chain.rate_at(1, 1) + 1.5).abs() < 1e-15);
        // Row 2: mass to state 4 collapses into the boundary self-loop.
        assert!((chain.rate_at(2, 1) - 1.0).abs() < 1e-15);
        assert!((chain.rate_at(2, 2) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn rows_sum_to_zero() {
        let q = random_conservative(6, 77);
        let fam = GeneratorFamily::from_matrix("rand6", 6, q);
        let chain = truncate(&fam, &[0.0], 4).unwrap();
        for i in 1..=chain.size() {
            let sum: f64 = chain.row(i).iter().sum();
            assert!(sum.abs() < 1e-12, "row {i} sums to {sum}");
        }
    }

    #[test]
    fn ell1_zero_at_equal_points() {
        let fam = two_state_symmetric();
        assert_eq!(ell1_distance(&fam, &[0.3], &[0.3], 2), 0.0);
    }

    #[test]
    fn invariant_two_state_symmetric() {
        let fam = two_state_symmetric();
        let chain = truncate(&fam, &[0.0], 2).unwrap();
        let pi = invariant_measure(&chain, 1e-12).unwrap();
        assert!((pi.weight(1) - 0.5).abs() < 1e-12);
        assert!((pi.weight(2) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn invariant_rejects_reducible() {
        // Absorbing state 2.
        let fam = GeneratorFamily::from_matrix("absorbing", 2, vec![0.0, 1.0, 0.0, 0.0]);
        let chain = truncate(&fam, &[0.0], 2).unwrap();
        match invariant_measure(&chain, 1e-10) {
            Err(Error::NoUniqueInvariantMeasure(_)) => {}
            other => panic!("expected reducibility error, got {other:?}"),
        }
    }

    #[test]
    fn invariant_power_iteration_matches_dense() {
        // Same 30-state chain through both solver paths.
        let q = random_conservative(30, 11);
        let fam = GeneratorFamily::from_matrix("rand30", 30, q);
        let chain = truncate(&fam, &[0.0], 30).unwrap();
        let dense = invariant_measure(&chain, 1e-10).unwrap();
        let iter = power_iterate(&chain, 1e-10).unwrap();
        for (a, b) in dense.weights().iter().zip(&iter) {
            assert!((a - b).abs() < 1e-7, "{a} vs {b}");
        }
    }

    #[test]
    fn invariant_measure_above_dense_limit_uses_iteration() {
        // A window past the dense-solve cutoff goes through the
        // uniformized power iteration; the head of the geometric law is
        // unchanged.
        let fam = crate::models::make_generator(
            crate::models::FamilyName::BdExample21,
            &crate::models::GeneratorParams::default(),
        )
        .unwrap();
        let x = 0.5;
        let chain = truncate(&fam, &[x], DENSE_SOLVE_LIMIT + 50).unwrap();
        let pi = invariant_measure(&chain, 1e-9).unwrap();
        for i in 1..=4usize {
            let expect = (1.0 - x) * x.powi(i as i32 - 1);
            assert!(
                (pi.weight(i) - expect).abs() < 1e-7,
                "pi[{i}] = {} vs {expect}",
                pi.weight(i)
            );
        }
    }

    #[test]
    fn kernel_time_zero_is_point_mass() {
        let fam = two_state_symmetric();
        let chain = truncate(&fam, &[0.0], 2).unwrap();
        let row = transition_kernel(&chain, 0.0, 2).unwrap();
        assert_eq!(row.weights(), &[0.0, 1.0]);
    }

    #[test]
    fn kernel_two_state_closed_form() {
        let fam = two_state_symmetric();
        let chain = truncate(&fam, &[0.0], 2).unwrap();
        let row = transition_kernel(&chain, 1.0, 1).unwrap();
        let expect = 0.5 + 0.5 * (-2.0f64).exp();
        assert!((row.weight(1) - expect).abs() < 1e-12, "{}", row.weight(1));
        assert!((row.weight(2) - (1.0 - expect)).abs() < 1e-12);
    }

    #[test]
    fn kernel_matches_dense_exponential_oracle() {
        let n = 5;
        let q = random_conservative(n, 2024);
        let fam = GeneratorFamily::from_matrix("rand5", n, q.clone());
        let chain = truncate(&fam, &[0.0], n).unwrap();
        let t = 0.7;
        let dense = expm_oracle(&q, n, t);
        for i in 1..=n {
            let row = transition_kernel(&chain, t, i).unwrap();
            for j in 1..=n {
                let want = dense[(i - 1) * n + (j - 1)];
                let got = row.weight(j);
                assert!((got - want).abs() < 1e-9, "P[{i}][{j}]: {got} vs {want}");
            }
        }
    }

    #[test]
    fn kernel_long_horizon_reaches_stationarity() {
        // Exercises the time-splitting path (Λt = 500).
        let fam = two_state_symmetric();
        let chain = truncate(&fam, &[0.0], 2).unwrap();
        let row = transition_kernel(&chain, 500.0, 1).unwrap();
        assert!((row.weight(1) - 0.5).abs() < 1e-9);
        let sum: f64 = row.weights().iter().sum();
        assert!((sum - 1.0).abs() < 1e-10);
    }

    #[test]
    fn semigroup_property() {
        let n = 4;
        let q = random_conservative(n, 5);
        let fam = GeneratorFamily::from_matrix("rand4", n, q);
        let chain = truncate(&fam, &[0.0], n).unwrap();
        let (s, t) = (0.4, 0.9);
        for i in 1..=n {
            let direct = transition_kernel(&chain, s + t, i).unwrap();
            let first = transition_kernel(&chain, s, i).unwrap();
            let composed: Vec<f64> = (1..=n)
                .map(|j| {
                    (1..=n)
                        .map(|k| first.weight(k) * transition_kernel(&chain, t, k).unwrap().weight(j))
                        .sum()
                })
                .collect();
            for j in 1..=n {
                assert!(
                    (direct.weight(j) - composed[j - 1]).abs() < 1e-9,
                    "chapman-kolmogorov broke at ({i},{j})"
                );
            }
        }
    }

    #[test]
    fn tv_basics() {
        let a = ProbabilityVector::point_mass(1, 3);
        let b = ProbabilityVector::point_mass(3, 3);
        assert_eq!(total_variation(&a, &a).unwrap(), 0.0);
        assert_eq!(total_variation(&a, &b).unwrap(), 2.0);
        let c = ProbabilityVector::new(vec![0.5, 0.25, 0.25]).unwrap();
        assert!(total_variation(&a, &c).unwrap() <= 2.0);
        assert!(total_variation(&a, &b).is_ok());
        assert!(total_variation(&a, &ProbabilityVector::point_mass(1, 2)).is_err());
    }

    #[test]
    fn fit_two_state_rate_is_two() {
        // d(t) = e^{-2t} exactly for the symmetric rate-1 chain.
        let fam = two_state_symmetric();
        let times: Vec<f64> = (1..=10).map(|k| 0.5 + k as f64).collect();
        let fit = fit_ergodic_rate(&fam, &[0.0], 2, &times).unwrap();
        assert!(
            (fit.lambda - 2.0).abs() / 2.0 < 0.01,
            "lambda {} not within 1% of 2",
            fit.lambda
        );
        assert!((fit.c - 1.0).abs() < 0.05, "prefactor {}", fit.c);
        // Late points sit near the TV roundoff floor, so the log-domain
        // residual is small but not machine-zero.
        assert!(fit.residual < 1e-3, "residual {}", fit.residual);
    }

    #[test]
    fn fit_needs_two_usable_points() {
        let fam = two_state_symmetric();
        // d(t) < 1e-10 for t this large; everything gets discarded.
        let times = vec![50.0, 60.0, 70.0];
        match fit_ergodic_rate(&fam, &[0.0], 2, &times) {
            Err(Error::InsufficientData(_)) => {}
            other => panic!("expected insufficient data, got {other:?}"),
        }
    }

    #[test]
    fn drift_condition_constant_theta() {
        let fam = two_state_symmetric();
        let report =
            check_drift_condition(&fam, &|_| 1.0, 1.0, 1.0, &[vec![0.0]], 2).unwrap();
        assert!(report.holds);
        // Qθ = 0, bound -1+1 = 0: margin exactly zero.
        assert!(report.min_margin.abs() < 1e-12);
    }

    #[test]
    fn drift_condition_linear_theta_on_reset_family() {
        // Row arithmetic: Qθ(i) = (2+sin x) + (2−sin x)(1−i) for i ≥ 2, so
        // with c2 = 1, c3 = 5 the margin is 1 + i(1−sin x) ≥ 1, minimized
        // where sin x = 1.
        let fam = crate::models::make_generator(
            crate::models::FamilyName::ResetExample232,
            &crate::models::GeneratorParams::default(),
        )
        .unwrap();
        let grid: Vec<Vec<f64>> = vec![vec![0.0], vec![std::f64::consts::FRAC_PI_2], vec![3.5]];
        let report = check_drift_condition(&fam, &|i| i as f64, 1.0, 5.0, &grid, 50).unwrap();
        assert!(report.holds);
        assert!((report.min_margin - 1.0).abs() < 1e-12, "margin {}", report.min_margin);
        assert_eq!(report.worst_grid_index, 1);
    }

    #[test]
    fn drift_condition_fails_for_unbounded_demand() {
        // Birth-death rows give Qθ(i) = x − 1 for interior i, a constant,
        // so demanding −0.1·θ(i) decay with no offset fails once
        // 0.1·i > 1 − x. The margin table pins the worst row.
        let fam = crate::models::make_generator(
            crate::models::FamilyName::BdExample21,
            &crate::models::GeneratorParams::default(),
        )
        .unwrap();
        let grid: Vec<Vec<f64>> = vec![vec![0.2], vec![0.5], vec![0.8]];
        let m = 50;
        let report = check_drift_condition(&fam, &|i| i as f64, 0.1, 0.0, &grid, m).unwrap();
        assert!(!report.holds);
        // Interior rows: margin(i, x) = (1 − x) − 0.1·i, worst at the
        // last checked row i = M−1 and the largest grid x.
        let expect = (1.0 - 0.8) - 0.1 * (m as f64 - 1.0);
        assert!(
            (report.min_margin - expect).abs() < 1e-12,
            "margin {} vs {expect}",
            report.min_margin
        );
        assert_eq!(report.worst_state, m - 1);
        assert_eq!(report.worst_grid_index, 2);
    }

    #[test]
    fn ibp_residual_zero_for_equal_points() {
        let fam = two_state_symmetric();
        let h = vec![1.0, -1.0];
        let r = integration_by_parts_residual(&fam, &[0.2], &[0.2], &h, 1.0, 2, 8).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn ibp_two_state_fine_quadrature() {
        // Distinct parameter points on the modulated 2-state family: the
        // closed-form semigroups make Simpson at 200 panels essentially
        // exact.
        let fam = crate::models::make_generator(
            crate::models::FamilyName::TwoStateModulated,
            &crate::models::GeneratorParams::default(),
        )
        .unwrap();
        let h = vec![1.0, -1.0];
        let r =
            integration_by_parts_residual(&fam, &[0.1], &[1.3], &h, 1.0, 2, 200).unwrap();
        assert!(r <= 1e-8, "residual {r:e}");
    }

    #[test]
    fn ibp_rejects_unbounded_h() {
        let fam = two_state_symmetric();
        let h = vec![2.0, 0.0];
        assert!(integration_by_parts_residual(&fam, &[0.0], &[0.1], &h, 1.0, 2, 8).is_err());
    }

    #[test]
    fn ibp_odd_panel_counts_round_up() {
        let fam = crate::models::make_generator(
            crate::models::FamilyName::TwoStateModulated,
            &crate::models::GeneratorParams::default(),
        )
        .unwrap();
        let h = vec![1.0, -1.0];
        let odd = integration_by_parts_residual(&fam, &[0.1], &[1.3], &h, 1.0, 2, 9).unwrap();
        let even = integration_by_parts_residual(&fam, &[0.1], &[1.3], &h, 1.0, 2, 10).unwrap();
        assert_eq!(odd.to_bits(), even.to_bits());
        assert!(integration_by_parts_residual(&fam, &[0.1], &[1.3], &h, 1.0, 2, 1).is_err());
    }

    #[test]
    fn probability_vector_validation() {
        assert!(ProbabilityVector::new(vec![0.5, 0.5]).is_ok());
        assert!(ProbabilityVector::new(vec![0.6, 0.5]).is_err());
        assert!(ProbabilityVector::new(vec![-0.1, 1.1]).is_err());
    }
}
