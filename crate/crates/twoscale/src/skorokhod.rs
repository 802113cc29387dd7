//! Interval-layout representation of state-dependent jump chains and the
//! synchronous coupling it induces.
//!
//! Each source state `n` owns a window of the real mark line split into
//! slots of width `γ_n = sup_{k≠n} sup_x q_nk(x)`: destination `k > n` gets
//! the slot `[(k−n−1)γ_n, (k−n)γ_n)` with its rate interval left-aligned,
//! destination `k < n` gets `[(k−n)γ_n, (k+1−n)γ_n)` with the interval
//! right-aligned. The slot positions do not depend on the parameter `x`,
//! so two chains driven by the same marked Poisson streams jump together
//! whenever their rate intervals overlap at the shared mark, and the
//! fraction of time they disagree is controlled by the ℓ1 distance of
//! their generators.
//!
//! Candidate events for a chain sitting at state `n` arrive at the
//! dominating rate `(M−1)γ_n` (the Lebesgue measure of the whole window,
//! divided by α on the fast scale) with marks uniform on the window; a
//! candidate is accepted iff its mark falls inside the rate interval of
//! some destination. This is exact thinning: each marginal is precisely
//! the truncated chain at its own parameter.

use rayon::prelude::*;

use crate::chain::{ell1_distance, GeneratorFamily, State};
use crate::error::{Error, Result};
use crate::rng::{tags, Stream};

/// Per-destination mark interval `[lo, hi)` of a source state.
#[derive(Debug, Clone, PartialEq)]
pub struct LayoutEntry {
    pub destination: State,
    pub lo: f64,
    pub hi: f64,
}

/// The mark intervals of one source state at a fixed parameter point.
#[derive(Debug, Clone)]
pub struct IntervalLayout {
    pub source: State,
    /// Entries with positive length, ordered by destination.
    pub entries: Vec<LayoutEntry>,
    /// Lebesgue measure of the x-independent dominating set
    /// `Σ_{k≤M, k≠n} sup_x q_nk(x)`; bounded by κ.
    pub dominating_measure: f64,
}

impl IntervalLayout {
    /// Total entry length, `Σ_{k≠n} q_nk(x)`.
    pub fn total_rate(&self) -> f64 {
        self.entries.iter().map(|e| e.hi - e.lo).sum()
    }
}

/// Start of the slot destination `k ≠ n` occupies on source `n`'s mark line.
#[inline]
fn slot_lo(n: State, k: State, gamma: f64) -> f64 {
    if k > n {
        (k - n - 1) as f64 * gamma
    } else {
        -((n - k) as f64) * gamma
    }
}

/// Build the mark intervals of source state `n` for destinations `k ≤ M`.
pub fn interval_layout(
    family: &GeneratorFamily,
    x: &[f64],
    n: State,
    m: usize,
) -> Result<IntervalLayout> {
    if n == 0 || n > m {
        return Err(Error::invalid("n", format!("source state must be in 1..={m}")));
    }
    let gamma = family.gamma(n);
    let mut entries = Vec::new();
    let mut dominating = 0.0;
    for k in 1..=m {
        if k == n {
            continue;
        }
        dominating += family.sup_rate(n, k);
        let q = family.rate(n, k, x);
        if q <= 0.0 {
            continue;
        }
        let lo_slot = slot_lo(n, k, gamma);
        let (lo, hi) = if k > n {
            (lo_slot, lo_slot + q)
        } else {
            (lo_slot + gamma - q, lo_slot + gamma)
        };
        // A rate below the slot coordinate's ulp collapses to an empty
        // half-open interval; drop it (no mark can land there).
        if hi <= lo {
            continue;
        }
        entries.push(LayoutEntry {
            destination: k,
            lo,
            hi,
        });
    }
    Ok(IntervalLayout {
        source: n,
        entries,
        dominating_measure: dominating,
    })
}

/// Destination for a mark by scanning the layout's half-open entries;
/// `None` when the mark misses every interval (the candidate is thinned).
pub fn jump_destination(layout: &IntervalLayout, mark: f64) -> Option<State> {
    layout
        .entries
        .iter()
        .find(|e| e.lo <= mark && mark < e.hi)
        .map(|e| e.destination)
}

/// O(1) equivalent of building the layout and scanning it, used by the
/// simulators: slot arithmetic yields the only candidate destination and a
/// single rate evaluation decides acceptance. The boundary slot `M` is
/// widened by the row's tail mass `Σ_{j>M} q_nj(x)` so out-of-window jumps
/// redirect to `M`, mirroring the truncation policy.
pub fn mark_destination(
    family: &GeneratorFamily,
    x: &[f64],
    n: State,
    m: usize,
    mark: f64,
) -> Option<State> {
    let gamma = family.gamma(n);
    if gamma <= 0.0 {
        return None;
    }
    if mark >= 0.0 {
        let k = n + 1 + (mark / gamma).floor() as usize;
        if k > m {
            return None;
        }
        let lo = slot_lo(n, k, gamma);
        let mut width = family.rate(n, k, x);
        if k == m {
            width += family.tail_mass(n, m, x);
            debug_assert!(width <= gamma * (1.0 + 1e-9), "boundary slot overflow");
        }
        if mark < lo + width {
            Some(k)
        } else {
            None
        }
    } else {
        let below = ((-mark) / gamma).ceil() as usize;
        let k = match n.checked_sub(below) {
            Some(k) if k >= 1 => k,
            _ => return None,
        };
        let hi = slot_lo(n, k, gamma) + gamma;
        if mark >= hi - family.rate(n, k, x) {
            Some(k)
        } else {
            None
        }
    }
}

/// Lazily generated Poisson stream of `(time, mark)` events for one source
/// state: rate = window measure / α, marks uniform on the window
/// `[−(n−1)γ_n, (M−n)γ_n)`. Events are a pure function of (seed, state,
/// event index), so shared consumption by two chains is well defined.
#[derive(Debug, Clone)]
struct MarkStream {
    stream: Stream,
    window_lo: f64,
    window_hi: f64,
    rate: f64,
    next_time: f64,
    next_mark: f64,
}

impl MarkStream {
    fn new(root: &Stream, n: State, window_lo: f64, window_hi: f64, alpha: f64) -> Self {
        let mut stream = root.child(tags::MARKS_BASE + n as u64);
        let rate = (window_hi - window_lo).max(0.0) / alpha;
        let (next_time, next_mark) = if rate > 0.0 {
            (
                stream.next_exp(rate),
                stream.next_range(window_lo, window_hi),
            )
        } else {
            (f64::INFINITY, 0.0)
        };
        MarkStream {
            stream,
            window_lo,
            window_hi,
            rate,
            next_time,
            next_mark,
        }
    }

    /// First event strictly after `t`. Events at or before `t` are in the
    /// past for every chain (both live at the same simulation time) and
    /// are skipped.
    fn peek_after(&mut self, t: f64) -> (f64, f64) {
        while self.next_time <= t {
            self.advance();
        }
        (self.next_time, self.next_mark)
    }

    fn advance(&mut self) {
        if self.rate <= 0.0 {
            self.next_time = f64::INFINITY;
            return;
        }
        self.next_time += self.stream.next_exp(self.rate);
        self.next_mark = self.stream.next_range(self.window_lo, self.window_hi);
    }
}

/// Shared per-source-state marked point streams driving one or two chains.
/// Identical seed ⇒ identical streams.
#[derive(Debug, Clone)]
pub struct MarkedPointDriver {
    root: Stream,
    alpha: f64,
    m: usize,
    windows: Vec<(f64, f64)>,
    streams: Vec<Option<MarkStream>>,
}

impl MarkedPointDriver {
    /// `alpha` scales every stream's event rate by `1/alpha`.
    pub fn new(family: &GeneratorFamily, m: usize, seed: u64, alpha: f64) -> Self {
        let windows = (0..=m)
            .map(|n| {
                if n == 0 {
                    (0.0, 0.0)
                } else {
                    let gamma = family.gamma(n);
                    (-((n - 1) as f64) * gamma, (m - n) as f64 * gamma)
                }
            })
            .collect();
        MarkedPointDriver {
            root: Stream::new(seed),
            alpha,
            m,
            windows,
            streams: vec![None; m + 1],
        }
    }

    pub fn window(&self, n: State) -> (f64, f64) {
        self.windows[n]
    }

    pub fn truncation(&self) -> usize {
        self.m
    }

    fn stream_mut(&mut self, n: State) -> &mut MarkStream {
        if self.streams[n].is_none() {
            let (lo, hi) = self.windows[n];
            self.streams[n] = Some(MarkStream::new(&self.root, n, lo, hi, self.alpha));
        }
        self.streams[n].as_mut().unwrap()
    }

    /// Next event of state `n`'s stream strictly after time `t`.
    pub fn peek_after(&mut self, n: State, t: f64) -> (f64, f64) {
        self.stream_mut(n).peek_after(t)
    }

    /// Consume the head event of state `n`'s stream.
    pub fn consume(&mut self, n: State) {
        self.stream_mut(n).advance();
    }
}

/// One jump-path record: right-continuous piecewise-constant states.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpPath {
    pub initial: State,
    /// Jump times, strictly increasing.
    pub times: Vec<f64>,
    /// State entered at the corresponding jump time.
    pub states: Vec<State>,
    pub t_end: f64,
}

impl JumpPath {
    pub fn state_at(&self, t: f64) -> State {
        match self.times.partition_point(|&s| s <= t) {
            0 => self.initial,
            k => self.states[k - 1],
        }
    }

    pub fn final_state(&self) -> State {
        self.states.last().copied().unwrap_or(self.initial)
    }

    pub fn jump_count(&self) -> usize {
        self.times.len()
    }

    /// `(time, from, to)` triples of the jump log.
    pub fn events(&self) -> Vec<(f64, State, State)> {
        let mut from = self.initial;
        self.times
            .iter()
            .zip(&self.states)
            .map(|(&t, &s)| {
                let e = (t, from, s);
                from = s;
                e
            })
            .collect()
    }
}

/// A coupled pair of jump paths with the exact disagreement statistic
/// `(1/T)∫_0^T 1{Y_s ≠ Ỹ_s} ds` computed from the jump skeleton.
#[derive(Debug, Clone)]
pub struct CoupledChainPaths {
    pub first: JumpPath,
    pub second: JumpPath,
    pub seed: u64,
    pub occupation_mismatch: f64,
}

/// Simulate two frozen-parameter chains from the same initial state,
/// driven by the same per-source-state marked streams: each chain reacts
/// to the stream of its current state and jumps iff the shared mark lands
/// in its own layout at its own parameter. With `x = y` the paths coincide
/// identically; once the chains separate they consume different streams
/// and evolve conditionally independently until they meet again.
pub fn simulate_frozen_coupled(
    family: &GeneratorFamily,
    x: &[f64],
    y: &[f64],
    i0: State,
    t_end: f64,
    m: usize,
    seed: u64,
) -> Result<CoupledChainPaths> {
    if t_end <= 0.0 {
        return Err(Error::invalid("t_end", "horizon must be positive"));
    }
    if i0 == 0 || i0 > m {
        return Err(Error::invalid("i0", format!("initial state must be in 1..={m}")));
    }
    let mut driver = MarkedPointDriver::new(family, m, seed, 1.0);
    let mut run = CoupledRun::new(i0, i0, t_end);
    while let Some((t, src, mark, which)) = run.next_event(&mut driver) {
        run.apply(family, x, y, m, t, src, mark, which);
        driver.consume(src);
    }
    Ok(CoupledChainPaths {
        first: run.path_a,
        second: run.path_b,
        seed,
        occupation_mismatch: run.mismatch / t_end,
    })
}

/// Which chain(s) an event belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum EventTarget {
    First,
    Second,
    Both,
}

/// Shared state of a coupled jump simulation; also used by the two-scale
/// simulator, which interleaves diffusion steps between jump events.
pub(crate) struct CoupledRun {
    pub state_a: State,
    pub state_b: State,
    pub now: f64,
    pub t_end: f64,
    pub mismatch: f64,
    pub path_a: JumpPath,
    pub path_b: JumpPath,
}

impl CoupledRun {
    pub fn new(i0_a: State, i0_b: State, t_end: f64) -> Self {
        CoupledRun {
            state_a: i0_a,
            state_b: i0_b,
            now: 0.0,
            t_end,
            mismatch: 0.0,
            path_a: JumpPath {
                initial: i0_a,
                times: Vec::new(),
                states: Vec::new(),
                t_end,
            },
            path_b: JumpPath {
                initial: i0_b,
                times: Vec::new(),
                states: Vec::new(),
                t_end,
            },
        }
    }

    /// Advance to the next candidate event before `t_end`, accumulating the
    /// disagreement clock; `None` when the horizon is reached.
    pub fn next_event(
        &mut self,
        driver: &mut MarkedPointDriver,
    ) -> Option<(f64, State, f64, EventTarget)> {
        self.next_event_until(driver, self.t_end)
    }

    /// As [`next_event`](Self::next_event) but stopping at `horizon`
    /// (used by the grid-stepped two-scale simulator).
    pub fn next_event_until(
        &mut self,
        driver: &mut MarkedPointDriver,
        horizon: f64,
    ) -> Option<(f64, State, f64, EventTarget)> {
        let shared = self.state_a == self.state_b;
        let (ta, mark_a) = driver.peek_after(self.state_a, self.now);
        let (tb, mark_b) = if shared {
            (ta, mark_a)
        } else {
            driver.peek_after(self.state_b, self.now)
        };
        let t_next = ta.min(tb);
        let segment_end = t_next.min(horizon);
        if !shared {
            self.mismatch += segment_end - self.now;
        }
        if t_next > horizon {
            self.now = horizon;
            return None;
        }
        self.now = t_next;
        if shared {
            Some((t_next, self.state_a, mark_a, EventTarget::Both))
        } else if ta <= tb {
            Some((t_next, self.state_a, mark_a, EventTarget::First))
        } else {
            Some((t_next, self.state_b, mark_b, EventTarget::Second))
        }
    }

    /// Apply one candidate event and consume it from its stream.
    #[allow(clippy::too_many_arguments)]
    pub fn apply(
        &mut self,
        family: &GeneratorFamily,
        x: &[f64],
        y: &[f64],
        m: usize,
        t: f64,
        src: State,
        mark: f64,
        which: EventTarget,
    ) {
        if matches!(which, EventTarget::First | EventTarget::Both) {
            if let Some(k) = mark_destination(family, x, src, m, mark) {
                self.state_a = k;
                self.path_a.times.push(t);
                self.path_a.states.push(k);
            }
        }
        if matches!(which, EventTarget::Second | EventTarget::Both) {
            if let Some(k) = mark_destination(family, y, src, m, mark) {
                self.state_b = k;
                self.path_b.times.push(t);
                self.path_b.states.push(k);
            }
        }
    }
}

/// One row of [`coupling_bound_report`].
#[derive(Debug, Clone)]
pub struct CouplingBoundRow {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Monte Carlo mean of the disagreement statistic.
    pub lhs_mean: f64,
    pub lhs_ci_lo: f64,
    pub lhs_ci_hi: f64,
    /// `T · ‖Q(x) − Q(y)‖_ℓ1`.
    pub rhs_bound: f64,
    /// Set when the 99% CI lower bound exceeds the theoretical bound.
    pub flagged: bool,
}

/// Estimate the disagreement statistic for each parameter pair over
/// independent replicates and compare with the frozen-parameter coupling
/// bound `T·‖Q(x)−Q(y)‖_ℓ1`. The 99% CI uses ±2.576 standard errors.
/// Replicates run in parallel with per-replicate derived seeds and are
/// aggregated in replicate order.
#[allow(clippy::too_many_arguments)]
pub fn coupling_bound_report(
    family: &GeneratorFamily,
    pairs: &[(Vec<f64>, Vec<f64>)],
    i0: State,
    t_end: f64,
    m: usize,
    replicates: usize,
    seed: u64,
) -> Result<Vec<CouplingBoundRow>> {
    if replicates < 100 {
        return Err(Error::invalid("replicates", "need at least 100"));
    }
    let root = Stream::new(seed);
    pairs
        .iter()
        .enumerate()
        .map(|(pair_idx, (x, y))| {
            let pair_root = root.child(tags::CELL_BASE + pair_idx as u64);
            let stats: Vec<f64> = (0..replicates)
                .into_par_iter()
                .map(|r| {
                    let rep_seed = pair_root.child(tags::REPLICATE_BASE + r as u64).key();
                    let paths = simulate_frozen_coupled(family, x, y, i0, t_end, m, rep_seed)?;
                    Ok(paths.occupation_mismatch)
                })
                .collect::<Result<Vec<f64>>>()?;
            let n = stats.len() as f64;
            let mean = stats.iter().sum::<f64>() / n;
            let var = stats.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1.0);
            let se = (var / n).sqrt();
            let bound = t_end * ell1_distance(family, x, y, m);
            Ok(CouplingBoundRow {
                x: x.clone(),
                y: y.clone(),
                lhs_mean: mean,
                lhs_ci_lo: mean - 2.576 * se,
                lhs_ci_hi: mean + 2.576 * se,
                rhs_bound: bound,
                flagged: mean - 2.576 * se > bound,
            })
        })
        .collect()
}
