//! Numerical probes of the regularity of `x ↦ π^x` in total variation:
//! bounded difference quotients for strongly ergodic families, and the
//! divergent sequence showing that the birth-death family with geometric
//! invariant measure is not Hölder of any exponent.
//!
//! The blow-up table follows the witness pair `x = 1 − 1/m`,
//! `y = x·(2m−2)/(2m−1)`: the exact total variation between the two
//! geometric measures is summed to machine tail, and the lower bound
//! `(x^m − y^m)/|x−y|^β` grows without bound in `m` for every
//! `β ∈ (0, 1]`.

use crate::chain::{invariant_measure, total_variation, truncate, GeneratorFamily};
use crate::error::{Error, Result};
use crate::rng::Stream;

/// `‖π^x − π^y‖_var / |x−y|^β` with both measures computed from the
/// truncated stationary solve.
pub fn pi_distance_ratio(
    family: &GeneratorFamily,
    x: &[f64],
    y: &[f64],
    beta: f64,
    m: usize,
) -> Result<f64> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::invalid("beta", "exponent must be in (0, 1]"));
    }
    let dist = euclid_dist(x, y);
    if dist == 0.0 {
        return Err(Error::invalid("y", "need distinct parameter points"));
    }
    let pi_x = invariant_measure(&truncate(family, x, m)?, 1e-10)?;
    let pi_y = invariant_measure(&truncate(family, y, m)?, 1e-10)?;
    Ok(total_variation(&pi_x, &pi_y)? / dist.powf(beta))
}

fn euclid_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// One sampled pair of a regularity probe.
#[derive(Debug, Clone)]
pub struct ProbeRow {
    pub pair_id: usize,
    pub x: f64,
    pub y: f64,
    pub beta: f64,
    pub tv: f64,
    pub ratio: f64,
}

/// Sample `n_pairs` parameter pairs with log-uniform separation in
/// `[1e-4, 1]` inside `domain` and compute the TV ratio for each. Exposes
/// both local and global regimes of the difference quotient.
pub fn sample_pair_ratios(
    family: &GeneratorFamily,
    domain: (f64, f64),
    n_pairs: usize,
    beta: f64,
    m: usize,
    seed: u64,
) -> Result<Vec<ProbeRow>> {
    if !(domain.1 > domain.0) {
        return Err(Error::invalid("domain", "need a nonempty interval"));
    }
    let mut stream = Stream::new(seed);
    let mut rows = Vec::with_capacity(n_pairs);
    for pair_id in 0..n_pairs {
        let (x, y) = loop {
            let x = stream.next_range(domain.0, domain.1);
            let sep = 10f64.powf(stream.next_range(-4.0, 0.0));
            let dir = if stream.next_f64() < 0.5 { -1.0 } else { 1.0 };
            let y = (x + dir * sep).clamp(domain.0, domain.1);
            if (x - y).abs() > 1e-9 {
                break (x, y);
            }
        };
        let pi_x = invariant_measure(&truncate(family, &[x], m)?, 1e-10)?;
        let pi_y = invariant_measure(&truncate(family, &[y], m)?, 1e-10)?;
        let tv = total_variation(&pi_x, &pi_y)?;
        rows.push(ProbeRow {
            pair_id,
            x,
            y,
            beta,
            tv,
            ratio: tv / (x - y).abs().powf(beta),
        });
    }
    Ok(rows)
}

/// Exact total variation between the geometric measures `(1−x)x^{i−1}` and
/// `(1−y)y^{i−1}`, summed term by term to the requested length. With
/// `terms` large enough that both geometric tails are below machine
/// precision, this is the infinite-sum value.
pub fn geometric_tv(x: f64, y: f64, terms: usize) -> f64 {
    (1..=terms)
        .map(|i| {
            let e = (i - 1) as i32;
            ((1.0 - x) * x.powi(e) - (1.0 - y) * y.powi(e)).abs()
        })
        .sum()
}

/// One row of the non-Hölder blow-up table.
#[derive(Debug, Clone)]
pub struct BlowupRow {
    pub m: usize,
    pub x: f64,
    pub y: f64,
    pub beta: f64,
    /// Exact TV from the closed-form measures.
    pub tv: f64,
    /// `tv / |x−y|^β`.
    pub ratio: f64,
    /// `(x^m − y^m)/|x−y|^β`, the provable lower bound on the ratio.
    pub lower_bound: f64,
}

/// Blow-up table along the witness sequence `m = 2..=m_max`. `series_terms`
/// is the truncation of the TV series; `series_terms ≥ 60·m_max` is
/// enforced so geometric tails at `x = 1 − 1/m_max` are below 1e-12.
pub fn blowup_table(m_max: usize, beta: f64, series_terms: usize) -> Result<Vec<BlowupRow>> {
    if m_max < 2 {
        return Err(Error::invalid("m_max", "need m_max >= 2"));
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::invalid("beta", "exponent must be in (0, 1]"));
    }
    if series_terms < 60 * m_max {
        return Err(Error::Precondition(format!(
            "series truncation {series_terms} too small: need at least 60·m_max = {}",
            60 * m_max
        )));
    }
    Ok((2..=m_max)
        .map(|m| {
            let x = 1.0 - 1.0 / m as f64;
            let y = (2.0 * m as f64 - 2.0) / (2.0 * m as f64 - 1.0) * x;
            let sep = (x - y).abs();
            let tv = geometric_tv(x, y, series_terms);
            let lower = (x.powi(m as i32) - y.powi(m as i32)) / sep.powf(beta);
            BlowupRow {
                m,
                x,
                y,
                beta,
                tv,
                ratio: tv / sep.powf(beta),
                lower_bound: lower,
            }
        })
        .collect())
}
