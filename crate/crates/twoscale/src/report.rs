//! CSV and manifest writers. All numeric output uses Rust's shortest
//! round-trip float formatting, so identical inputs produce byte-identical
//! files regardless of thread count or platform locale.

use std::collections::BTreeMap;
use std::io::Write;

use crate::averaging::{ConvergenceReport, OdePath};
use crate::chain::{ErgodicRateFit, ProbabilityVector};
use crate::error::Result;
use crate::regularity::{BlowupRow, ProbeRow};
use crate::sim::PathSample;
use crate::skorokhod::{CoupledChainPaths, CouplingBoundRow};

fn join_point(x: &[f64]) -> String {
    x.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

/// Rows `(i, pi_i)` for an invariant measure.
pub fn write_invariant_csv(w: &mut dyn Write, pi: &ProbabilityVector) -> Result<()> {
    writeln!(w, "i,pi")?;
    for (idx, weight) in pi.weights().iter().enumerate() {
        writeln!(w, "{},{}", idx + 1, weight)?;
    }
    Ok(())
}

/// The fitted decay envelope, one row.
pub fn write_fit_csv(w: &mut dyn Write, fit: &ErgodicRateFit) -> Result<()> {
    writeln!(w, "c,lambda,t_lo,t_hi,residual")?;
    writeln!(
        w,
        "{},{},{},{},{}",
        fit.c, fit.lambda, fit.time_window.0, fit.time_window.1, fit.residual
    )?;
    Ok(())
}

/// Rows `(t, tv_sup)` of a total-variation decay table.
pub fn write_decay_csv(w: &mut dyn Write, times: &[f64], decays: &[f64]) -> Result<()> {
    writeln!(w, "t,tv_sup")?;
    for (t, d) in times.iter().zip(decays) {
        writeln!(w, "{t},{d}")?;
    }
    Ok(())
}

/// Blow-up table rows `(m, x, y, beta, tv, ratio, lower_bound)`.
pub fn write_blowup_csv(w: &mut dyn Write, rows: &[BlowupRow]) -> Result<()> {
    writeln!(w, "m,x,y,beta,tv,ratio,lower_bound")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.m, r.x, r.y, r.beta, r.tv, r.ratio, r.lower_bound
        )?;
    }
    Ok(())
}

/// Sampled-pair probe rows `(pair_id, x, y, beta, tv, ratio)`.
pub fn write_pair_probe_csv(w: &mut dyn Write, rows: &[ProbeRow]) -> Result<()> {
    writeln!(w, "pair_id,x,y,beta,tv,ratio")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.pair_id, r.x, r.y, r.beta, r.tv, r.ratio
        )?;
    }
    Ok(())
}

/// Coupling-bound rows
/// `(pair_id, x, y, lhs_mean, lhs_ci_lo, lhs_ci_hi, rhs_bound, flagged)`.
pub fn write_coupling_csv(w: &mut dyn Write, rows: &[CouplingBoundRow]) -> Result<()> {
    writeln!(w, "pair_id,x,y,lhs_mean,lhs_ci_lo,lhs_ci_hi,rhs_bound,flagged")?;
    for (idx, r) in rows.iter().enumerate() {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            idx,
            join_point(&r.x),
            join_point(&r.y),
            r.lhs_mean,
            r.lhs_ci_lo,
            r.lhs_ci_hi,
            r.rhs_bound,
            r.flagged
        )?;
    }
    Ok(())
}

/// Path rows `(t, X_1..X_d, Y)` on the EM grid.
pub fn write_path_csv(w: &mut dyn Write, path: &PathSample) -> Result<()> {
    let coords: Vec<String> = (1..=path.dim_x).map(|i| format!("x{i}")).collect();
    writeln!(w, "t,{},y", coords.join(","))?;
    for k in 0..path.grid_len() {
        let xs: Vec<String> = path.position(k).iter().map(|v| v.to_string()).collect();
        writeln!(w, "{},{},{}", path.times[k], xs.join(","), path.state_at_grid(k))?;
    }
    Ok(())
}

/// Averaged-ODE path rows `(t, xbar_1..xbar_d)`.
pub fn write_ode_path_csv(w: &mut dyn Write, path: &OdePath) -> Result<()> {
    let coords: Vec<String> = (1..=path.dim).map(|i| format!("xbar{i}")).collect();
    writeln!(w, "t,{}", coords.join(","))?;
    for (k, t) in path.times.iter().enumerate() {
        let xs: Vec<String> = path.position(k).iter().map(|v| v.to_string()).collect();
        writeln!(w, "{t},{}", xs.join(","))?;
    }
    Ok(())
}

/// Convergence rows `(eps, alpha, kind, testfn, mean_error, std_error,
/// replicates)`.
pub fn write_convergence_csv(w: &mut dyn Write, report: &ConvergenceReport) -> Result<()> {
    writeln!(w, "eps,alpha,kind,testfn,mean_error,std_error,replicates")?;
    for c in &report.cells {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            c.eps, c.alpha, c.kind, c.test_fn, c.mean_error, c.std_error, c.replicates
        )?;
    }
    Ok(())
}

/// Jump-log rows `(replicate, time, chain_id, from_state, to_state)` for
/// coupled runs.
pub fn write_jump_log_csv(
    w: &mut dyn Write,
    runs: &[(usize, &CoupledChainPaths)],
) -> Result<()> {
    writeln!(w, "replicate,time,chain_id,from_state,to_state")?;
    for (replicate, paths) in runs {
        for (chain_id, path) in [(0usize, &paths.first), (1, &paths.second)] {
            for (t, from, to) in path.events() {
                writeln!(w, "{replicate},{t},{chain_id},{from},{to}")?;
            }
        }
    }
    Ok(())
}

/// Sorted `key=value` manifest of every setting that influenced a run.
pub fn write_manifest(w: &mut dyn Write, entries: &BTreeMap<String, String>) -> Result<()> {
    for (k, v) in entries {
        writeln!(w, "{k}={v}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invariant_csv_shape() {
        let pi = ProbabilityVector::new(vec![0.5, 0.25, 0.25]).unwrap();
        let mut buf = Vec::new();
        write_invariant_csv(&mut buf, &pi).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("i,pi"));
        assert_eq!(lines.next(), Some("1,0.5"));
        assert_eq!(lines.next(), Some("2,0.25"));
        assert_eq!(lines.next(), Some("3,0.25"));
        assert_eq!(lines.next(), None);
    }

    #[test]
    fn manifest_is_sorted() {
        let mut entries = BTreeMap::new();
        entries.insert("zeta".to_string(), "1".to_string());
        entries.insert("alpha".to_string(), "0.5".to_string());
        let mut buf = Vec::new();
        write_manifest(&mut buf, &entries).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "alpha=0.5\nzeta=1\n");
    }
}
