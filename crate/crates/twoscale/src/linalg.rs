//! Small dense linear algebra: LU solve with partial pivoting.
//!
//! The only dense solve in the crate is the augmented stationarity system
//! (πQ = 0, Σπ = 1) for truncations up to a couple of thousand states, so a
//! plain row-major LU is all that is needed.

use crate::error::{Error, Result};

/// Solve `A x = b` in place by LU with partial pivoting.
/// `a` is row-major `n × n` and is destroyed.
pub(crate) fn lu_solve(a: &mut [f64], b: &mut [f64], n: usize) -> Result<()> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);

    for col in 0..n {
        // Pivot: largest magnitude on or below the diagonal.
        let mut pivot_row = col;
        let mut pivot_val = a[col * n + col].abs();
        for row in (col + 1)..n {
            let v = a[row * n + col].abs();
            if v > pivot_val {
                pivot_val = v;
                pivot_row = row;
            }
        }
        if pivot_val == 0.0 || !pivot_val.is_finite() {
            return Err(Error::NumericalFailure(format!(
                "singular matrix at column {col} (pivot {pivot_val})"
            )));
        }
        if pivot_row != col {
            for k in 0..n {
                a.swap(col * n + k, pivot_row * n + k);
            }
            b.swap(col, pivot_row);
        }

        let inv_pivot = 1.0 / a[col * n + col];
        for row in (col + 1)..n {
            let factor = a[row * n + col] * inv_pivot;
            if factor == 0.0 {
                continue;
            }
            a[row * n + col] = 0.0;
            let (upper, lower) = a.split_at_mut(row * n);
            let src = &upper[col * n + col + 1..col * n + n];
            let dst = &mut lower[col + 1..n];
            for (d, s) in dst.iter_mut().zip(src) {
                *d -= factor * s;
            }
            b[row] -= factor * b[col];
        }
    }

    // Back substitution.
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in (row + 1)..n {
            acc -= a[row * n + k] * b[k];
        }
        b[row] = acc / a[row * n + row];
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_known_system() {
        // 3x3 with known solution (1, -2, 3).
        let mut a = vec![2.0, 1.0, -1.0, -3.0, -1.0, 2.0, -2.0, 1.0, 2.0];
        let x_true = [1.0, -2.0, 3.0];
        let mut b: Vec<f64> = (0..3)
            .map(|i| (0..3).map(|j| a[i * 3 + j] * x_true[j]).sum())
            .collect();
        lu_solve(&mut a, &mut b, 3).unwrap();
        for (got, want) in b.iter().zip(x_true) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn rejects_singular() {
        let mut a = vec![1.0, 2.0, 2.0, 4.0];
        let mut b = vec![1.0, 2.0];
        assert!(lu_solve(&mut a, &mut b, 2).is_err());
    }

    #[test]
    fn random_residual_small() {
        // Seeded congruential fill; check residual ‖Ax-b‖∞.
        let n = 40;
        let mut state = 0x1234_5678_u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let a: Vec<f64> = (0..n * n).map(|_| next()).collect();
        let b: Vec<f64> = (0..n).map(|_| next()).collect();
        let mut a_work = a.clone();
        let mut x = b.clone();
        lu_solve(&mut a_work, &mut x, n).unwrap();
        for i in 0..n {
            let dot: f64 = (0..n).map(|j| a[i * n + j] * x[j]).sum();
            assert!((dot - b[i]).abs() < 1e-9, "row {i} residual {}", dot - b[i]);
        }
    }
}
