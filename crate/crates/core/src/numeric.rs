//! Small dense helpers: central finite differences and checked inverses.

use nalgebra::{DMatrix, DVector};

use crate::error::{PhsError, Result};

/// Condition-number threshold above which a matrix is treated as singular.
pub const SINGULAR_CONDITION: f64 = 1e12;

/// Central-difference step for coordinate value `v`.
pub fn fd_step(v: f64) -> f64 {
    1e-6 * v.abs().max(1.0)
}

/// Outer step used when differentiating an already finite-differenced
/// gradient; balances truncation against the inner rounding noise.
pub(crate) fn nested_fd_step(v: f64) -> f64 {
    1e-4 * v.abs().max(1.0)
}

pub fn gradient_fd(f: &dyn Fn(&[f64]) -> f64, x: &[f64]) -> DVector<f64> {
    let mut probe = x.to_vec();
    DVector::from_iterator(
        x.len(),
        (0..x.len()).map(|i| {
            let h = fd_step(x[i]);
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        }),
    )
}

/// Jacobian of `g` by central differences; column `j` holds ∂g/∂x_j.
pub fn jacobian_fd(
    g: &dyn Fn(&[f64]) -> DVector<f64>,
    x: &[f64],
    rows: usize,
    step: fn(f64) -> f64,
) -> DMatrix<f64> {
    let mut jac = DMatrix::zeros(rows, x.len());
    let mut probe = x.to_vec();
    for j in 0..x.len() {
        let h = step(x[j]);
        probe[j] = x[j] + h;
        let up = g(&probe);
        probe[j] = x[j] - h;
        let down = g(&probe);
        probe[j] = x[j];
        for i in 0..rows {
            jac[(i, j)] = (up[i] - down[i]) / (2.0 * h);
        }
    }
    jac
}

fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Explicit inverse of a small square matrix together with its
/// infinity-norm condition estimate.
pub fn inverse_with_condition(m: &DMatrix<f64>, what: &'static str) -> Result<(DMatrix<f64>, f64)> {
    if !m.is_square() {
        return Err(PhsError::DimensionMismatch {
            context: what,
            expected: m.nrows(),
            actual: m.ncols(),
        });
    }
    let inv = m.clone().try_inverse().ok_or(PhsError::Singular {
        what,
        condition: f64::INFINITY,
    })?;
    let condition = inf_norm(m) * inf_norm(&inv);
    if !condition.is_finite() || condition > SINGULAR_CONDITION {
        return Err(PhsError::Singular { what, condition });
    }
    Ok((inv, condition))
}

pub fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_of_cubic() {
        let f = |x: &[f64]| x[0].powi(3) + 2.0 * x[0] * x[1];
        let g = gradient_fd(&f, &[1.5, -2.0]);
        assert!((g[0] - (3.0 * 2.25 - 4.0)).abs() < 1e-6);
        assert!((g[1] - 3.0).abs() < 1e-6);
    }

    #[test]
    fn singular_inverse_is_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(
            inverse_with_condition(&m, "test"),
            Err(PhsError::Singular { .. })
        ));
        let nearly = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1e-14]);
        assert!(inverse_with_condition(&nearly, "test").is_err());
    }

    #[test]
    fn condition_of_diagonal() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 0.5]);
        let (inv, cond) = inverse_with_condition(&m, "test").unwrap();
        assert_eq!(inv[(0, 0)], 0.25);
        assert_eq!(cond, 8.0);
    }
}
